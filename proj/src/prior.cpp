#include "nfpose/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace nfpose {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kRidge = 1e-6;

double log_sum_exp(const VecX& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

PriorEval nf_prior_ambient(const FlowModel& flow, const VecX& theta) {
  double lp = 0.0;
  VecX g = flow.log_prob_gradient(theta, &lp);
  return {-lp, -g};
}

PriorEval nf_prior_latent(const VecX& z) {
  return {0.5 * static_cast<double>(z.size()) * kLog2Pi + 0.5 * z.squaredNorm(), z};
}

GmmPrior::GmmPrior(std::vector<GmmMode> modes) : modes_(std::move(modes)) { finalize(); }

void GmmPrior::finalize() {
  if (modes_.empty()) throw Error(ErrorCode::InvalidConfig, "mixture without modes");
  const Eigen::Index d = modes_.front().mean.size();
  double total = 0.0;
  for (const auto& m : modes_) {
    if (m.mean.size() != d || m.covariance.rows() != d || m.covariance.cols() != d) {
      throw Error(ErrorCode::DimensionMismatch, "mixture mode dimensions");
    }
    if (!(m.weight > 0.0)) throw Error(ErrorCode::InvalidConfig, "mixture weights must be positive");
    total += m.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    for (auto& m : modes_) m.weight /= total;
  }
  chol_.clear();
  log_det_.clear();
  for (auto& m : modes_) {
    m.covariance = 0.5 * (m.covariance + m.covariance.transpose());
    Eigen::LLT<MatX> llt(m.covariance);
    if (llt.info() != Eigen::Success) {
      m.covariance.diagonal().array() += kRidge;
      llt.compute(m.covariance);
      if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "covariance not positive definite");
    }
    log_det_.push_back(2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum());
    chol_.push_back(std::move(llt));
  }
}

double GmmPrior::mode_cost(int j, const VecX& theta) const {
  const auto& m = modes_[j];
  const VecX r = chol_[j].matrixL().solve(theta - m.mean);
  return -std::log(m.weight) + 0.5 * (static_cast<double>(theta.size()) * kLog2Pi + log_det_[j] + r.squaredNorm());
}

VecX GmmPrior::mode_gradient(int j, const VecX& theta) const { return chol_[j].solve(theta - modes_[j].mean); }

double GmmPrior::mixture_nll(const VecX& theta) const {
  VecX ll(num_modes());
  for (int j = 0; j < num_modes(); ++j) ll[j] = -mode_cost(j, theta);
  return -log_sum_exp(ll);
}

PriorEval gmm_prior(const GmmPrior& gmm, const VecX& theta, int* selected) {
  if (theta.size() != gmm.dim()) throw Error(ErrorCode::DimensionMismatch, "prior dimension");
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int j = 0; j < gmm.num_modes(); ++j) {
    const double c = gmm.mode_cost(j, theta);
    if (c < best_cost) {
      best_cost = c;
      best = j;
    }
  }
  if (selected) *selected = best;
  return {best_cost, gmm.mode_gradient(best, theta)};
}

GmmPrior gmm_fit(const MatX& data, const GmmFitConfig& cfg) {
  const Eigen::Index d = data.rows(), n = data.cols();
  const int k = cfg.modes;
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "no samples");
  if (k < 1 || n < k) throw Error(ErrorCode::InvalidConfig, "need at least as many samples as modes");
  const bool diagonal = cfg.diagonal.value_or(d > 32);
  std::mt19937_64 rng(cfg.seed);

  // k-means++ seeding.
  MatX centers(d, k);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.col(0) = data.col(pick(rng));
  VecX d2 = (data.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.col(c) = data.col(chosen);
    d2 = d2.cwiseMin((data.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }

  const VecX global_mean = data.rowwise().mean();
  const MatX centered = data.colwise() - global_mean;
  MatX global_cov = centered * centered.transpose() / static_cast<double>(n);
  if (diagonal) global_cov = MatX(global_cov.diagonal().asDiagonal());
  global_cov.diagonal().array() += kRidge;

  std::vector<GmmMode> modes(k);
  for (int c = 0; c < k; ++c) modes[c] = {1.0 / k, centers.col(c), global_cov};
  GmmPrior gmm(modes);

  MatX resp(n, k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      VecX lj(k);
      for (int c = 0; c < k; ++c) lj[c] = -gmm.mode_cost(c, data.col(i));
      const double lse = log_sum_exp(lj);
      ll += lse;
      resp.row(i) = (lj.array() - lse).exp().transpose();
    }
    ll /= static_cast<double>(n);
    for (int c = 0; c < k; ++c) {
      const double nk = resp.col(c).sum();
      GmmMode& m = modes[c];
      if (nk < 1e-10) {
        // Collapsed component: keep it alive with a negligible weight.
        m.weight = 1e-10;
        m.covariance = global_cov;
        continue;
      }
      m.weight = nk / static_cast<double>(n);
      m.mean = data * resp.col(c) / nk;
      const MatX dev = data.colwise() - m.mean;
      if (diagonal) {
        VecX var = (dev.array().square().matrix() * resp.col(c)) / nk;
        m.covariance = MatX(var.asDiagonal());
      } else {
        m.covariance = dev * resp.col(c).asDiagonal() * dev.transpose() / nk;
      }
      m.covariance.diagonal().array() += kRidge;
    }
    gmm = GmmPrior(modes);
    if (std::isfinite(prev_ll) && std::abs(ll - prev_ll) <= cfg.tolerance * std::max(1.0, std::abs(prev_ll))) break;
    prev_ll = ll;
  }
  return gmm;
}

}  // namespace nfpose
