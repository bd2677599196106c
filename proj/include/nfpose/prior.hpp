#pragma once

#include "nfpose/flow.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace nfpose {

// Negative log-likelihood (nats) and its gradient.
struct PriorEval {
  double value = 0.0;
  VecX gradient;
};

// -log p(theta) through the flow, with d/dtheta.
PriorEval nf_prior_ambient(const FlowModel& flow, const VecX& theta);
// -log N(z; 0, I), gradient z.
PriorEval nf_prior_latent(const VecX& z);

struct GmmMode {
  double weight = 0.0;
  VecX mean;
  MatX covariance;
};

// Gaussian mixture used through its closest mode. Each mode caches a Cholesky
// factor and log-determinant; call finalize() after editing `modes`.
class GmmPrior {
 public:
  GmmPrior() = default;
  explicit GmmPrior(std::vector<GmmMode> modes);

  int dim() const { return modes_.empty() ? 0 : static_cast<int>(modes_.front().mean.size()); }
  int num_modes() const { return static_cast<int>(modes_.size()); }
  const std::vector<GmmMode>& modes() const { return modes_; }

  // -log pi_j - log N(theta; mu_j, Sigma_j).
  double mode_cost(int j, const VecX& theta) const;
  // d mode_cost / d theta = Sigma_j^{-1} (theta - mu_j).
  VecX mode_gradient(int j, const VecX& theta) const;
  // Exact mixture negative log-likelihood.
  double mixture_nll(const VecX& theta) const;

  // Throws SingularCovariance when a covariance is not positive definite even
  // after adding 1e-6 I.
  void finalize();

 private:
  std::vector<GmmMode> modes_;
  std::vector<Eigen::LLT<MatX>> chol_;
  std::vector<double> log_det_;
};

struct GmmFitConfig {
  int modes = 8;
  // Diagonal covariances; defaults to true when D > 32.
  std::optional<bool> diagonal;
  int max_iterations = 200;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
};

// EM with k-means++ seeding. Columns of `data` are samples; needs at least
// `modes` samples. Throws EmptyDataset, InvalidConfig, SingularCovariance.
GmmPrior gmm_fit(const MatX& data, const GmmFitConfig& cfg);

// Closest-mode value min_j [-log pi_j - log N(theta; mu_j, Sigma_j)]; the
// gradient is taken from the selected mode (lowest index on ties).
PriorEval gmm_prior(const GmmPrior& gmm, const VecX& theta, int* selected = nullptr);

}  // namespace nfpose
