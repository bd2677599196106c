#include "nfpose/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace nfpose {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kAlphaFloor = 1e-4;
constexpr double kMinAbsDet = 1e-12;
// Column chunk of batched kernels. Fixed so that the chunked parallel path
// performs exactly the serial arithmetic.
constexpr Eigen::Index kChunk = 64;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t layer_param_count(const FlowLayer& layer) {
  return std::visit(overloaded{
                        [](const InvertibleLinear& l) -> std::size_t { return l.weight.size() + l.bias.size(); },
                        [](const PReLU&) -> std::size_t { return 1; },
                        [](const RealNVPStep& l) -> std::size_t {
                          return l.w1.size() + l.b1.size() + l.w2.size() + l.b2.size() + l.w3.size() + l.b3.size();
                        },
                    },
                    layer);
}

// Visits every parameter block of `layer` in declared order.
template <class Layer, class Fn>
void for_each_block(Layer& layer, Fn&& fn) {
  std::visit(overloaded{
                 [&](auto& l) {
                   using T = std::decay_t<decltype(l)>;
                   if constexpr (std::is_same_v<T, InvertibleLinear>) {
                     fn(l.weight.data(), l.weight.size());
                     fn(l.bias.data(), l.bias.size());
                   } else if constexpr (std::is_same_v<T, PReLU>) {
                     fn(&l.rho, Eigen::Index{1});
                   } else {
                     fn(l.w1.data(), l.w1.size());
                     fn(l.b1.data(), l.b1.size());
                     fn(l.w2.data(), l.w2.size());
                     fn(l.b2.data(), l.b2.size());
                     fn(l.w3.data(), l.w3.size());
                     fn(l.b3.data(), l.b3.size());
                   }
                 },
             },
             layer);
}

using MapR = Eigen::Map<MatR>;
using MapV = Eigen::Map<VecX>;

}  // namespace

double PReLU::alpha() const { return softplus(rho) + kAlphaFloor; }

std::string to_string(FlowKind kind) { return kind == FlowKind::LowCapacity ? "low_capacity" : "realnvp"; }

FlowKind flow_kind_from_string(const std::string& s) {
  if (s == "low_capacity" || s == "prelu") return FlowKind::LowCapacity;
  if (s == "realnvp" || s == "real_nvp" || s == "rnvp") return FlowKind::RealNVP;
  throw Error(ErrorCode::ConfigError, "unknown flow architecture '" + s + "'");
}

FlowModel::FlowModel(const FlowArchitecture& arch, std::uint64_t seed) : arch_(arch) {
  if (arch.dim < 1 || arch.blocks < 0 || arch.hidden < 1) throw Error(ErrorCode::InvalidConfig, "flow architecture");
  if (arch.kind == FlowKind::RealNVP && arch.dim < 2) throw Error(ErrorCode::InvalidConfig, "coupling needs dim >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = arch.dim;
  auto make_linear = [&] {
    InvertibleLinear l;
    l.weight = MatR::Identity(d, d);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] += 1e-3 * gauss(rng);
    l.bias = VecX::Zero(d);
    return l;
  };
  layers_.push_back(make_linear());
  for (int k = 0; k < arch.blocks; ++k) {
    if (arch.kind == FlowKind::LowCapacity) {
      PReLU p;
      p.rho = std::log(std::expm1(1.0 - kAlphaFloor));
      layers_.push_back(p);
    } else {
      RealNVPStep c;
      c.split = d / 2;
      const int tail = d - c.split;
      const int h = arch.hidden;
      auto fill = [&](MatR& m, int rows, int cols) {
        m.resize(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 1e-2 * gauss(rng);
      };
      fill(c.w1, h, c.split);
      fill(c.w2, h, h);
      fill(c.w3, 2 * tail, h);
      c.b1 = VecX::Zero(h);
      c.b2 = VecX::Zero(h);
      c.b3 = VecX::Zero(2 * tail);
      layers_.push_back(std::move(c));
    }
    layers_.push_back(make_linear());
  }
  refresh();
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += layer_param_count(l);
  return n;
}

std::vector<double> FlowModel::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    for_each_block(l, [&](const double* p, Eigen::Index n) { out.insert(out.end(), p, p + n); });
  }
  return out;
}

void FlowModel::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::DimensionMismatch, "flow parameter count");
  std::size_t off = 0;
  for (auto& l : layers_) {
    for_each_block(l, [&](double* p, Eigen::Index n) {
      std::copy(flat.begin() + off, flat.begin() + off + n, p);
      off += n;
    });
  }
  refresh();
}

void FlowModel::refresh() {
  for (auto& layer : layers_) {
    if (auto* l = std::get_if<InvertibleLinear>(&layer)) {
      l->lu.compute(MatX(l->weight));
      const VecX diag = l->lu.matrixLU().diagonal();
      double s = 0.0;
      for (Eigen::Index i = 0; i < diag.size(); ++i) s += std::log(std::abs(diag[i]));
      l->log_abs_det = s;
      if (!std::isfinite(s) || s < std::log(kMinAbsDet)) {
        throw Error(ErrorCode::NonInvertibleLayer, "|det W| below 1e-12");
      }
    } else if (auto* p = std::get_if<PReLU>(&layer)) {
      if (!std::isfinite(p->rho)) throw Error(ErrorCode::NonInvertibleLayer, "PReLU slope not finite");
    }
  }
}

void FlowModel::check_dim(Eigen::Index rows) const {
  if (rows != arch_.dim) throw Error(ErrorCode::DimensionMismatch, "flow input dimension");
}

MatX FlowModel::forward_batch(const MatX& x, VecX* logdet, FlowTape* tape) const {
  check_dim(x.rows());
  const Eigen::Index batch = x.cols();
  MatX h = x;
  VecX ld = VecX::Zero(batch);
  if (tape) {
    tape->inputs.clear();
    tape->hidden1.assign(layers_.size(), MatX());
    tape->hidden2.assign(layers_.size(), MatX());
    tape->scale.assign(layers_.size(), MatX());
  }
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    if (tape) tape->inputs.push_back(h);
    std::visit(overloaded{
                   [&](const InvertibleLinear& l) {
                     h = (l.weight * h).colwise() + l.bias;
                     ld.array() += l.log_abs_det;
                   },
                   [&](const PReLU& p) {
                     const double a = p.alpha();
                     const double la = std::log(a);
                     for (Eigen::Index c = 0; c < batch; ++c) {
                       int neg = 0;
                       for (Eigen::Index r = 0; r < h.rows(); ++r) {
                         if (h(r, c) < 0.0) {
                           h(r, c) *= a;
                           ++neg;
                         }
                       }
                       ld[c] += neg * la;
                     }
                   },
                   [&](const RealNVPStep& l) {
                     const int tail = static_cast<int>(h.rows()) - l.split;
                     MatX h1 = ((l.w1 * h.topRows(l.split)).colwise() + l.b1).array().tanh();
                     MatX h2 = ((l.w2 * h1).colwise() + l.b2).array().tanh();
                     MatX out = (l.w3 * h2).colwise() + l.b3;
                     h.bottomRows(tail) =
                         (h.bottomRows(tail).array() * out.topRows(tail).array().exp() + out.bottomRows(tail).array())
                             .matrix();
                     ld += out.topRows(tail).colwise().sum().transpose();
                     if (tape) {
                       tape->hidden1[li] = std::move(h1);
                       tape->hidden2[li] = std::move(h2);
                       tape->scale[li] = out.topRows(tail);
                     }
                   },
               },
               layers_[li]);
  }
  if (tape) tape->output = h;
  if (logdet) *logdet = ld;
  return h;
}

MatX FlowModel::inverse_batch(const MatX& z, FlowTape* tape) const {
  check_dim(z.rows());
  const Eigen::Index batch = z.cols();
  MatX h = z;
  if (tape) {
    tape->inputs.clear();
    tape->hidden1.assign(layers_.size(), MatX());
    tape->hidden2.assign(layers_.size(), MatX());
    tape->scale.assign(layers_.size(), MatX());
  }
  // Tape slot k refers to layer (L - 1 - k).
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::size_t li = layers_.size() - 1 - k;
    if (tape) tape->inputs.push_back(h);
    std::visit(overloaded{
                   [&](const InvertibleLinear& l) { h = l.lu.solve(MatX(h.colwise() - l.bias)); },
                   [&](const PReLU& p) {
                     const double inv_a = 1.0 / p.alpha();
                     h = h.unaryExpr([inv_a](double v) { return v < 0.0 ? v * inv_a : v; });
                   },
                   [&](const RealNVPStep& l) {
                     const int tail = static_cast<int>(h.rows()) - l.split;
                     MatX h1 = ((l.w1 * h.topRows(l.split)).colwise() + l.b1).array().tanh();
                     MatX h2 = ((l.w2 * h1).colwise() + l.b2).array().tanh();
                     MatX out = (l.w3 * h2).colwise() + l.b3;
                     h.bottomRows(tail) = ((h.bottomRows(tail).array() - out.bottomRows(tail).array()) *
                                           (-out.topRows(tail).array()).exp())
                                              .matrix();
                     if (tape) {
                       tape->hidden1[k] = std::move(h1);
                       tape->hidden2[k] = std::move(h2);
                       tape->scale[k] = out.topRows(tail);
                     }
                   },
               },
               layers_[li]);
  }
  (void)batch;
  if (tape) tape->output = h;
  return h;
}

namespace {

// Backprop of (s, t) = NN(head) given dL/ds, dL/dt; returns dL/dhead and
// accumulates parameter gradients when `grad` is non-null.
MatX coupling_net_adjoint(const RealNVPStep& l, const MatX& head, const MatX& h1, const MatX& h2, const MatX& d_s,
                          const MatX& d_t, double* grad) {
  const Eigen::Index tail = d_s.rows();
  MatX d_out(2 * tail, d_s.cols());
  d_out.topRows(tail) = d_s;
  d_out.bottomRows(tail) = d_t;
  const MatX d_a2 = ((l.w3.transpose() * d_out).array() * (1.0 - h2.array().square())).matrix();
  const MatX d_a1 = ((l.w2.transpose() * d_a2).array() * (1.0 - h1.array().square())).matrix();
  if (grad) {
    double* g = grad;
    MapR(g, l.w1.rows(), l.w1.cols()).noalias() += d_a1 * head.transpose();
    g += l.w1.size();
    MapV(g, l.b1.size()) += d_a1.rowwise().sum();
    g += l.b1.size();
    MapR(g, l.w2.rows(), l.w2.cols()).noalias() += d_a2 * h1.transpose();
    g += l.w2.size();
    MapV(g, l.b2.size()) += d_a2.rowwise().sum();
    g += l.b2.size();
    MapR(g, l.w3.rows(), l.w3.cols()).noalias() += d_out * h2.transpose();
    g += l.w3.size();
    MapV(g, l.b3.size()) += d_out.rowwise().sum();
  }
  return l.w1.transpose() * d_a1;
}

}  // namespace

void FlowModel::forward_adjoint(const FlowTape& tape, const MatX& d_z, const VecX& d_logdet, MatX* d_x,
                                std::span<double> d_params) const {
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t li = 0; li < layers_.size(); ++li) offsets[li + 1] = offsets[li] + layer_param_count(layers_[li]);
  const bool want_params = !d_params.empty();
  if (want_params && d_params.size() != offsets.back()) throw Error(ErrorCode::DimensionMismatch, "gradient size");
  const double ld_total = d_logdet.sum();

  MatX g = d_z;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const MatX& x = tape.inputs[li];
    double* pg = want_params ? d_params.data() + offsets[li] : nullptr;
    std::visit(overloaded{
                   [&](const InvertibleLinear& l) {
                     if (pg) {
                       const MatX inv_t = l.lu.inverse().transpose();
                       MapR(pg, l.weight.rows(), l.weight.cols()).noalias() += g * x.transpose();
                       MapR(pg, l.weight.rows(), l.weight.cols()) += ld_total * inv_t;
                       MapV(pg + l.weight.size(), l.bias.size()) += g.rowwise().sum();
                     }
                     g = l.weight.transpose() * g;
                   },
                   [&](const PReLU& p) {
                     const double a = p.alpha();
                     double d_alpha = 0.0;
                     for (Eigen::Index c = 0; c < x.cols(); ++c) {
                       int neg = 0;
                       for (Eigen::Index r = 0; r < x.rows(); ++r) {
                         if (x(r, c) < 0.0) {
                           d_alpha += g(r, c) * x(r, c);
                           g(r, c) *= a;
                           ++neg;
                         }
                       }
                       d_alpha += d_logdet[c] * neg / a;
                     }
                     if (pg) pg[0] += d_alpha * sigmoid(p.rho);
                   },
                   [&](const RealNVPStep& l) {
                     const Eigen::Index tail = x.rows() - l.split;
                     const MatX& s = tape.scale[li];
                     const MatX es = s.array().exp();
                     const MatX g_tail = g.bottomRows(tail);
                     MatX d_s = (g_tail.array() * x.bottomRows(tail).array() * es.array()).matrix();
                     d_s.rowwise() += d_logdet.transpose();
                     const MatX d_head = coupling_net_adjoint(l, x.topRows(l.split), tape.hidden1[li],
                                                              tape.hidden2[li], d_s, g_tail, pg);
                     g.bottomRows(tail) = (g_tail.array() * es.array()).matrix();
                     g.topRows(l.split) += d_head;
                   },
               },
               layers_[li]);
  }
  if (d_x) *d_x = std::move(g);
}

MatX FlowModel::inverse_adjoint(const FlowTape& tape, const MatX& d_theta) const {
  MatX g = d_theta;
  const std::size_t n = layers_.size();
  for (std::size_t k = n; k-- > 0;) {
    const std::size_t li = n - 1 - k;
    const MatX& y = tape.inputs[k];
    const MatX& x = k + 1 < n ? tape.inputs[k + 1] : tape.output;
    std::visit(overloaded{
                   [&](const InvertibleLinear& l) { g = l.lu.transpose().solve(g); },
                   [&](const PReLU& p) {
                     const double inv_a = 1.0 / p.alpha();
                     for (Eigen::Index i = 0; i < g.size(); ++i) {
                       if (y.data()[i] < 0.0) g.data()[i] *= inv_a;
                     }
                   },
                   [&](const RealNVPStep& l) {
                     const Eigen::Index tail = y.rows() - l.split;
                     const MatX ens = (-tape.scale[k].array()).exp();
                     const MatX g_tail = g.bottomRows(tail);
                     const MatX d_t = -(g_tail.array() * ens.array()).matrix();
                     const MatX d_s = -(g_tail.array() * x.bottomRows(tail).array()).matrix();
                     const MatX d_head = coupling_net_adjoint(l, y.topRows(l.split), tape.hidden1[k],
                                                              tape.hidden2[k], d_s, d_t, nullptr);
                     g.bottomRows(tail) = (g_tail.array() * ens.array()).matrix();
                     g.topRows(l.split) += d_head;
                   },
               },
               layers_[li]);
  }
  return g;
}

std::pair<VecX, double> FlowModel::forward(const VecX& theta) const {
  VecX ld;
  MatX z = forward_batch(theta, &ld);
  return {z.col(0), ld[0]};
}

VecX FlowModel::inverse(const VecX& z) const { return inverse_batch(z).col(0); }

double standard_normal_log_density(const VecX& z) {
  return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * z.squaredNorm();
}

double FlowModel::log_prob(const VecX& theta) const {
  const auto [z, ld] = forward(theta);
  return standard_normal_log_density(z) + ld;
}

VecX FlowModel::log_prob_gradient(const VecX& theta, double* value) const {
  FlowTape tape;
  VecX ld;
  const MatX z = forward_batch(theta, &ld, &tape);
  if (value) *value = standard_normal_log_density(z.col(0)) + ld[0];
  MatX dx;
  forward_adjoint(tape, -z, VecX::Ones(1), &dx, {});
  return dx.col(0);
}

MatX FlowModel::jacobian(const VecX& theta) const {
  check_dim(theta.size());
  VecX h = theta;
  MatX jac = MatX::Identity(dim(), dim());
  for (const auto& layer : layers_) {
    std::visit(overloaded{
                   [&](const InvertibleLinear& l) {
                     jac = l.weight * jac;
                     h = l.weight * h + l.bias;
                   },
                   [&](const PReLU& p) {
                     const double a = p.alpha();
                     for (Eigen::Index r = 0; r < h.size(); ++r) {
                       if (h[r] < 0.0) {
                         jac.row(r) *= a;
                         h[r] *= a;
                       }
                     }
                   },
                   [&](const RealNVPStep& l) {
                     const Eigen::Index tail = h.size() - l.split;
                     const VecX h1 = (l.w1 * h.head(l.split) + l.b1).array().tanh();
                     const VecX h2 = (l.w2 * h1 + l.b2).array().tanh();
                     const VecX out = l.w3 * h2 + l.b3;
                     const VecX es = out.head(tail).array().exp();
                     // d out / d head
                     const MatX d_net = l.w3 * (1.0 - h2.array().square()).matrix().asDiagonal() * l.w2 *
                                        (1.0 - h1.array().square()).matrix().asDiagonal() * l.w1;
                     const VecX x_tail = h.tail(tail);
                     MatX dy_dhead = (x_tail.array() * es.array()).matrix().asDiagonal() * d_net.topRows(tail) +
                                     d_net.bottomRows(tail);
                     const MatX j_head = jac.topRows(l.split);
                     const MatX j_tail = jac.bottomRows(tail);
                     jac.bottomRows(tail) = es.asDiagonal() * j_tail + dy_dhead * j_head;
                     h.tail(tail) = (x_tail.array() * es.array() + out.tail(tail).array()).matrix();
                   },
               },
               layer);
  }
  return jac;
}

namespace {

void log_prob_chunk(const FlowModel& flow, const MatX& x, Eigen::Index start, Eigen::Index cols, VecX& out) {
  VecX ld;
  const MatX z = flow.forward_batch(x.middleCols(start, cols), &ld);
  const double base = -0.5 * static_cast<double>(x.rows()) * kLog2Pi;
  for (Eigen::Index c = 0; c < cols; ++c) out[start + c] = base - 0.5 * z.col(c).squaredNorm() + ld[c];
}

}  // namespace

VecX log_prob_batch_serial(const FlowModel& flow, const MatX& x) {
  VecX out(x.cols());
  for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
    log_prob_chunk(flow, x, start, std::min(kChunk, x.cols() - start), out);
  }
  return out;
}

VecX log_prob_batch(const FlowModel& flow, const MatX& x) {
  VecX out(x.cols());
  const Eigen::Index chunks = (x.cols() + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index start = c * kChunk;
    log_prob_chunk(flow, x, start, std::min(kChunk, x.cols() - start), out);
  }
  return out;
}

MatX sample(const FlowModel& flow, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX z(flow.dim(), n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < flow.dim(); ++r) z(r, c) = gauss(rng);
  }
  return flow.inverse_batch(z);
}

MatX interpolate(const FlowModel& flow, const VecX& z_a, const VecX& z_b, int steps) {
  if (steps < 1) throw Error(ErrorCode::InvalidConfig, "interpolation needs steps >= 1");
  if (z_a.size() != flow.dim() || z_b.size() != flow.dim()) throw Error(ErrorCode::DimensionMismatch, "latent size");
  MatX z(flow.dim(), steps);
  for (int k = 0; k < steps; ++k) {
    if (k == 0) {
      z.col(k) = z_a;
    } else if (k == steps - 1) {
      z.col(k) = z_b;
    } else {
      const double t = static_cast<double>(k) / (steps - 1);
      z.col(k) = z_a + t * (z_b - z_a);
    }
  }
  return flow.inverse_batch(z);
}

FlowModel compose(const FlowModel& a, const FlowModel& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "composed flows differ in dimension");
  FlowModel out = a;
  for (const auto& l : b.layers()) out.mutable_layers().push_back(l);
  out.refresh();
  return out;
}

double flow_nll_gradient(const FlowModel& flow, const MatX& batch, std::vector<double>& grad) {
  grad.assign(flow.parameter_count(), 0.0);
  FlowTape tape;
  VecX ld;
  const MatX z = flow.forward_batch(batch, &ld, &tape);
  const double b = static_cast<double>(batch.cols());
  double nll = 0.0;
  const double base = 0.5 * static_cast<double>(batch.rows()) * kLog2Pi;
  for (Eigen::Index c = 0; c < batch.cols(); ++c) nll += base + 0.5 * z.col(c).squaredNorm() - ld[c];
  nll /= b;
  flow.forward_adjoint(tape, z / b, VecX::Constant(batch.cols(), -1.0 / b), nullptr, grad);
  return nll;
}

TrainResult train_flow(const MatX& data, const FlowArchitecture& arch, const TrainConfig& cfg,
                       const std::function<void(const TrainPoint&)>& on_log) {
  if (data.cols() == 0) throw Error(ErrorCode::EmptyDataset, "no training samples");
  if (data.rows() != arch.dim) throw Error(ErrorCode::DimensionMismatch, "data dimension differs from the flow");
  if (cfg.batch_size < 1 || cfg.steps < 0) throw Error(ErrorCode::InvalidConfig, "training schedule");

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(data.cols());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::Index n_hold = static_cast<Eigen::Index>(std::floor(cfg.holdout_fraction * data.cols()));
  if (data.cols() - n_hold < 1) n_hold = 0;
  MatX holdout(data.rows(), n_hold);
  MatX train(data.rows(), data.cols() - n_hold);
  for (Eigen::Index i = 0; i < n_hold; ++i) holdout.col(i) = data.col(order[i]);
  for (Eigen::Index i = n_hold; i < data.cols(); ++i) train.col(i - n_hold) = data.col(order[i]);
  const MatX& monitor = n_hold > 0 ? holdout : train;

  TrainResult result;
  result.flow = FlowModel(arch, rng());
  auto holdout_nll = [&](const FlowModel& f) { return -log_prob_batch(f, monitor).mean(); };
  result.initial_holdout_nll = holdout_nll(result.flow);
  double best = result.initial_holdout_nll;
  std::vector<double> best_params = result.flow.parameters();

  std::vector<double> params = best_params;
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  std::vector<Eigen::Index> perm(train.cols());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::size_t cursor = 0;
  MatX batch(train.rows(), cfg.batch_size);
  double running = 0.0;
  int running_n = 0;

  FlowModel& flow = result.flow;
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int c = 0; c < cfg.batch_size; ++c) {
      if (cursor == perm.size()) {
        std::shuffle(perm.begin(), perm.end(), rng);
        cursor = 0;
      }
      batch.col(c) = train.col(perm[cursor++]);
    }
    const double nll = flow_nll_gradient(flow, batch, grad);
    if (!std::isfinite(nll)) throw Error(ErrorCode::DivergedTraining, "loss became non-finite at step " + std::to_string(step));
    running += nll;
    ++running_n;

    const double lr = cfg.learning_rate * std::pow(cfg.decay_rate, static_cast<double>(step - 1) / cfg.decay_steps);
    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      params[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    flow.set_parameters(params);
    result.steps_run = step;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double h = holdout_nll(flow);
      if (!std::isfinite(h)) throw Error(ErrorCode::DivergedTraining, "held-out loss became non-finite");
      TrainPoint pt{step, running / running_n, h};
      running = 0.0;
      running_n = 0;
      result.curve.push_back(pt);
      if (on_log) on_log(pt);
      if (h < best) {
        best = h;
        best_params = params;
        result.best_step = step;
      }
    }
  }
  flow.set_parameters(best_params);
  result.final_holdout_nll = best;
  return result;
}

}  // namespace nfpose
