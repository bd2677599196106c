#pragma once

#include "nfpose/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace nfpose {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// y = W x + b. log|det W| and the LU factors are cached by refresh().
struct InvertibleLinear {
  MatR weight;
  VecX bias;
  Eigen::PartialPivLU<MatX> lu;
  double log_abs_det = 0.0;
};

// y = x for x >= 0, alpha x otherwise, alpha = softplus(rho) + 1e-4.
struct PReLU {
  double rho = 0.0;
  double alpha() const;
};

// Affine coupling: the first `split` coordinates pass through and drive
// (s, t) = NN(x_head) via FC-tanh-FC-tanh-FC; the tail becomes
// x_tail * exp(s) + t. The last layer emits s followed by t.
struct RealNVPStep {
  int split = 0;
  MatR w1, w2, w3;
  VecX b1, b2, b3;
  int hidden() const { return static_cast<int>(w1.rows()); }
};

using FlowLayer = std::variant<InvertibleLinear, PReLU, RealNVPStep>;

enum class FlowKind { LowCapacity, RealNVP };

struct FlowArchitecture {
  FlowKind kind = FlowKind::LowCapacity;
  int dim = 138;
  // Number of PReLU / coupling layers; linear layers wrap each of them.
  int blocks = 4;
  int hidden = 128;

  static FlowArchitecture low_capacity(int dim = 138) { return {FlowKind::LowCapacity, dim, 4, 128}; }
  static FlowArchitecture real_nvp(int dim = 138) { return {FlowKind::RealNVP, dim, 5, 128}; }
};

std::string to_string(FlowKind kind);
FlowKind flow_kind_from_string(const std::string& s);

// Intermediates of a batched pass (columns are samples).
struct FlowTape {
  std::vector<MatX> inputs;   // input to each layer, in evaluation order
  std::vector<MatX> hidden1;  // per layer; empty for non-coupling layers
  std::vector<MatX> hidden2;
  std::vector<MatX> scale;
  MatX output;
};

class FlowModel {
 public:
  FlowModel() = default;
  // Near-identity initialisation: W = I + 1e-3 N(0,1), b = 0, alpha = 1,
  // coupling weights 1e-2 N(0,1), coupling biases 0.
  FlowModel(const FlowArchitecture& arch, std::uint64_t seed);

  const FlowArchitecture& architecture() const { return arch_; }
  int dim() const { return arch_.dim; }
  const std::vector<FlowLayer>& layers() const { return layers_; }
  std::vector<FlowLayer>& mutable_layers() { return layers_; }

  std::size_t parameter_count() const;
  // Flat parameter vector in declared layer order; matrices row-major.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  // Re-factorises linear layers. Throws NonInvertibleLayer when |det W| is
  // below 1e-12 or not finite.
  void refresh();

  // Batched passes. Columns are samples.
  MatX forward_batch(const MatX& x, VecX* logdet, FlowTape* tape = nullptr) const;
  MatX inverse_batch(const MatX& z, FlowTape* tape = nullptr) const;

  // Reverse sweep of forward_batch. d_z: dL/dz per column; d_logdet: dL/dlogdet
  // per column. Writes dL/dx into d_x (if non-null) and accumulates parameter
  // gradients into d_params (if non-empty, same layout as parameters()).
  void forward_adjoint(const FlowTape& tape, const MatX& d_z, const VecX& d_logdet, MatX* d_x,
                       std::span<double> d_params) const;
  // Reverse sweep of inverse_batch: dL/dtheta -> dL/dz.
  MatX inverse_adjoint(const FlowTape& tape, const MatX& d_theta) const;

  std::pair<VecX, double> forward(const VecX& theta) const;
  VecX inverse(const VecX& z) const;
  double log_prob(const VecX& theta) const;
  // d log_prob / d theta
  VecX log_prob_gradient(const VecX& theta, double* value = nullptr) const;
  // Analytic dz/dtheta.
  MatX jacobian(const VecX& theta) const;

 private:
  FlowArchitecture arch_;
  std::vector<FlowLayer> layers_;

  void check_dim(Eigen::Index rows) const;
};

double standard_normal_log_density(const VecX& z);

// Batch log-density, serial reference and OpenMP over fixed column chunks.
// Both produce bitwise-identical output.
VecX log_prob_batch_serial(const FlowModel& flow, const MatX& x);
VecX log_prob_batch(const FlowModel& flow, const MatX& x);

// theta_i = f^{-1}(z_i), z_i ~ N(0, I). Columns are samples.
MatX sample(const FlowModel& flow, int n, std::uint64_t seed);
// Decodes z_a + (z_b - z_a) k / (steps - 1), k = 0..steps-1. steps == 1
// returns f^{-1}(z_a).
MatX interpolate(const FlowModel& flow, const VecX& z_a, const VecX& z_b, int steps);

// Stacks b after a (x -> b(a(x))).
FlowModel compose(const FlowModel& a, const FlowModel& b);

struct TrainConfig {
  int steps = 20000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double decay_rate = 0.99;
  int decay_steps = 10000;
  double holdout_fraction = 0.1;
  int eval_every = 500;
  std::uint64_t seed = 0;
};

struct TrainPoint {
  int step;
  double train_nll;
  double holdout_nll;
};

struct TrainResult {
  FlowModel flow;
  std::vector<TrainPoint> curve;
  double initial_holdout_nll = 0.0;
  double final_holdout_nll = 0.0;
  int best_step = 0;
  int steps_run = 0;
};

// Maximum likelihood with Adam (beta1 0.9, beta2 0.999, eps 1e-8) and
// lr * decay_rate^(step / decay_steps). The held-out set is a seeded split of
// `data`; the returned flow is the best held-out snapshot. Columns are samples.
// Throws EmptyDataset, DimensionMismatch, DivergedTraining.
TrainResult train_flow(const MatX& data, const FlowArchitecture& arch, const TrainConfig& cfg,
                       const std::function<void(const TrainPoint&)>& on_log = {});

// Mean negative log-likelihood and its parameter gradient for a batch.
double flow_nll_gradient(const FlowModel& flow, const MatX& batch, std::vector<double>& grad);

}  // namespace nfpose
