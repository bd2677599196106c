#include "nfpose/gradcheck.hpp"
#include "nfpose/objective.hpp"
#include "nfpose/rotation.hpp"
#include "nfpose/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nfpose;

namespace {

std::shared_ptr<FlowModel> random_flow(FlowKind kind, int dim, std::uint64_t seed) {
  auto f = std::make_shared<FlowModel>(FlowArchitecture{kind, dim, 2, 16}, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<double> p = f->parameters();
  for (double& v : p) v += g(rng);
  f->set_parameters(p);
  return f;
}

std::shared_ptr<GmmPrior> random_gmm(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<GmmMode> modes;
  for (int k = 0; k < 3; ++k) {
    VecX mu(dim);
    for (int i = 0; i < dim; ++i) mu[i] = g(rng);
    MatX s = MatX::Identity(dim, dim) * (0.2 + 0.1 * k);
    modes.push_back({1.0 + k, mu, s});
  }
  return std::make_shared<GmmPrior>(modes);
}

// A small body observed in `frames` frames with keypoints and masks.
FitProblem make_problem(Representation rep, PriorKind prior, int frames, bool masks, std::uint64_t seed) {
  auto model = std::make_shared<BodyModel>(make_synthetic_model(seed, 24, 10, 200, 14));
  model->representation = rep;
  FitProblem p;
  p.model = model;
  p.camera = Camera::centered(256, 256, 500.0);
  p.prior = prior;
  const int d = model->body_pose_dim();
  if (prior == PriorKind::NfLatent || prior == PriorKind::NfAmbient) p.flow = random_flow(FlowKind::RealNVP, d, seed);
  if (prior == PriorKind::Gmm) p.gmm = random_gmm(d, seed);
  const PoseDistribution dist = PoseDistribution::make(24, seed);
  std::mt19937_64 rng(seed);
  RenderConfig rc;
  rc.with_mask = masks;
  rc.keypoint_noise = 1.0;
  for (int t = 0; t < frames; ++t) {
    Scene s = sample_scene(*model, dist, SceneConfig{}, rng);
    p.frames.push_back(render_evidence(*model, p.camera, s, rc, rng));
  }
  p.weights = LossWeights{1.0, 0.01, 0.5, 0.1, 1.0};
  return p;
}

VecX random_point(const FitProblem& p, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  VecX x = initial_parameters(p, 0.2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += g(rng);
  return x;
}

ValueAndGradient wrap(const FitProblem& p) {
  return [&p](const VecX& x, VecX* g) {
    const ObjectiveResult r = objective_with_gradient(p, x, g != nullptr);
    if (g) *g = r.gradient;
    return r.value;
  };
}

void require_gradient(const FitProblem& p, const VecX& x) {
  const GradientReport rep = check_gradient(wrap(p), x, 1e-6, 1e-4);
  INFO("max relative error " << rep.max_relative_error << ", kinks " << rep.kinks.size());
  CHECK(rep.passed);
  CHECK(rep.kinks.size() < rep.analytic.size() / 4);
}

}  // namespace

TEST_CASE("gradient checker") {
  const ValueAndGradient quad = [](const VecX& x, VecX* g) {
    if (g) *g = 2.0 * x + VecX::Constant(x.size(), 1.0);
    return x.squaredNorm() + x.sum();
  };
  const GradientReport q = check_gradient(quad, VecX::LinSpaced(5, -1.0, 2.0));
  CHECK(q.passed);
  CHECK(q.max_relative_error < 1e-8);
  CHECK(q.kinks.empty());

  const ValueAndGradient abs1 = [](const VecX& x, VecX* g) {
    if (g) *g = VecX::Constant(1, x[0] > 0 ? 1.0 : -1.0);
    return std::abs(x[0]);
  };
  const GradientReport k = check_gradient(abs1, VecX::Zero(1));
  CHECK(k.kinks == std::vector<int>{0});

  const ValueAndGradient wrong = [](const VecX& x, VecX* g) {
    if (g) *g = 3.0 * x;
    return x.squaredNorm();
  };
  CHECK_FALSE(check_gradient(wrong, VecX::Ones(3)).passed);
  const ValueAndGradient bad = [](const VecX&, VecX* g) {
    if (g) *g = VecX::Zero(1);
    return std::nan("");
  };
  CHECK_THROWS_AS(check_gradient(bad, VecX::Zero(1)), Error);
}

TEST_CASE("parameter layout") {
  const ParamBlock b(3, 6, 138, 10);
  CHECK(b.size() == 3 * 144 + 10);
  CHECK(b.pose_offset(1) == 150);
  CHECK(b.shape_offset() == 432);
  VecX x = VecX::LinSpaced(b.size(), 0, b.size() - 1);
  CHECK(b.root(x, 2)[0] == 288);
  CHECK(b.shape(x)[9] == b.size() - 1);
}

TEST_CASE("objective gradients match finite differences") {
  for (const Representation rep : {Representation::AngleAxis, Representation::Rot6D}) {
    for (const PriorKind prior : {PriorKind::NfLatent, PriorKind::NfAmbient, PriorKind::Gmm, PriorKind::None}) {
      CAPTURE(to_string(rep));
      CAPTURE(to_string(prior));
      const FitProblem p = make_problem(rep, prior, 1, true, 11);
      require_gradient(p, random_point(p, 3, 0.1));
    }
  }
}

TEST_CASE("sequence objective gradient including the temporal term") {
  FitProblem p = make_problem(Representation::AngleAxis, PriorKind::NfLatent, 3, false, 12);
  require_gradient(p, random_point(p, 4, 0.1));
  p.smoothness = 3.0;
  require_gradient(p, random_point(p, 5, 0.1));
  p.prior = PriorKind::Gmm;
  p.gmm = random_gmm(p.pose_dim(), 6);
  require_gradient(p, random_point(p, 6, 0.1));
}

TEST_CASE("prior-only objective has zero gradient at the latent origin") {
  FitProblem p = make_problem(Representation::AngleAxis, PriorKind::NfLatent, 1, false, 13);
  p.weights = LossWeights{0.0, 0.0, 1.0, 0.0, 0.0};
  const VecX x = initial_parameters(p, 0.0);
  const ObjectiveResult r = objective_with_gradient(p, x);
  CHECK(r.gradient.norm() < 1e-12);
  CHECK(r.value == doctest::Approx(0.5 * p.pose_dim() * std::log(2 * M_PI)));
}

TEST_CASE("terms enter linearly with their weights") {
  FitProblem p = make_problem(Representation::AngleAxis, PriorKind::Gmm, 2, true, 14);
  const VecX x = random_point(p, 7, 0.05);
  const ObjectiveResult base = objective_with_gradient(p, x);
  const LossBreakdown& b = base.breakdown;
  const double expected = p.weights.keypoint * b.keypoint + p.weights.alignment * (b.alignment_fwd + b.alignment_bwd) +
                          p.weights.prior * b.prior + p.weights.shape * b.shape + p.weights.depth * b.depth +
                          p.smoothness_weight() * b.smooth;
  CHECK(base.value == doctest::Approx(expected).epsilon(1e-12));
  // Shape is shared: |beta|^2 is counted once regardless of frame count.
  const ParamBlock blk(p);
  CHECK(b.shape == doctest::Approx(blk.shape(x).squaredNorm()).epsilon(1e-14));

  p.weights.shape *= 3.0;
  const ObjectiveResult tripled = objective_with_gradient(p, x);
  CHECK(tripled.value - base.value == doctest::Approx(2.0 * 0.1 * b.shape).epsilon(1e-10));

  p.weights = LossWeights{0, 0, 0, 0, 0};
  p.smoothness = 0.0;
  CHECK_THROWS_AS(objective_with_gradient(p, x), Error);
}

TEST_CASE("decode reproduces the posed body") {
  const FitProblem p = make_problem(Representation::Rot6D, PriorKind::NfAmbient, 2, false, 15);
  const VecX x = random_point(p, 8, 0.1);
  const std::vector<FrameState> fs = decode(p, x);
  const ObjectiveResult r = objective_with_gradient(p, x, false);
  REQUIRE(fs.size() == 2);
  for (int t = 0; t < 2; ++t) {
    const ParamBlock blk(p);
    const PosedBody b = pose_body(*p.model, fs[t].theta, blk.shape(x));
    CHECK((b.joints - fs[t].body.joints).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((r.frames[t].translation - fs[t].translation).norm() < 1e-14);
  }
  // Initial yaw rotates the root about the vertical axis.
  const VecX x0 = initial_parameters(p, 0.7);
  const Mat3 r0 = params_to_matrix(Representation::Rot6D, {x0.data(), 6});
  CHECK((r0 - Eigen::AngleAxisd(0.7, Vec3::UnitY()).toRotationMatrix()).norm() < 1e-12);
}
