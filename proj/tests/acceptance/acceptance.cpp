// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// on the command line to run a subset.

#include "cli.hpp"
#include "nfpose/camera.hpp"
#include "nfpose/fit.hpp"
#include "nfpose/flow.hpp"
#include "nfpose/gradcheck.hpp"
#include "nfpose/loss.hpp"
#include "nfpose/prior.hpp"
#include "nfpose/rotation.hpp"
#include "nfpose/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace nfpose;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

VecX gaussian_vec(Eigen::Index n, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> g(0.0, s);
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

FlowModel perturbed_flow(const FlowArchitecture& arch, std::uint64_t seed, double scale) {
  FlowModel f(arch, seed);
  std::mt19937_64 rng(seed * 7 + 1);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> p = f.parameters();
  for (double& v : p) v += g(rng);
  f.set_parameters(p);
  return f;
}

// ------------------------------------------------------------------ 1

Outcome criterion_parameter_counts() {
  const auto t0 = Clock::now();
  const FlowModel low(FlowArchitecture::low_capacity(138), 0);
  const FlowModel nvp(FlowArchitecture::real_nvp(138), 0);
  const double dt = seconds_since(t0);
  const bool ok = low.parameter_count() == 95914 && nvp.parameter_count() == 331462 && dt < 1.0;
  return {ok, fmt("low-capacity %zu, real-nvp %zu, %.3f s", low.parameter_count(), nvp.parameter_count(), dt)};
}

// ------------------------------------------------------------------ 2

Outcome criterion_bijectivity() {
  const PoseDistribution dist = PoseDistribution::make(24, 1);
  const MatX poses = sample_pose_corpus(dist, 1000, Representation::Rot6D, 2);
  double worst = 0.0;
  for (const FlowArchitecture& arch : {FlowArchitecture::low_capacity(138), FlowArchitecture::real_nvp(138)}) {
    const FlowModel f = perturbed_flow(arch, 3, 0.01);
    const MatX z = f.forward_batch(poses, nullptr);
    const MatX back = f.inverse_batch(z);
    worst = std::max(worst, (back - poses).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-9, fmt("max |f^-1(f(x)) - x|_inf = %.3g over 1000 poses, both architectures", worst)};
}

// ------------------------------------------------------------------ 3

Outcome criterion_logdet() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(2, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    const FlowKind kind = trial % 2 ? FlowKind::RealNVP : FlowKind::LowCapacity;
    const FlowModel f = perturbed_flow(FlowArchitecture{kind, d, 3, 16}, 100 + trial, 0.2);
    const VecX x = gaussian_vec(d, rng);
    const double ld = f.forward(x).second;
    MatX jac(d, d);
    const double h = 1e-6;
    for (int k = 0; k < d; ++k) {
      VecX a = x, b = x;
      a[k] += h;
      b[k] -= h;
      jac.col(k) = (f.forward(a).first - f.forward(b).first) / (2 * h);
    }
    const double fd = std::log(std::abs(jac.determinant()));
    worst = std::max(worst, std::abs(ld - fd) / std::max(1.0, std::abs(fd)));
  }
  return {worst < 1e-5, fmt("max relative logdet error %.3g over 100 flows, D in [2, 8]", worst)};
}

// ------------------------------------------------------------------ 4

struct SuiteCount {
  int passed = 0, total = 0;
  double worst = 0.0;
};

void tally(SuiteCount& c, const GradientReport& r) {
  ++c.total;
  c.passed += r.passed;
  c.worst = std::max(c.worst, r.max_relative_error);
}

ValueAndGradient wrap_objective(const FitProblem& p) {
  return [&p](const VecX& x, VecX* g) {
    const ObjectiveResult r = objective_with_gradient(p, x, g != nullptr);
    if (g) *g = r.gradient;
    return r.value;
  };
}

FitProblem random_fit_problem(Representation rep, PriorKind prior, int frames, std::uint64_t seed) {
  auto model = std::make_shared<BodyModel>(make_synthetic_model(seed, 24, 10, 160, 14));
  model->representation = rep;
  FitProblem p;
  p.model = model;
  p.camera = Camera::centered(256, 256, 500.0);
  p.prior = prior;
  const int d = model->body_pose_dim();
  if (prior == PriorKind::NfLatent || prior == PriorKind::NfAmbient) {
    p.flow = std::make_shared<FlowModel>(perturbed_flow(FlowArchitecture{FlowKind::RealNVP, d, 2, 16}, seed, 0.05));
  }
  if (prior == PriorKind::Gmm) {
    std::mt19937_64 rng(seed);
    std::vector<GmmMode> modes;
    for (int k = 0; k < 3; ++k) modes.push_back({1.0 + k, gaussian_vec(d, rng, 0.3), MatX::Identity(d, d) * (0.3 + 0.1 * k)});
    p.gmm = std::make_shared<GmmPrior>(modes);
  }
  const PoseDistribution dist = PoseDistribution::make(24, seed);
  std::mt19937_64 rng(seed);
  RenderConfig rc;
  rc.keypoint_noise = 1.0;
  for (int t = 0; t < frames; ++t) p.frames.push_back(render_evidence(*model, p.camera, sample_scene(*model, dist, SceneConfig{}, rng), rc, rng));
  p.weights = LossWeights{1.0, 0.01, 0.5, 0.1, 1.0};
  return p;
}

Outcome criterion_gradients() {
  std::map<std::string, SuiteCount> suites;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kPoints = 50;

  for (int i = 0; i < kPoints; ++i) {
    // Keypoint alignment over projected joints.
    const Points2 det = 50.0 * Points2::Random(24, 2);
    std::vector<double> w(24);
    for (double& v : w) v = u(rng);
    const ValueAndGradient ka = [&](const VecX& x, VecX* gr) {
      const Points2 j = Eigen::Map<const Points2>(x.data(), 24, 2);
      Points2 gj;
      const double v = keypoint_loss(j, det, w, gr ? &gj : nullptr);
      if (gr) *gr = Eigen::Map<const VecX>(gj.data(), gj.size());
      return v;
    };
    tally(suites["keypoint"], check_gradient(ka, 50.0 * gaussian_vec(48, rng)));

    // Part alignment: up to 50 pixels and vertices per part.
    std::vector<std::uint8_t> labels(40 * 40, 0);
    std::uniform_int_distribution<int> coord(0, 39), count(1, 50);
    for (int k = 1; k <= 3; ++k) {
      const int n = count(rng);
      for (int p = 0; p < n; ++p) labels[coord(rng) * 40 + coord(rng)] = static_cast<std::uint8_t>(k);
    }
    const SegmentationMask mask(40, 40, labels, 3);
    std::vector<int> vlab;
    for (int k = 1; k <= 3; ++k) vlab.insert(vlab.end(), count(rng), k);
    const Eigen::Index nv = static_cast<Eigen::Index>(vlab.size());
    const ValueAndGradient ba = [&](const VecX& x, VecX* gr) {
      const Points2 v = Eigen::Map<const Points2>(x.data(), nv, 2);
      const AlignmentResult r = body_alignment_loss(mask, v, vlab);
      if (gr) *gr = Eigen::Map<const VecX>(r.grad.data(), r.grad.size());
      return r.forward + r.backward;
    };
    VecX v0(2 * nv);
    for (Eigen::Index k = 0; k < v0.size(); ++k) v0[k] = 40.0 * u(rng);
    tally(suites["alignment"], check_gradient(ba, v0));

    // Depth hinge around the near plane.
    const ValueAndGradient hinge = [](const VecX& x, VecX* gr) {
      const Points3 v = Eigen::Map<const Points3>(x.data(), x.size() / 3, 3);
      Points3 gv;
      const double val = depth_hinge(v, 0.01, gr ? &gv : nullptr);
      if (gr) *gr = Eigen::Map<const VecX>(gv.data(), gv.size());
      return val;
    };
    tally(suites["depth_hinge"], check_gradient(hinge, 0.05 * gaussian_vec(60, rng)));

    // Supervised vertex / pose / shape terms.
    const Points3 vgt = Points3::Random(30, 3);
    const VecX tgt = gaussian_vec(69, rng), bgt = gaussian_vec(10, rng);
    const ValueAndGradient sup = [&](const VecX& x, VecX* gr) {
      const Points3 v = Eigen::Map<const Points3>(x.data(), 30, 3);
      const VecX th = x.segment(90, 69), be = x.segment(159, 10);
      SupervisedGradient sg;
      const SupervisedLosses l = supervised_losses(v, vgt, th, tgt, Representation::AngleAxis,
                                                   Representation::AngleAxis, be, bgt, gr ? &sg : nullptr);
      if (gr) {
        gr->resize(x.size());
        *gr << Eigen::Map<const VecX>(sg.vertices.data(), 90), sg.theta, sg.beta;
      }
      return l.total();
    };
    tally(suites["supervised"], check_gradient(sup, gaussian_vec(169, rng)));

    // Temporal smoothness over latent codes.
    const ValueAndGradient smooth = [](const VecX& x, VecX* gr) {
      const MatX z = Eigen::Map<const MatX>(x.data(), 6, x.size() / 6);
      MatX gz;
      const double val = smoothness_loss(z, gr ? &gz : nullptr);
      if (gr) *gr = Eigen::Map<const VecX>(gz.data(), gz.size());
      return val;
    };
    tally(suites["smoothness"], check_gradient(smooth, gaussian_vec(6 * 5, rng)));

    // Priors: latent and ambient flows of both architectures, closest-mode GMM.
    const ValueAndGradient latent = [](const VecX& z, VecX* gr) {
      const PriorEval e = nf_prior_latent(z);
      if (gr) *gr = e.gradient;
      return e.value;
    };
    tally(suites["prior_nf_latent"], check_gradient(latent, gaussian_vec(12, rng)));
    const FlowKind kind = i % 2 ? FlowKind::RealNVP : FlowKind::LowCapacity;
    const FlowModel flow = perturbed_flow(FlowArchitecture{kind, 12, 3, 16}, 200 + i, 0.1);
    const ValueAndGradient ambient = [&](const VecX& th, VecX* gr) {
      const PriorEval e = nf_prior_ambient(flow, th);
      if (gr) *gr = e.gradient;
      return e.value;
    };
    tally(suites["prior_nf_ambient"], check_gradient(ambient, gaussian_vec(12, rng)));
    std::vector<GmmMode> modes;
    for (int k = 0; k < 3; ++k) {
      MatX a = MatX::Random(6, 6);
      modes.push_back({u(rng) + 0.1, gaussian_vec(6, rng), a * a.transpose() + 0.5 * MatX::Identity(6, 6)});
    }
    const GmmPrior gmm(modes);
    const ValueAndGradient gp = [&](const VecX& th, VecX* gr) {
      const PriorEval e = gmm_prior(gmm, th);
      if (gr) *gr = e.gradient;
      return e.value;
    };
    tally(suites["prior_gmm"], check_gradient(gp, gaussian_vec(6, rng, 2.0)));
  }

  // Full objective across priors, representations and sequence lengths.
  const std::vector<PriorKind> priors{PriorKind::NfLatent, PriorKind::NfAmbient, PriorKind::Gmm, PriorKind::None};
  for (int i = 0; i < kPoints; ++i) {
    const Representation rep = i % 2 ? Representation::Rot6D : Representation::AngleAxis;
    const FitProblem p = random_fit_problem(rep, priors[(i / 2) % 4], 1 + (i % 5 == 0), 300 + i);
    // Redraw points outside the domain (no positive weak-perspective scale).
    VecX x;
    for (bool defined = false; !defined;) {
      x = initial_parameters(p, 0.3 * (i % 3));
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += 0.1 * g(rng);
      try {
        objective_with_gradient(p, x, false);
        defined = true;
      } catch (const Error&) {
      }
    }
    tally(suites["objective"], check_gradient(wrap_objective(p), x));
  }

  bool ok = true;
  std::string detail;
  for (const auto& [name, c] : suites) {
    ok &= c.passed == c.total && c.total == kPoints;
    detail += fmt("%s %d/%d (%.1e) ", name.c_str(), c.passed, c.total, c.worst);
  }
  return {ok, detail};
}

// ------------------------------------------------------------------ 5

Outcome criterion_chamfer_oracle() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> parts(1, 5), count(0, 50), coord(0, 63);
  std::uniform_real_distribution<double> pos(-4.0, 68.0);
  double worst = 0.0;
  bool skipped_match = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int np = parts(rng);
    std::vector<std::uint8_t> labels(64 * 64, 0);
    for (int k = 1; k <= np; ++k) {
      const int n = count(rng);
      for (int i = 0; i < n; ++i) labels[coord(rng) * 64 + coord(rng)] = static_cast<std::uint8_t>(k);
    }
    const SegmentationMask mask(64, 64, labels, np);
    std::vector<int> vlab;
    for (int k = 1; k <= np; ++k) vlab.insert(vlab.end(), count(rng), k);
    Points2 v(static_cast<Eigen::Index>(vlab.size()), 2);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = pos(rng);
    const AlignmentResult a = body_alignment_loss(mask, v, vlab);
    const AlignmentResult b = body_alignment_loss_brute_force(mask, v, vlab);
    worst = std::max({worst, std::abs(a.forward - b.forward), std::abs(a.backward - b.backward)});
    if (v.rows() > 0) worst = std::max(worst, (a.grad - b.grad).cwiseAbs().maxCoeff());
    skipped_match &= a.skipped_parts == b.skipped_parts;
  }
  return {worst <= 1e-10 && skipped_match, fmt("max |grid - brute| = %.3g over 200 instances", worst)};
}

// ------------------------------------------------------------------ 6

Outcome criterion_translation() {
  const Camera cam = Camera::centered(512, 512);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_exact = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Points3 j(24, 3);
    for (int i = 0; i < 24; ++i) j.row(i) = Eigen::RowVector3d(g(rng), 2 * g(rng), 3.0);
    const Vec3 t_star(0.3 * u(rng), 0.3 * u(rng), 2.0 * u(rng));
    const double s = cam.focal / (3.0 + t_star.z());
    Points2 kp(24, 2);
    for (int i = 0; i < 24; ++i) kp.row(i) = (s * (j.row(i).head<2>().transpose() + t_star.head<2>()) + Vec2(cam.cx, cam.cy)).transpose();
    const TranslationSolve r = solve_translation(cam, j, kp, std::vector<double>(24, 1.0));
    worst_exact = std::max(worst_exact, (r.translation - t_star).norm());
  }
  auto loss = [&](const Points3& j, const Vec3& t, const Points2& kp) {
    return keypoint_loss(project_all(cam, j.rowwise() + t.transpose()), kp, {});
  };
  std::vector<double> ratios;
  for (int trial = 0; trial < 100; ++trial) {
    Points3 j(24, 3);
    for (int i = 0; i < 24; ++i) j.row(i) = Eigen::RowVector3d(g(rng), 2 * g(rng), 3.0 + 0.4 * g(rng));
    const Vec3 t_star(0.5 * u(rng), 0.5 * u(rng), 2.0 + u(rng));
    const Points2 kp = project_all(cam, j.rowwise() + t_star.transpose());
    const TranslationSolve r = solve_translation(cam, j, kp, std::vector<double>(24, 1.0));
    ratios.push_back(loss(j, r.translation, kp) / loss(j, Vec3::Zero(), kp));
  }
  const double reduction = 1.0 - median(ratios);
  return {worst_exact < 1e-9 && reduction >= 0.9,
          fmt("exact max |T - T*| = %.3g; median perspective loss reduction %.4f", worst_exact, reduction)};
}

// ------------------------------------------------------------------ 7, 8

// Shared synthetic fitting setup: a 480-vertex humanoid, the seeded pose
// distribution, a Real-NVP flow and an 8-mode mixture trained on its samples.
struct FittingHarness {
  std::shared_ptr<BodyModel> model;
  PoseDistribution dist;
  std::shared_ptr<FlowModel> flow;
  std::shared_ptr<GmmPrior> gmm;
  Camera camera = Camera::centered(512, 512);
  double train_seconds = 0.0;

  FittingHarness() : model(std::make_shared<BodyModel>(make_synthetic_model(0))), dist(PoseDistribution::make(24, 0)) {
    const auto t0 = Clock::now();
    const MatX corpus = sample_pose_corpus(dist, 5000, Representation::AngleAxis, 1);
    TrainConfig tc;
    tc.steps = 500;
    tc.batch_size = 64;
    tc.learning_rate = 1e-3;
    tc.decay_steps = 500;
    tc.eval_every = 50;
    tc.seed = 1;
    flow = std::make_shared<FlowModel>(train_flow(corpus, FlowArchitecture{FlowKind::RealNVP, 69, 3, 64}, tc).flow);
    GmmFitConfig gc;
    gc.modes = 8;
    gc.seed = 1;
    gmm = std::make_shared<GmmPrior>(gmm_fit(corpus, gc));
    train_seconds = seconds_since(t0);
  }

  FitProblem problem(const FrameEvidence& ev, PriorKind prior, bool use_mask) const {
    FitProblem p;
    p.model = model;
    p.camera = camera;
    p.prior = prior;
    p.flow = flow;
    p.gmm = gmm;
    p.frames.push_back(ev);
    if (!use_mask) p.frames[0].mask.reset();
    p.weights = LossWeights{1.0, use_mask ? 1e-3 : 0.0, 1e-2, 1e-2, 1.0};
    return p;
  }
};

struct Trial {
  Scene scene;
  FrameEvidence evidence;
};

Trial make_trial(const FittingHarness& h, int index) {
  std::mt19937_64 rng(1000 + index);
  Trial t;
  t.scene = sample_scene(*h.model, h.dist, SceneConfig{}, rng);
  t.evidence = render_evidence(*h.model, h.camera, t.scene, RenderConfig{}, rng);
  return t;
}

double fit_mpjpe(const FittingHarness& h, const Trial& t, PriorKind prior, bool use_mask) {
  try {
    const FitResult r = fit_static(h.problem(t.evidence, prior, use_mask));
    return evaluate(r.frames[0].body, pose_body(*h.model, t.scene.theta, t.scene.beta)).mpjpe;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

constexpr int kFitTrials = 50;

struct FitCampaign {
  std::vector<double> latent_kaba, ambient_kaba, latent_ka, gmm_kaba;
  double latent_seconds = 0.0;
};

const FittingHarness& harness() {
  static const FittingHarness h;
  return h;
}

std::vector<Trial>& trials() {
  static std::vector<Trial> ts = [] {
    std::vector<Trial> v;
    for (int i = 0; i < kFitTrials; ++i) v.push_back(make_trial(harness(), i));
    return v;
  }();
  return ts;
}

std::vector<double> run_campaign(PriorKind prior, bool use_mask, double* secs = nullptr) {
  const auto t0 = Clock::now();
  std::vector<double> e;
  for (const Trial& t : trials()) e.push_back(fit_mpjpe(harness(), t, prior, use_mask));
  if (secs) *secs = seconds_since(t0);
  return e;
}

std::vector<double>& latent_kaba_errors(double* secs = nullptr) {
  static double s = 0.0;
  static std::vector<double> e = run_campaign(PriorKind::NfLatent, true, &s);
  if (secs) *secs = s;
  return e;
}

Outcome criterion_fit_recovery() {
  const double train = harness().train_seconds;
  double secs = 0.0;
  const std::vector<double>& e = latent_kaba_errors(&secs);
  const int good = static_cast<int>(std::count_if(e.begin(), e.end(), [](double v) { return v < 0.01; }));
  const bool ok = good >= static_cast<int>(std::ceil(0.9 * kFitTrials));
  return {ok, fmt("%d/%d trials under 1 cm, median %.3f cm, fitting %.0f s (+%.0f s prior training)", good,
                  kFitTrials, 100 * median(e), secs, train)};
}

Outcome criterion_orderings() {
  const std::vector<double>& latent = latent_kaba_errors();
  const std::vector<double> ambient = run_campaign(PriorKind::NfAmbient, true);
  const std::vector<double> ka = run_campaign(PriorKind::NfLatent, false);
  const std::vector<double> gmm = run_campaign(PriorKind::Gmm, true);
  const double ml = median(latent), ma = median(ambient), mk = median(ka), mg = median(gmm);
  const bool ok = ml <= ma && ml <= mk && ml <= mg;
  return {ok, fmt("median MPJPE cm (%d trials each): latent %.3f <= ambient %.3f; KA+BA %.3f <= KA %.3f; "
                  "NF %.3f <= GMM %.3f",
                  kFitTrials, 100 * ml, 100 * ma, 100 * ml, 100 * mk, 100 * ml, 100 * mg)};
}

// ------------------------------------------------------------------ 9

Outcome criterion_temporal() {
  const FittingHarness& h = harness();
  constexpr int kSequences = 20, kFrames = 16;
  std::vector<double> static_err, temporal_err;
  double static_vel = 0.0, temporal_vel = 0.0;
  const auto t0 = Clock::now();
  for (int q = 0; q < kSequences; ++q) {
    std::mt19937_64 rng(5000 + q);
    const std::vector<Scene> scenes = sample_sequence(*h.model, h.dist, SceneConfig{}, kFrames, 0.1, rng);
    FitProblem p;
    p.model = h.model;
    p.camera = h.camera;
    p.prior = PriorKind::NfLatent;
    p.flow = h.flow;
    p.weights = LossWeights{1.0, 0.0, 0.3, 0.1, 1.0};
    RenderConfig rc;
    rc.with_mask = false;
    rc.keypoint_noise = 2.0;
    for (const Scene& s : scenes) p.frames.push_back(render_evidence(*h.model, h.camera, s, rc, rng));
    FitOptions so;
    const std::vector<FitResult> singles = fit_frames_independently(p, so);
    FitOptions to;
    to.bfgs.max_iterations = 400;
    const FitResult seq = fit_sequence(p, to, &singles);
    double es = 0.0, et = 0.0;
    std::vector<VecX> codes;
    for (int t = 0; t < kFrames; ++t) {
      const PosedBody gt = pose_body(*h.model, scenes[t].theta, scenes[t].beta);
      es += evaluate(singles[t].frames[0].body, gt).mpjpe / kFrames;
      et += evaluate(seq.frames[t].body, gt).mpjpe / kFrames;
      codes.push_back(singles[t].codes[0]);
    }
    static_err.push_back(es);
    temporal_err.push_back(et);
    static_vel += mean_code_velocity(codes) / kSequences;
    temporal_vel += mean_code_velocity(seq.codes) / kSequences;
  }
  const double ms = median(static_err), mt = median(temporal_err);
  return {mt <= ms && temporal_vel < static_vel,
          fmt("median MPJPE temporal %.3f cm <= static %.3f cm; latent velocity %.3f < %.3f; %.0f s", 100 * mt,
              100 * ms, temporal_vel, static_vel, seconds_since(t0))};
}

// ------------------------------------------------------------------ 10

MatX banana(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatX x(2, n);
  for (int i = 0; i < n; ++i) {
    const double a = g(rng);
    x(0, i) = a;
    x(1, i) = 0.5 * a * a - 1.0 + 0.35 * g(rng);
  }
  return x;
}

Outcome criterion_density() {
  const MatX train = banana(4000, 10), test = banana(2000, 11);
  TrainConfig tc;
  tc.steps = 3000;
  tc.batch_size = 128;
  tc.learning_rate = 3e-3;
  tc.decay_rate = 0.5;
  tc.decay_steps = 3000;
  tc.eval_every = 100;
  tc.seed = 3;
  const TrainResult tr = train_flow(train, FlowArchitecture{FlowKind::RealNVP, 2, 6, 64}, tc);
  const double flow_nll = -log_prob_batch(tr.flow, test).mean();

  const Vec2 mu = train.rowwise().mean();
  const MatX centred = train.colwise() - mu;
  const MatX cov = centred * centred.transpose() / static_cast<double>(train.cols());
  const GmmPrior gauss({{1.0, mu, cov}});
  double gauss_nll = 0.0;
  for (Eigen::Index i = 0; i < test.cols(); ++i) gauss_nll += gauss.mixture_nll(test.col(i)) / test.cols();

  // Midpoint quadrature on [-8, 8]^2.
  const int n = 640;
  const double lo = -8.0, step = 16.0 / n;
  MatX grid(2, static_cast<Eigen::Index>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) grid.col(static_cast<Eigen::Index>(r) * n + c) = Vec2(lo + (c + 0.5) * step, lo + (r + 0.5) * step);
  }
  const double mass = log_prob_batch(tr.flow, grid).array().exp().sum() * step * step;
  const bool ok = flow_nll < gauss_nll && std::abs(mass - 1.0) <= 0.02;
  return {ok, fmt("held-out NLL flow %.4f < gaussian %.4f; integral of density %.4f", flow_nll, gauss_nll, mass)};
}

// ------------------------------------------------------------------ 11

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("nfpose_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const std::string d = dir.string();
  struct Step {
    std::vector<std::string> args;
    std::vector<std::string> outputs;  // first one carries the embedded config
  };
  const std::vector<Step> steps{
      {{"synth", "--set", "out_dir=" + d + "/synth", "--set", "num_poses=400", "--set", "num_frames=3", "--set",
        "vertices=200", "--set", "sequence=true", "--set", "keypoint_noise=1.5", "--seed", "7"},
       {"synth/model.json", "synth/camera.json", "synth/poses.csv", "synth/ground_truth.json",
        "synth/frame_000_keypoints.csv", "synth/frame_000_mask.pgm", "synth/frame_002_keypoints.csv",
        "synth/frame_002_mask.pgm"}},
      {{"train-prior", "--set", "data=" + d + "/synth/poses.csv", "--set", "out=" + d + "/prior.flow", "--set",
        "steps=60", "--set", "blocks=2", "--set", "hidden=16", "--set", "eval_every=20", "--seed", "3"},
       {"prior.flow"}},
      {{"train-prior", "--set", "data=" + d + "/synth/poses.csv", "--set", "out=" + d + "/gmm.json", "--set",
        "prior=gmm", "--set", "gmm_modes=3", "--set", "gmm_iterations=20"},
       {"gmm.json"}},
      {{"fit", "--set", "data_dir=" + d + "/synth", "--set", "prior_path=" + d + "/prior.flow", "--set",
        "out=" + d + "/fit.json", "--set", "num_frames=1", "--set", "max_iterations=40"},
       {"fit.json"}},
      {{"fit", "--set", "data_dir=" + d + "/synth", "--set", "prior_path=" + d + "/gmm.json", "--set", "prior=gmm",
        "--set", "out=" + d + "/fit_gmm.json", "--set", "num_frames=1", "--set", "max_iterations=30", "--set",
        "starts=2"},
       {"fit_gmm.json"}},
      {{"fit", "--set", "data_dir=" + d + "/synth", "--set", "prior_path=" + d + "/prior.flow", "--set",
        "out=" + d + "/fit_seq.json", "--set", "mode=sequence", "--set", "max_iterations=30", "--set", "starts=1"},
       {"fit_seq.json"}},
      {{"eval", "--set", "result=" + d + "/fit_seq.json", "--set", "out=" + d + "/metrics.csv"}, {"metrics.csv"}},
      {{"sample", "--set", "flow=" + d + "/prior.flow", "--set", "out=" + d + "/samples.csv", "--seed", "11"},
       {"samples.csv"}},
      {{"interp", "--set", "flow=" + d + "/prior.flow", "--set", "poses=" + d + "/synth/poses.csv", "--set",
        "out=" + d + "/interp.csv", "--set", "steps=5", "--set", "index_b=3"},
       {"interp.csv"}},
  };
  std::string failure;
  int compared = 0;
  for (const Step& s : steps) {
    std::ostringstream log;
    if (cli::run_cli(s.args, log, log) != 0) {
      failure = s.args[0] + " failed: " + log.str();
      break;
    }
    std::map<std::string, std::string> first;
    for (const std::string& o : s.outputs) first[o] = file_bytes(dir / o);
    // Re-run from the configuration embedded in the first artifact.
    const fs::path kept = dir / ("kept_config" + fs::path(s.outputs.front()).extension().string());
    fs::copy_file(dir / s.outputs.front(), kept, fs::copy_options::overwrite_existing);
    for (const std::string& o : s.outputs) fs::remove(dir / o);
    if (cli::run_cli({s.args[0], "--config", kept.string()}, log, log) != 0) {
      failure = s.args[0] + " re-run failed: " + log.str();
      break;
    }
    for (const auto& [name, bytes] : first) {
      ++compared;
      if (!fs::exists(dir / name) || file_bytes(dir / name) != bytes) failure += name + " differs; ";
    }
  }
  fs::remove_all(dir);
  if (!failure.empty()) return {false, failure};
  return {true, fmt("%zu commands, %d artifacts reproduced byte for byte", steps.size(), compared)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"parameter counts", criterion_parameter_counts},
      {"bijectivity", criterion_bijectivity},
      {"log-det correctness", criterion_logdet},
      {"gradient suite", criterion_gradients},
      {"alignment oracle", criterion_chamfer_oracle},
      {"translation solve", criterion_translation},
      {"synthetic fitting recovery", criterion_fit_recovery},
      {"prior and loss orderings", criterion_orderings},
      {"temporal fitting", criterion_temporal},
      {"density sanity", criterion_density},
      {"cli determinism", criterion_cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << fmt("  [%.1f s]", seconds_since(t0)) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
