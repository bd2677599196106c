#include "cli.hpp"

#include "nfpose/fit.hpp"
#include "nfpose/flow.hpp"
#include "nfpose/prior.hpp"
#include "nfpose/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>

namespace nfpose::cli {

namespace {

// ---------------------------------------------------------------- config

Json defaults_for(const std::string& command) {
  Json c;
  c["command"] = command;
  c["seed"] = 0;
  if (command == "synth") {
    c["out_dir"] = "synth";
    c["model"] = "";
    c["model_seed"] = 0;
    c["vertices"] = 480;
    c["representation"] = "angle_axis";
    c["distribution_seed"] = 0;
    c["latent_dim"] = 6;
    c["spread"] = 0.25;
    c["num_poses"] = 1000;
    c["num_frames"] = 4;
    c["sequence"] = false;
    c["latent_step"] = 0.1;
    c["focal"] = 1000.0;
    c["width"] = 512;
    c["height"] = 512;
    c["yaw_range"] = 0.785;
    c["tilt_range"] = 0.1;
    c["shape_sigma"] = 0.5;
    c["depth"] = 5.0;
    c["depth_jitter"] = 0.5;
    c["offset_range"] = 0.2;
    c["keypoint_noise"] = 0.0;
    c["splat_radius"] = 1.5;
    c["with_mask"] = true;
  } else if (command == "train-prior") {
    c["data"] = "synth/poses.csv";
    c["out"] = "prior.flow";
    c["prior"] = "flow";
    c["representation"] = "auto";
    c["architecture"] = "real_nvp";
    c["blocks"] = 0;
    c["hidden"] = 0;
    c["steps"] = 2000;
    c["batch_size"] = 64;
    c["learning_rate"] = 1e-4;
    c["decay_rate"] = 0.99;
    c["decay_steps"] = 10000;
    c["holdout_fraction"] = 0.1;
    c["eval_every"] = 100;
    c["gmm_modes"] = 8;
    c["gmm_iterations"] = 200;
    c["gmm_diagonal"] = "auto";
  } else if (command == "fit") {
    c["data_dir"] = "synth";
    c["prior"] = "nf_latent";
    c["prior_path"] = "prior.flow";
    c["out"] = "fit.json";
    c["mode"] = "static";
    c["first_frame"] = 0;
    c["num_frames"] = 0;
    c["use_masks"] = true;
    c["mask_stride"] = 1;
    c["w_keypoint"] = 1.0;
    c["w_alignment"] = 0.001;
    c["w_prior"] = 0.01;
    c["w_shape"] = 0.01;
    c["w_depth"] = 1.0;
    c["smoothness"] = -1.0;
    c["translation_correction"] = true;
    c["starts"] = 4;
    c["max_iterations"] = 500;
    c["gradient_tolerance"] = 1e-6;
    c["relative_tolerance"] = 1e-10;
  } else if (command == "eval") {
    c["result"] = "fit.json";
    c["data_dir"] = "";
    c["out"] = "metrics.csv";
  } else if (command == "sample") {
    c["flow"] = "prior.flow";
    c["num_samples"] = 16;
    c["out"] = "samples.csv";
  } else if (command == "interp") {
    c["flow"] = "prior.flow";
    c["poses"] = "synth/poses.csv";
    c["index_a"] = 0;
    c["index_b"] = 1;
    c["steps"] = 10;
    c["out"] = "interp.csv";
  } else {
    throw Error(ErrorCode::ConfigError, "unknown command '" + command + "'");
  }
  return c;
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void assign(Json& cfg, const std::string& key, const Json& value) {
  auto it = cfg.find(key);
  if (it == cfg.end()) config_error("unknown key '" + key + "' for " + cfg["command"].get<std::string>());
  const Json& def = *it;
  const bool ok = (def.is_boolean() && value.is_boolean()) || (def.is_string() && value.is_string()) ||
                  (def.is_number_integer() && value.is_number_integer()) ||
                  (def.is_number_float() && value.is_number());
  if (!ok) config_error("key '" + key + "' expects a value like " + def.dump() + ", got " + value.dump());
  if (key == "seed" && value.is_number_integer() && value.get<long long>() < 0) config_error("seed must be >= 0");
  *it = def.is_number_float() ? Json(value.get<double>()) : value;
}

Json parse_override(const Json& def, const std::string& key, const std::string& text) {
  try {
    if (def.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
    } else if (def.is_number_integer()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } else if (def.is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else {
      return text;
    }
  } catch (const std::exception&) {
  }
  config_error("cannot parse '" + text + "' for key '" + key + "'");
}

Json config_source(const fs::path& path) {
  if (path.extension() == ".json") {
    const Json j = read_json(path);
    if (!j.is_object()) config_error(path.string() + ": configuration must be a JSON object");
    if (j.contains("config") && j["config"].is_object()) return j["config"];
    return j;
  }
  return embedded_config(path);
}

Json resolve(const std::string& command, const std::string& config_path, const std::vector<std::string>& sets,
             const std::optional<std::uint64_t>& seed) {
  Json cfg = defaults_for(command);
  if (!config_path.empty()) {
    const Json src = config_source(config_path);
    for (const auto& [k, v] : src.items()) {
      if (k == "command") {
        if (v != command) config_error("configuration is for '" + v.dump() + "', not '" + command + "'");
        continue;
      }
      assign(cfg, k, v);
    }
  }
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) config_error("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    if (!cfg.contains(key) || key == "command") config_error("unknown key '" + key + "' for " + command);
    assign(cfg, key, parse_override(cfg[key], key, s.substr(eq + 1)));
  }
  if (seed) cfg["seed"] = *seed;
  return cfg;
}

std::string str(const Json& c, const char* k) { return c.at(k).get<std::string>(); }
double num(const Json& c, const char* k) { return c.at(k).get<double>(); }
bool flag(const Json& c, const char* k) { return c.at(k).get<bool>(); }
int integer(const Json& c, const char* k) {
  const long long v = c.at(k).get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    config_error(std::string("key '") + k + "' out of range");
  }
  return static_cast<int>(v);
}
int positive(const Json& c, const char* k) {
  const int v = integer(c, k);
  if (v < 1) config_error(std::string("key '") + k + "' must be positive");
  return v;
}
std::uint64_t seed_of(const Json& c, const char* k = "seed") { return c.at(k).get<std::uint64_t>(); }

std::string comment_for(const Json& c) { return "nfpose " + c.dump(); }

// ---------------------------------------------------------------- helpers

void ensure_parent(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, p.parent_path().string() + ": " + ec.message());
}

std::string frame_file(int t, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03d_", t);
  return buf + std::string(suffix);
}

Json camera_to_json(const Camera& c) {
  return Json{{"focal", c.focal}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

Camera camera_from_json(const Json& j) {
  try {
    Camera c{j.at("focal").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>(),
             j.at("width").get<int>(), j.at("height").get<int>()};
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("camera: ") + e.what());
  }
}

Json breakdown_to_json(const LossBreakdown& b) {
  return Json{{"keypoint", b.keypoint}, {"alignment_fwd", b.alignment_fwd}, {"alignment_bwd", b.alignment_bwd},
              {"prior", b.prior},       {"shape", b.shape},                 {"depth", b.depth},
              {"smooth", b.smooth},     {"total", b.total}};
}

Json starts_to_json(const std::vector<StartTrace>& starts) {
  Json a = Json::array();
  for (const StartTrace& s : starts) {
    a.push_back(Json{{"yaw", s.yaw},
                     {"diverged", s.diverged},
                     {"final_value", s.diverged ? Json(nullptr) : Json(s.final_value)},
                     {"status", to_string(s.status)},
                     {"iterations", s.iterations},
                     {"values", s.values}});
  }
  return a;
}

Json metrics_to_json(const Metrics& m) {
  return Json{{"mpjpe", m.mpjpe}, {"mpvpe", m.mpvpe}, {"mpjpe_pa", m.mpjpe_pa}};
}

PoseVector pose_from_json(const Json& values, Representation rep) {
  PoseVector p;
  p.rep = rep;
  p.values = vec_from_json(values);
  return p;
}

int count_frames(const fs::path& dir) {
  int n = 0;
  while (fs::exists(dir / frame_file(n, "keypoints.csv"))) ++n;
  return n;
}

Representation data_representation(const Json& c, const fs::path& data, Eigen::Index dim) {
  const std::string r = str(c, "representation");
  if (r != "auto") return representation_from_string(r);
  try {
    const Json src = embedded_config(data);
    if (src.contains("representation")) return representation_from_string(src["representation"].get<std::string>());
  } catch (const Error&) {
  }
  if (dim % 6 != 0) return Representation::AngleAxis;
  config_error("cannot infer the representation of " + data.string() + "; set representation");
}

// ---------------------------------------------------------------- commands

void cmd_synth(const Json& c, std::ostream& log) {
  const fs::path dir = str(c, "out_dir");
  // Reject bad counts before anything is written.
  const int nf = positive(c, "num_frames");
  const Camera cam = Camera::centered(positive(c, "width"), positive(c, "height"), num(c, "focal"));
  cam.validate();
  ensure_parent(dir / "x");
  BodyModel model =
      str(c, "model").empty()
          ? make_synthetic_model(seed_of(c, "model_seed"), 24, 10, positive(c, "vertices"), 14)
          : load_model(str(c, "model"));
  model.representation = representation_from_string(str(c, "representation"));
  const std::string tag = comment_for(c);
  Json mj = model_to_json(model);
  mj["config"] = c;
  write_json(dir / "model.json", mj);

  const PoseDistribution dist = PoseDistribution::make(model.num_joints(), seed_of(c, "distribution_seed"),
                                                       positive(c, "latent_dim"), num(c, "spread"));
  const std::uint64_t seed = seed_of(c);
  const MatX corpus = sample_pose_corpus(dist, positive(c, "num_poses"), model.representation, seed);
  write_samples_csv(dir / "poses.csv", corpus, tag);

  Json cj = camera_to_json(cam);
  cj["config"] = c;
  write_json(dir / "camera.json", cj);

  SceneConfig sc;
  sc.yaw_range = num(c, "yaw_range");
  sc.tilt_range = num(c, "tilt_range");
  sc.shape_sigma = num(c, "shape_sigma");
  sc.depth = num(c, "depth");
  sc.depth_jitter = num(c, "depth_jitter");
  sc.offset_range = num(c, "offset_range");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Scene> scenes;
  if (flag(c, "sequence")) {
    scenes = sample_sequence(model, dist, sc, nf, num(c, "latent_step"), rng);
  } else {
    for (int t = 0; t < nf; ++t) scenes.push_back(sample_scene(model, dist, sc, rng));
  }

  RenderConfig rc;
  rc.keypoint_noise = num(c, "keypoint_noise");
  rc.splat_radius = num(c, "splat_radius");
  rc.with_mask = flag(c, "with_mask");
  Json gt;
  gt["config"] = c;
  gt["representation"] = std::string(to_string(model.representation));
  gt["frames"] = Json::array();
  for (int t = 0; t < nf; ++t) {
    const Scene& s = scenes[t];
    const FrameEvidence ev = render_evidence(model, cam, s, rc, rng);
    write_keypoints_csv(dir / frame_file(t, "keypoints.csv"), ev.keypoints, ev.confidence, tag);
    if (ev.mask) write_pgm(dir / frame_file(t, "mask.pgm"), cam.width, cam.height, ev.mask->labels(), tag);
    gt["frames"].push_back(Json{{"index", t},
                                {"theta", vec_to_json(s.theta.values)},
                                {"beta", vec_to_json(s.beta)},
                                {"translation", vec_to_json(s.translation)}});
  }
  write_json(dir / "ground_truth.json", gt);
  log << "synth: " << corpus.cols() << " poses, " << nf << " frames -> " << dir.string() << '\n';
}

void cmd_train_prior(const Json& c, std::ostream& log) {
  const fs::path data_path = str(c, "data");
  const MatX data = read_samples_csv(data_path);
  if (data.cols() == 0) throw Error(ErrorCode::EmptyDataset, data_path.string() + " holds no samples");
  const Representation rep = data_representation(c, data_path, data.rows());
  const fs::path out = str(c, "out");
  ensure_parent(out);
  const std::string kind = str(c, "prior");
  const int dim = static_cast<int>(data.rows());
  if (kind == "flow") {
    FlowArchitecture arch = flow_kind_from_string(str(c, "architecture")) == FlowKind::LowCapacity
                                ? FlowArchitecture::low_capacity(dim)
                                : FlowArchitecture::real_nvp(dim);
    if (integer(c, "blocks") > 0) arch.blocks = integer(c, "blocks");
    if (integer(c, "hidden") > 0) arch.hidden = integer(c, "hidden");
    TrainConfig tc;
    tc.steps = integer(c, "steps");
    tc.batch_size = positive(c, "batch_size");
    tc.learning_rate = num(c, "learning_rate");
    tc.decay_rate = num(c, "decay_rate");
    tc.decay_steps = positive(c, "decay_steps");
    tc.holdout_fraction = num(c, "holdout_fraction");
    tc.eval_every = positive(c, "eval_every");
    tc.seed = seed_of(c);
    if (tc.steps < 0) config_error("steps must be >= 0");
    const TrainResult tr = train_flow(data, arch, tc, [&](const TrainPoint& p) {
      log << "step " << p.step << " train_nll " << p.train_nll << " holdout_nll " << p.holdout_nll << '\n';
    });
    Json curve = Json::array();
    for (const TrainPoint& p : tr.curve) curve.push_back(Json{p.step, p.train_nll, p.holdout_nll});
    Json header;
    header["config"] = c;
    header["training"] = Json{{"initial_holdout_nll", tr.initial_holdout_nll},
                              {"final_holdout_nll", tr.final_holdout_nll},
                              {"best_step", tr.best_step},
                              {"steps_run", tr.steps_run},
                              {"curve", curve}};
    save_flow(out, tr.flow, rep, header);
    log << "train-prior: " << tr.flow.parameter_count() << " parameters -> " << out.string() << '\n';
  } else if (kind == "gmm") {
    GmmFitConfig gc;
    gc.modes = positive(c, "gmm_modes");
    gc.max_iterations = positive(c, "gmm_iterations");
    const std::string diag = str(c, "gmm_diagonal");
    if (diag == "true") {
      gc.diagonal = true;
    } else if (diag == "false") {
      gc.diagonal = false;
    } else if (diag != "auto") {
      config_error("gmm_diagonal must be auto, true or false");
    }
    gc.seed = seed_of(c);
    const GmmPrior g = gmm_fit(data, gc);
    Json j;
    j["config"] = c;
    j["format"] = "nfpose-gmm";
    j["representation"] = std::string(to_string(rep));
    j["gmm"] = gmm_to_json(g);
    write_json(out, j);
    log << "train-prior: " << g.num_modes() << " modes -> " << out.string() << '\n';
  } else {
    config_error("prior must be flow or gmm");
  }
}

struct LoadedData {
  std::shared_ptr<BodyModel> model;
  Camera camera;
  std::optional<Json> truth;
};

LoadedData load_data_dir(const fs::path& dir) {
  LoadedData d;
  d.model = std::make_shared<BodyModel>(load_model(dir / "model.json"));
  d.camera = camera_from_json(read_json(dir / "camera.json"));
  if (fs::exists(dir / "ground_truth.json")) d.truth = read_json(dir / "ground_truth.json");
  return d;
}

PosedBody truth_body(const BodyModel& model, const Json& truth, int index) {
  for (const Json& f : truth.at("frames")) {
    if (f.at("index").get<int>() == index) {
      return pose_body(model, pose_from_json(f.at("theta"), model.representation), vec_from_json(f.at("beta")));
    }
  }
  throw Error(ErrorCode::IoError, "ground truth lacks frame " + std::to_string(index));
}

void cmd_fit(const Json& c, std::ostream& log) {
  const std::string mode = str(c, "mode");
  if (mode != "static" && mode != "sequence") config_error("mode must be static or sequence");
  const fs::path dir = str(c, "data_dir");
  const LoadedData data = load_data_dir(dir);
  const BodyModel& model = *data.model;

  FitProblem p;
  p.model = data.model;
  p.camera = data.camera;
  p.prior = prior_kind_from_string(str(c, "prior"));
  const fs::path prior_path = str(c, "prior_path");
  if (p.prior == PriorKind::NfLatent || p.prior == PriorKind::NfAmbient) {
    FlowCheckpoint ck = load_flow(prior_path);
    if (ck.representation != model.representation) config_error("flow and body model representations differ");
    p.flow = std::make_shared<FlowModel>(std::move(ck.flow));
  } else if (p.prior == PriorKind::Gmm) {
    const Json j = read_json(prior_path);
    if (representation_from_string(j.at("representation").get<std::string>()) != model.representation) {
      config_error("mixture and body model representations differ");
    }
    p.gmm = std::make_shared<GmmPrior>(gmm_from_json(j.at("gmm")));
  }
  p.weights = LossWeights{num(c, "w_keypoint"), num(c, "w_alignment"), num(c, "w_prior"), num(c, "w_shape"),
                          num(c, "w_depth")};
  if (num(c, "smoothness") >= 0.0) p.smoothness = num(c, "smoothness");
  p.translation_correction = flag(c, "translation_correction");

  const int available = count_frames(dir);
  const int first = integer(c, "first_frame");
  const int requested = integer(c, "num_frames");
  const int nf = requested > 0 ? requested : available - first;
  if (first < 0 || nf < 1 || first + nf > available) {
    config_error("frames [" + std::to_string(first) + ", " + std::to_string(first + nf) + ") not in " +
                 dir.string());
  }
  const int stride = positive(c, "mask_stride");
  for (int t = first; t < first + nf; ++t) {
    FrameEvidence ev;
    read_keypoints_csv(dir / frame_file(t, "keypoints.csv"), model.num_joints(), ev.keypoints, ev.confidence);
    const fs::path mask = dir / frame_file(t, "mask.pgm");
    if (flag(c, "use_masks") && fs::exists(mask)) {
      int w = 0, h = 0;
      std::vector<std::uint8_t> labels;
      read_pgm(mask, w, h, labels);
      ev.mask.emplace(w, h, std::move(labels), model.num_parts(), stride);
    }
    p.frames.push_back(std::move(ev));
  }
  p.validate();

  FitOptions opt;
  opt.bfgs.max_iterations = positive(c, "max_iterations");
  opt.bfgs.gradient_tolerance = num(c, "gradient_tolerance");
  opt.bfgs.relative_tolerance = num(c, "relative_tolerance");
  const int starts = positive(c, "starts");
  opt.start_yaws.clear();
  for (int k = 0; k < starts; ++k) opt.start_yaws.push_back(2.0 * std::numbers::pi * k / starts);

  Json result;
  result["config"] = c;
  result["prior"] = to_string(p.prior);
  result["representation"] = std::string(to_string(model.representation));
  result["mode"] = mode;
  result["frames"] = Json::array();
  const int rd = p.root_dim();

  auto frame_json = [&](int index, const FrameState& s, const VecX& code, const VecX& beta) {
    return Json{{"index", index},
                {"root", vec_to_json(s.theta.values.head(rd))},
                {"code", vec_to_json(code)},
                {"theta", vec_to_json(s.theta.values)},
                {"beta", vec_to_json(beta)},
                {"translation", vec_to_json(s.translation)}};
  };

  std::vector<PosedBody> fitted;
  if (mode == "static") {
    const std::vector<FitResult> fits = fit_frames_independently(p, opt);
    for (int t = 0; t < nf; ++t) {
      const FitResult& r = fits[t];
      Json f = frame_json(first + t, r.frames[0], r.codes[0], r.beta);
      f["breakdown"] = breakdown_to_json(r.breakdown);
      f["selected_start"] = r.selected_start;
      f["starts"] = starts_to_json(r.starts);
      result["frames"].push_back(f);
      fitted.push_back(r.frames[0].body);
      log << "frame " << first + t << ": loss " << r.breakdown.total << '\n';
    }
  } else {
    const FitResult r = fit_sequence(p, opt);
    for (int t = 0; t < nf; ++t) {
      result["frames"].push_back(frame_json(first + t, r.frames[t], r.codes[t], r.beta));
      fitted.push_back(r.frames[t].body);
    }
    result["beta"] = vec_to_json(r.beta);
    result["breakdown"] = breakdown_to_json(r.breakdown);
    result["selected_start"] = r.selected_start;
    result["starts"] = starts_to_json(r.starts);
    result["mean_code_velocity"] = mean_code_velocity(r.codes);
    log << "sequence: loss " << r.breakdown.total << '\n';
  }

  if (data.truth) {
    Json ms = Json::array();
    Metrics mean;
    for (int t = 0; t < nf; ++t) {
      const Metrics m = evaluate(fitted[t], truth_body(model, *data.truth, first + t));
      Json mj = metrics_to_json(m);
      mj["frame"] = first + t;
      ms.push_back(mj);
      mean.mpjpe += m.mpjpe / nf;
      mean.mpvpe += m.mpvpe / nf;
      mean.mpjpe_pa += m.mpjpe_pa / nf;
    }
    result["metrics"] = Json{{"frames", ms}, {"mean", metrics_to_json(mean)}};
    log << "mean mpjpe " << mean.mpjpe << " m\n";
  }
  const fs::path out = str(c, "out");
  ensure_parent(out);
  write_json(out, result);
}

void cmd_eval(const Json& c, std::ostream& log) {
  const Json r = read_json(str(c, "result"));
  fs::path dir = str(c, "data_dir");
  try {
    if (dir.empty()) dir = r.at("config").at("data_dir").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::IoError, "fit result without data_dir; set data_dir");
  }
  const LoadedData data = load_data_dir(dir);
  if (!data.truth) throw Error(ErrorCode::IoError, (dir / "ground_truth.json").string() + " missing");
  const BodyModel& model = *data.model;
  std::string csv = "# " + comment_for(c) + "\nframe,mpjpe,mpvpe,mpjpe_pa\n";
  Metrics mean;
  int n = 0;
  try {
    for (const Json& f : r.at("frames")) {
      const int index = f.at("index").get<int>();
      const PosedBody pred =
          pose_body(model, pose_from_json(f.at("theta"), model.representation), vec_from_json(f.at("beta")));
      const Metrics m = evaluate(pred, truth_body(model, *data.truth, index));
      csv += std::to_string(index) + ',' + format_double(m.mpjpe) + ',' + format_double(m.mpvpe) + ',' +
             format_double(m.mpjpe_pa) + '\n';
      mean.mpjpe += m.mpjpe;
      mean.mpvpe += m.mpvpe;
      mean.mpjpe_pa += m.mpjpe_pa;
      ++n;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("fit result: ") + e.what());
  }
  if (n == 0) throw Error(ErrorCode::IoError, "fit result has no frames");
  csv += "mean," + format_double(mean.mpjpe / n) + ',' + format_double(mean.mpvpe / n) + ',' +
         format_double(mean.mpjpe_pa / n) + '\n';
  const fs::path out = str(c, "out");
  ensure_parent(out);
  write_text(out, csv);
  log << "eval: " << n << " frames, mean mpjpe " << mean.mpjpe / n << " m -> " << out.string() << '\n';
}

void cmd_sample(const Json& c, std::ostream& log) {
  const FlowCheckpoint ck = load_flow(str(c, "flow"));
  const MatX s = sample(ck.flow, positive(c, "num_samples"), seed_of(c));
  const fs::path out = str(c, "out");
  ensure_parent(out);
  write_samples_csv(out, s, comment_for(c));
  log << "sample: " << s.cols() << " poses -> " << out.string() << '\n';
}

void cmd_interp(const Json& c, std::ostream& log) {
  const FlowCheckpoint ck = load_flow(str(c, "flow"));
  const MatX poses = read_samples_csv(str(c, "poses"));
  if (poses.rows() != ck.flow.dim()) throw Error(ErrorCode::DimensionMismatch, "pose file and flow dimensions differ");
  const int a = integer(c, "index_a"), b = integer(c, "index_b");
  if (a < 0 || b < 0 || a >= poses.cols() || b >= poses.cols()) config_error("pose index out of range");
  const VecX za = ck.flow.forward(poses.col(a)).first;
  const VecX zb = ck.flow.forward(poses.col(b)).first;
  const MatX path = interpolate(ck.flow, za, zb, positive(c, "steps"));
  const fs::path out = str(c, "out");
  ensure_parent(out);
  write_samples_csv(out, path, comment_for(c));
  log << "interp: " << path.cols() << " poses -> " << out.string() << '\n';
}

const std::map<std::string, std::pair<const char*, void (*)(const Json&, std::ostream&)>>& commands() {
  static const std::map<std::string, std::pair<const char*, void (*)(const Json&, std::ostream&)>> table{
      {"synth", {"Synthesise a pose corpus and rendered evidence", cmd_synth}},
      {"train-prior", {"Train a flow or mixture pose prior", cmd_train_prior}},
      {"fit", {"Fit pose and shape to keypoints and masks", cmd_fit}},
      {"eval", {"Score a fit result against ground truth", cmd_eval}},
      {"sample", {"Draw poses from a flow prior", cmd_sample}},
      {"interp", {"Decode a latent straight line between two poses", cmd_interp}},
  };
  return table;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidConfig: return ConfigFailure;
    case ErrorCode::IoError: return IoFailure;
    default: return NumericFailure;
  }
}

}  // namespace

Json default_config(const std::string& command) { return defaults_for(command); }

Json embedded_config(const fs::path& artifact) {
  if (artifact.extension() == ".json") {
    const Json j = read_json(artifact);
    if (!j.contains("config")) throw Error(ErrorCode::IoError, artifact.string() + " embeds no config");
    return j["config"];
  }
  const std::string head = read_text(artifact).substr(0, 1);
  if (head == "{") {
    const Json h = read_flow_header(artifact);
    if (!h.contains("config")) throw Error(ErrorCode::IoError, artifact.string() + " embeds no config");
    return h["config"];
  }
  const std::string comment = read_leading_comment(artifact);
  constexpr std::string_view prefix = "nfpose ";
  if (comment.rfind(prefix, 0) != 0) throw Error(ErrorCode::IoError, artifact.string() + " embeds no config");
  try {
    return Json::parse(comment.substr(prefix.size()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, artifact.string() + ": embedded config: " + e.what());
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Normalizing-flow pose priors and 3D body fitting"};
  app.require_subcommand(1);
  struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
  };
  std::map<std::string, Options> opts;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands()) {
    Options& o = opts[name];
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", o.config, "JSON configuration, or any artifact with an embedded one");
    sub->add_option("--set", o.sets, "Override a key: key=value (repeatable)");
    sub->add_option("--seed", o.seed, "Random seed");
    subs[name] = sub;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? Success : ConfigFailure;
  }
  std::string name;
  for (const auto& [n, sub] : subs) {
    if (sub->parsed()) name = n;
  }
  const Options& o = opts[name];
  std::optional<std::uint64_t> seed;
  if (subs[name]->count("--seed") > 0) seed = o.seed;
  try {
    const Json cfg = resolve(name, o.config, o.sets, seed);
    commands().at(name).second(cfg, out);
    return Success;
  } catch (const Error& e) {
    err << "nfpose " << name << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "nfpose " << name << ": " << e.what() << '\n';
    return IoFailure;
  } catch (const fs::filesystem_error& e) {
    err << "nfpose " << name << ": " << e.what() << '\n';
    return IoFailure;
  } catch (const std::exception& e) {
    err << "nfpose " << name << ": " << e.what() << '\n';
    return NumericFailure;
  }
}

}  // namespace nfpose::cli
