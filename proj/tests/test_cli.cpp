#include "cli.hpp"
#include "nfpose/io.hpp"
#include "nfpose/synth.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace nfpose;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("nfpose_cli_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

int synth(const TempDir& d, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{"synth", "--set", "out_dir=" + d / "synth", "--set", "num_poses=50",
                             "--set", "num_frames=2", "--set", "vertices=200"};
  a.insert(a.end(), extra.begin(), extra.end());
  return run(a);
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir d;
  std::string err;
  CHECK(run({"synth", "--set", "no_such_key=1"}, &err) == cli::ConfigFailure);
  CHECK(err.find("no_such_key") != std::string::npos);
  const std::string out = "out_dir=" + d / "synth";
  CHECK(run({"synth", "--set", out, "--set", "num_frames=many"}) == cli::ConfigFailure);
  CHECK(run({"synth", "--set", out, "--set", "num_frames=0"}) == cli::ConfigFailure);
  CHECK(!fs::exists(d / "synth"));
  CHECK(run({"bogus"}) == cli::ConfigFailure);
  CHECK(run({}) == cli::ConfigFailure);
  CHECK(run({"sample", "--set", "flow=" + d / "missing.flow"}) == cli::IoFailure);
  CHECK(run({"fit", "--config", d / "missing.json"}) == cli::IoFailure);
  CHECK(run({"fit", "--set", "data_dir=" + d / "synth", "--set", "mode=both"}) == cli::ConfigFailure);
}

TEST_CASE("defaults carry command and seed") {
  for (const char* c : {"synth", "train-prior", "fit", "eval", "sample", "interp"}) {
    const Json j = cli::default_config(c);
    CHECK(j.at("command") == c);
    CHECK(j.contains("seed"));
  }
}

TEST_CASE("synth evidence is reproducible from the stored ground truth") {
  TempDir d;
  REQUIRE(synth(d) == 0);
  const fs::path dir = d / "synth";
  const BodyModel model = load_model(dir / "model.json");
  const Json gt = read_json(dir / "ground_truth.json");
  const Camera cam = Camera::centered(512, 512);
  REQUIRE(gt["frames"].size() == 2);
  for (const Json& f : gt["frames"]) {
    Scene s;
    s.theta = PoseVector{model.representation, vec_from_json(f["theta"])};
    s.beta = vec_from_json(f["beta"]);
    s.translation = vec_from_json(f["translation"]);
    std::mt19937_64 rng(0);
    const FrameEvidence ev = render_evidence(model, cam, s, RenderConfig{}, rng);
    const std::string stem = (dir / ("frame_00" + std::to_string(f["index"].get<int>()))).string();
    Points2 kp;
    std::vector<double> conf;
    read_keypoints_csv(stem + "_keypoints.csv", model.num_joints(), kp, conf);
    CHECK((kp - ev.keypoints).cwiseAbs().maxCoeff() < 1e-9);
    int w = 0, h = 0;
    std::vector<std::uint8_t> px;
    read_pgm(stem + "_mask.pgm", w, h, px);
    CHECK(px == ev.mask->labels());
  }
  CHECK(cli::embedded_config(dir / "poses.csv").at("command") == "synth");
  CHECK(cli::embedded_config(dir / "frame_000_mask.pgm").at("num_frames") == 2);
}

TEST_CASE("eval of the ground truth itself scores zero") {
  TempDir d;
  REQUIRE(synth(d) == 0);
  Json gt = read_json(d / "synth/ground_truth.json");
  Json result{{"config", {{"data_dir", d / "synth"}}}, {"frames", gt["frames"]}};
  write_json(d / "perfect.json", result);
  REQUIRE(run({"eval", "--set", "result=" + d / "perfect.json", "--set", "out=" + d / "m.csv"}) == 0);
  std::istringstream csv(read_text(d / "m.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("frame", 0) == 0) continue;
    std::istringstream fields(line);
    std::string cell;
    std::getline(fields, cell, ',');
    CHECK((cell == "mean" || cell == std::to_string(rows)));
    while (std::getline(fields, cell, ',')) CHECK(std::abs(std::stod(cell)) < 1e-12);
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("seed flag and config round trip") {
  TempDir d;
  REQUIRE(synth(d, {"--seed", "5"}) == 0);
  const Json c = cli::embedded_config(d / "synth/model.json");
  CHECK(c.at("seed") == 5);
  CHECK(c.at("num_poses") == 50);
  const std::string first = read_text(d / "synth/poses.csv");
  REQUIRE(synth(d, {"--seed", "6"}) == 0);
  CHECK(read_text(d / "synth/poses.csv") != first);
  // --set overrides the embedded config.
  fs::copy_file(d / "synth/model.json", d / "kept.json");
  REQUIRE(run({"synth", "--config", d / "kept.json", "--set", "num_poses=20"}) == 0);
  CHECK(read_samples_csv(d / "synth/poses.csv").cols() == 20);
  CHECK(cli::embedded_config(d / "synth/model.json").at("seed") == 6);
}
