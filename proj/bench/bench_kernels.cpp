#include "nfpose/body.hpp"
#include "nfpose/flow.hpp"
#include "nfpose/nearest.hpp"
#include "nfpose/rotation.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace nfpose;

namespace {

Points2 random_points(Eigen::Index n, std::uint64_t seed, double extent) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  Points2 p(n, 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

// Mask-sized point set against a vertex-sized query set.
void BM_NearestBruteForce(benchmark::State& s) {
  const Points2 pts = random_points(s.range(0), 1, 512.0), q = random_points(s.range(1), 2, 512.0);
  for (auto _ : s) benchmark::DoNotOptimize(nearest_brute_force(q, pts));
}

void BM_NearestGridSerial(benchmark::State& s) {
  const Points2 pts = random_points(s.range(0), 1, 512.0), q = random_points(s.range(1), 2, 512.0);
  const GridIndex grid(pts);
  for (auto _ : s) benchmark::DoNotOptimize(nearest_all_serial(grid, q));
}

void BM_NearestGridOmp(benchmark::State& s) {
  const Points2 pts = random_points(s.range(0), 1, 512.0), q = random_points(s.range(1), 2, 512.0);
  const GridIndex grid(pts);
  for (auto _ : s) benchmark::DoNotOptimize(nearest_all(grid, q));
}

struct SkinningFixture {
  BodyModel model;
  PoseTape tape;
  explicit SkinningFixture(int vertices) : model(make_synthetic_model(0, 24, 10, vertices, 14)) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.3);
    PoseVector th = PoseVector::identity(model.representation, 24);
    for (Eigen::Index i = 0; i < th.values.size(); ++i) th.values[i] += g(rng);
    pose_body(model, th, VecX::Zero(10), &tape);
  }
};

void BM_SkinSerial(benchmark::State& s) {
  const SkinningFixture f(static_cast<int>(s.range(0)));
  Points3 out;
  for (auto _ : s) {
    skin_vertices_serial(f.model, f.tape.world, f.tape.skin_translation, f.tape.shaped_vertices, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_SkinOmp(benchmark::State& s) {
  const SkinningFixture f(static_cast<int>(s.range(0)));
  Points3 out;
  for (auto _ : s) {
    skin_vertices(f.model, f.tape.world, f.tape.skin_translation, f.tape.shaped_vertices, out);
    benchmark::DoNotOptimize(out.data());
  }
}

struct FlowFixture {
  FlowModel flow{FlowArchitecture::real_nvp(138), 0};
  MatX x;
  explicit FlowFixture(Eigen::Index n) : x(MatX::Random(138, n) * 0.5) {}
};

void BM_FlowLogProbSerial(benchmark::State& s) {
  const FlowFixture f(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(log_prob_batch_serial(f.flow, f.x));
}

void BM_FlowLogProbOmp(benchmark::State& s) {
  const FlowFixture f(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(log_prob_batch(f.flow, f.x));
}

}  // namespace

BENCHMARK(BM_NearestBruteForce)->Args({4000, 500})->Args({20000, 2000})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NearestGridSerial)->Args({4000, 500})->Args({20000, 2000})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_NearestGridOmp)->Args({4000, 500})->Args({20000, 2000})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SkinSerial)->Arg(480)->Arg(6890)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SkinOmp)->Arg(480)->Arg(6890)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FlowLogProbSerial)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FlowLogProbOmp)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
