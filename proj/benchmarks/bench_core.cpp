#include "sasreid/encoder.hpp"
#include "sasreid/eval.hpp"
#include "sasreid/temporal.hpp"
#include "sasreid/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace sasreid;

namespace {

ag::Matrix randn(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void BM_DistanceMatrix(benchmark::State& state) {
  Rng rng(1);
  const auto n = state.range(0);
  const ag::Matrix q = randn(rng, n, 138), g = randn(rng, 4 * n, 138);
  for (auto _ : state) benchmark::DoNotOptimize(eval::distance_matrix(q, g));
  state.SetItemsProcessed(state.iterations() * n * 4 * n);
}
BENCHMARK(BM_DistanceMatrix)->Arg(64)->Arg(256);

void BM_CmcMap(benchmark::State& state) {
  Rng rng(2);
  const auto n = state.range(0);
  const ag::Matrix d = randn(rng, n, 4 * n);
  std::vector<int> qid(static_cast<std::size_t>(n)), gid(static_cast<std::size_t>(4 * n));
  for (std::size_t i = 0; i < qid.size(); ++i) qid[i] = static_cast<int>(i % 16);
  for (std::size_t i = 0; i < gid.size(); ++i) gid[i] = static_cast<int>(i % 16);
  for (auto _ : state) benchmark::DoNotOptimize(eval::cmc_map(d, qid, gid));
}
BENCHMARK(BM_CmcMap)->Arg(64)->Arg(256);

void BM_SequenceMixer(benchmark::State& state) {
  Rng rng(3);
  nn::ParamRegistry reg;
  temporal::SequenceMixer mixer(reg, "m", 64, rng);
  const ag::Matrix seq = randn(rng, state.range(0), 64);
  for (auto _ : state) benchmark::DoNotOptimize(mixer.run(seq));
}
BENCHMARK(BM_SequenceMixer)->Arg(8)->Arg(64)->Arg(512);

void BM_EncoderForward(benchmark::State& state) {
  Rng rng(4);
  encoder::EncoderConfig cfg;
  nn::ParamRegistry backbone, head;
  encoder::FrameEncoder enc(cfg, backbone, head, rng);
  const ag::Matrix patches = randn(rng, state.range(0) * cfg.num_patches(), cfg.patch_width());
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(ag::constant(patches)).value());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(8)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  synth::SynthConfig sc;
  sc.num_identities = 8;
  sc.tracklets_per_cell = 1;
  TrainConfig cfg;
  train::Trainer trainer(cfg, synth::render_dataset(sc));
  train::PkSampler sampler(std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3}, 4, 4);
  Rng rng(5);
  const auto batch = sampler.sample(rng);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
