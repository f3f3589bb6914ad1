#include <benchmark/benchmark.h>

#include "neuroalign/decode.hpp"
#include "neuroalign/model.hpp"
#include "neuroalign/repr.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synth.hpp"

using namespace neuroalign;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

LabeledMatrix labeled(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  LabeledMatrix m;
  m.values = gaussian(r, c, seed);
  for (Eigen::Index i = 0; i < r; ++i) m.labels.push_back("s" + std::to_string(i));
  return m;
}

ModelConfig bench_model(int d_model) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = d_model;
  c.d_ff = 2 * d_model;
  c.vocab_size = 200;
  c.max_len = 32;
  return c;
}

}  // namespace

static void BM_ForwardBackward(benchmark::State& state) {
  const auto c = bench_model(static_cast<int>(state.range(0)));
  const auto p = TransformerParams::init(c, 1);
  std::vector<PieceId> ids = {Vocab::kCls};
  for (int i = 0; i < 20; ++i) ids.push_back(static_cast<PieceId>(5 + i * 7 % 190));
  ids.push_back(Vocab::kSep);
  AdjacencyMatrix adj(ids.size());
  adj.mark_special(0);
  adj.mark_special(ids.size() - 1);
  for (std::size_t i = 1; i + 2 < ids.size(); ++i) adj.connect(i, i + 1);
  const MlmTargets targets = {{3, 40}, {9, 80}, {15, 120}};
  const GuidanceSpec g{1, {0, 1}, 0.1};
  auto grads = TransformerParams::zeros(c);
  for (auto _ : state) {
    grads.set_zero();
    backward(forward(ids, {}, p, c), p, c, {&targets, &adj, &g}, grads);
    benchmark::DoNotOptimize(grads.token_embedding.data());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Arg(128);

static void BM_RidgeFit(benchmark::State& state) {
  const auto n = state.range(0);
  const auto b = gaussian(n, 64, 2), d = gaussian(n, 32, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ridge_fit(b, d, 1.0).weights.data());
}
BENCHMARK(BM_RidgeFit)->Arg(100)->Arg(400)->Arg(1600);

static void BM_NestedCv(benchmark::State& state) {
  const auto d = labeled(state.range(0), 32, 4);
  const auto b = gen_brain(d, {32, 0.5, true, 5});
  for (auto _ : state) benchmark::DoNotOptimize(nested_cv_decode(b, d).mean_pearson);
}
BENCHMARK(BM_NestedCv)->Arg(96)->Arg(240)->Unit(benchmark::kMillisecond);

static void BM_Wilcoxon(benchmark::State& state) {
  std::vector<double> diffs;
  Rng rng(6);
  for (int i = 0; i < state.range(0); ++i) diffs.push_back(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(wilcoxon_signed_rank(diffs));
}
BENCHMARK(BM_Wilcoxon)->Arg(8)->Arg(20);

static void BM_PairedBootstrap(benchmark::State& state) {
  PairedScores s;
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    s.a.push_back(rng.normal());
    s.b.push_back(rng.normal());
  }
  for (auto _ : state) benchmark::DoNotOptimize(paired_bootstrap(s, static_cast<int>(state.range(0)), 1).p_value);
}
BENCHMARK(BM_PairedBootstrap)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_RobinHood(benchmark::State& state) {
  const auto m = labeled(state.range(0), 64, 8);
  for (auto _ : state) benchmark::DoNotOptimize(robin_hood_index(m, 10));
}
BENCHMARK(BM_RobinHood)->Arg(100)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
