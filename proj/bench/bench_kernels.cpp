#include <benchmark/benchmark.h>

#include "rp/cascade.hpp"
#include "rp/cpm.hpp"
#include "rp/recsys.hpp"
#include "rp/rng.hpp"
#include "rp/rpfeat.hpp"

namespace {

using namespace rp;

Dataset make_dataset(std::size_t n_users, std::size_t n_items, std::size_t n_ratings) {
  Rng rng(11);
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  std::vector<std::uint8_t> taken(n_users * n_items, 0);
  std::vector<Rating> ratings;
  while (ratings.size() < n_ratings) {
    const auto u = static_cast<std::uint32_t>(rng.below(n_users));
    const auto i = static_cast<std::uint32_t>(rng.below(n_items));
    if (taken[u * n_items + i]++) continue;
    ratings.push_back({u, i, static_cast<double>(1 + rng.below(5))});
  }
  return Dataset(std::move(users), std::move(items), std::move(ratings));
}

const Dataset& dataset() {
  static const Dataset d = make_dataset(600, 900, 40000);
  return d;
}

const PredictorPtr& baseline() {
  static const PredictorPtr p = fit({AlgorithmId::kBaseline}, {}, dataset(), 1);
  return p;
}

const Cpm& cpm() {
  static const Cpm c = generate_cpm(*baseline(), 1);
  return c;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::kParallel : Exec::kSerial; }

void BM_GenerateCpm(benchmark::State& state) {
  CpmOptions opts;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(generate_cpm(*baseline(), 1, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cpm().scores.data().size()));
}

void BM_FeatureMatrix(benchmark::State& state) {
  std::vector<UserItemPair> pairs;
  for (const auto& r : dataset().ratings()) pairs.push_back({r.user, r.item});
  for (auto _ : state) benchmark::DoNotOptimize(feature_matrix(cpm(), pairs, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs.size()));
}

void BM_GbtFit(benchmark::State& state) {
  std::vector<UserItemPair> pairs;
  std::vector<double> y;
  for (const auto& r : dataset().ratings()) {
    pairs.push_back({r.user, r.item});
    y.push_back(r.value);
  }
  const Matrix<double> x = feature_matrix(cpm(), pairs);
  GBTConfig cfg;
  cfg.n_trees = 20;
  for (auto _ : state) benchmark::DoNotOptimize(gbt_fit(x, y, cfg, exec_of(state)));
}

void BM_SimilarityMatrix(benchmark::State& state) {
  const TrainingData t(dataset());
  for (auto _ : state) {
    benchmark::DoNotOptimize(similarity_matrix(SimilarityKind::kMsd, Orientation::kUser, t, exec_of(state)));
  }
}

}  // namespace

BENCHMARK(BM_GenerateCpm)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeatureMatrix)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbtFit)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilarityMatrix)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
