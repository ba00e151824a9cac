#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "rp/eval.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace rp;

namespace {

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.hp.n_factors = 8;
  c.hp.n_epochs = 10;
  c.hp.nmf_factors = 4;
  c.hp.nmf_epochs = 10;
  c.gbt.n_trees = 40;
  c.gbt.max_depth = 3;
  c.gbt.min_samples_leaf = 10;
  return c;
}

}  // namespace

TEST_CASE("rmse examples and invariants") {
  const std::vector<double> y = {1, 2}, yhat = {2, 4};
  CHECK(rmse(y, yhat) == doctest::Approx(std::sqrt(2.5)));
  CHECK(rmse(y, y) == 0.0);
  const std::vector<double> a = {3}, b = {1};
  CHECK(rmse(a, b) == 2.0);
  CHECK_THROWS_AS(rmse(y, a), DataError);
  CHECK_THROWS_AS(rmse(std::span<const double>(), std::span<const double>()), DataError);

  Rng rng(1);
  std::vector<double> u(50), v(50);
  for (auto& x : u) x = rng.uniform();
  for (auto& x : v) x = rng.uniform();
  const double r0 = rmse(u, v);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span(perm));
  std::vector<double> pu, pv;
  for (auto k : perm) {
    pu.push_back(u[k]);
    pv.push_back(v[k]);
  }
  CHECK(rmse(pu, pv) == doctest::Approx(r0).epsilon(1e-14));
}

TEST_CASE("Wilcoxon examples") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6}, z(6, 0.0);
  const WilcoxonResult r = wilcoxon_signed_rank(a, z);
  CHECK(r.w == 0.0);
  CHECK(r.w_plus == 21.0);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-12));

  const WilcoxonResult same = wilcoxon_signed_rank(a, a);
  CHECK(same.p_value == 1.0);
  CHECK(same.n_nonzero == 0);

  const WilcoxonResult swapped = wilcoxon_signed_rank(z, a);
  CHECK(swapped.p_value == r.p_value);
  CHECK(swapped.w_plus == r.w_minus);
  CHECK(swapped.w_minus == r.w_plus);

  CHECK_THROWS_AS(wilcoxon_signed_rank(a, std::span(z.data(), 5)), DataError);
}

TEST_CASE("exact Wilcoxon matches full sign enumeration for n <= 12") {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = static_cast<double>(rng.below(7));
      b[k] = static_cast<double>(rng.below(7));
    }
    const WilcoxonResult r = wilcoxon_signed_rank(a, b, WilcoxonMethod::kExact);
    CAPTURE(t);
    CHECK(std::abs(r.p_value - oracle::wilcoxon_enumerated_p(a, b)) <= 1e-12);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(wilcoxon_signed_rank(b, a, WilcoxonMethod::kExact).p_value == r.p_value);
  }
}

TEST_CASE("exact and normal branches agree at n = 20") {
  Rng rng(8);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(20), b(20);
    for (std::size_t k = 0; k < 20; ++k) {
      a[k] = rng.normal(0.3 * rng.uniform(), 1.0);
      b[k] = rng.normal(0.0, 1.0);
    }
    const double pe = wilcoxon_signed_rank(a, b, WilcoxonMethod::kExact).p_value;
    const double pn = wilcoxon_signed_rank(a, b, WilcoxonMethod::kNormal).p_value;
    worst = std::max(worst, std::abs(pe - pn));
  }
  CHECK(worst <= 0.01);
}

TEST_CASE("auto method switches to the normal approximation above 20") {
  Rng rng(9);
  std::vector<double> a(21), b(21, 0.0);
  for (auto& x : a) x = rng.normal(0.0, 1.0);
  CHECK_FALSE(wilcoxon_signed_rank(a, b).exact);
  CHECK(wilcoxon_signed_rank(std::span(a.data(), 20), std::span(b.data(), 20)).exact);
}

TEST_CASE("categories follow the legend") {
  CHECK(categorize(-0.05, 0.01) == Category::kSigBetter);
  CHECK(categorize(0.001, 0.4) == Category::kWorseNs);
  CHECK(categorize(-0.001, 0.4) == Category::kBetterNs);
  CHECK(categorize(0.02, 0.001) == Category::kSigWorse);
  CHECK(categorize(-0.02, 0.05) == Category::kBetterNs);
  for (auto c : {Category::kSigBetter, Category::kBetterNs, Category::kWorseNs, Category::kSigWorse}) {
    CHECK(parse_category(to_string(c)) == c);
  }
  CHECK_THROWS_AS(parse_category("meh"), DataError);
  CHECK(parse_feature_source(to_string(FeatureSource::kSameCpm)) == FeatureSource::kSameCpm);
  CHECK(parse_feature_source("cross_fit") == FeatureSource::kCrossFit);
}

TEST_CASE("leak check rejects each kind of overlap") {
  std::vector<SplitAudit> clean(6);
  for (int k = 0; k < 6; ++k) clean[k].eval_fold = k;
  clean[2].eval_any_fit_overlap = 10;
  CHECK_NOTHROW(check_no_leakage(clean));
  auto bad = clean;
  bad[0].label_eval_overlap = 1;
  CHECK_THROWS_AS(check_no_leakage(bad), Error);
  bad = clean;
  bad[3].eval_scorer_fit_overlap = 2;
  CHECK_THROWS_AS(check_no_leakage(bad), Error);
  bad = clean;
  bad[5].eval_any_fit_overlap = 1;
  CHECK_THROWS_AS(check_no_leakage(bad), Error);
}

TEST_CASE("end-to-end on a small structured dataset") {
  const Dataset d = test::structured_dataset(60, 40, 0.5, 3);
  const FoldAssignment folds = make_folds(d, 7);
  const ExperimentConfig cfg = quick_config();
  ExperimentPlan plan;
  plan.algorithms = {{AlgorithmId::kBaseline}, {AlgorithmId::kSvd}};
  plan.random_features = true;
  const EvaluationRun run = evaluate(d, folds, plan, cfg, "toy");
  REQUIRE(run.results.size() == 3);
  CHECK(run.results[0].algorithm == "baseline");
  CHECK(run.results[1].algorithm == "svd");
  CHECK(run.results[2].algorithm == "random_features");
  REQUIRE(run.audit.size() == 6);
  for (const auto& a : run.audit) {
    CHECK(a.label_eval_overlap == 0);
    CHECK(a.eval_scorer_fit_overlap == 0);
    CHECK(a.n_label_pairs + a.n_eval_pairs <= d.n_ratings());
    CHECK(a.n_eval_pairs > 0);
  }
  CHECK(run.audit[5].eval_any_fit_overlap == 0);
  CHECK(run.audit[5].n_eval_pairs == folds.indices_in(kHoldoutFold).size());
  for (const auto& r : run.results) {
    CHECK(r.dataset_id == "toy");
    CHECK(r.rmse_rs_alone.size() == 5);
    CHECK(r.rmse_rs_plus_rp.size() == 5);
    CHECK(r.delta_rmse == doctest::Approx(r.holdout_rmse_rs_rp - r.holdout_rmse_rs));
    CHECK(r.category == categorize(r.delta_rmse, r.p_value));
    CHECK(r.n_eval == folds.indices_in(kHoldoutFold).size());
    CHECK(r.seed == cfg.seed);
  }
  const EvaluationRun again = evaluate(d, folds, plan, cfg, "toy");
  CHECK(results_table(again.results) == results_table(run.results));
  CHECK(per_fold_table(again.results) == per_fold_table(run.results));
  CHECK(prediction_summary_table(again.results) == prediction_summary_table(run.results));

  const ExperimentResult single = run_experiment(d, folds, {AlgorithmId::kSvd}, cfg, "toy");
  CHECK(single.holdout_rmse_rs == run.results[1].holdout_rmse_rs);
  CHECK(single.holdout_rmse_rs_rp == run.results[1].holdout_rmse_rs_rp);
}

TEST_CASE("same-CPM feature source audits clean too") {
  const Dataset d = test::structured_dataset(40, 30, 0.5, 4);
  const FoldAssignment folds = make_folds(d, 2);
  ExperimentConfig cfg = quick_config();
  cfg.source = FeatureSource::kSameCpm;
  ExperimentPlan plan;
  plan.algorithms = {{AlgorithmId::kKnnBasic}};
  const EvaluationRun run = evaluate(d, folds, plan, cfg, "toy");
  REQUIRE(run.results.size() == 1);
  for (const auto& a : run.audit) {
    CHECK(a.label_eval_overlap == 0);
    CHECK(a.eval_scorer_fit_overlap == 0);
    CHECK(a.eval_any_fit_overlap == 0);
  }
}

TEST_CASE("stacked experiment compares against the ensemble") {
  const Dataset d = test::structured_dataset(30, 24, 0.5, 5);
  const FoldAssignment folds = make_folds(d, 3);
  ExperimentConfig cfg = quick_config();
  cfg.gbt.n_trees = 10;
  const ExperimentResult r = run_stacked_experiment(d, folds, cfg, "toy");
  CHECK(r.algorithm == "stacked");
  const ExperimentResult e = run_experiment(d, folds, {AlgorithmId::kEnsemble}, cfg, "toy");
  CHECK(r.holdout_rmse_rs == e.holdout_rmse_rs);
}

TEST_CASE("an already flat Baseline leaves nothing to refine") {
  // Ratings drawn independently of user and item: every user and item mean is the global mean in
  // expectation, and a held-out rating says nothing about the rest of its row or column.
  Rng rng(31);
  std::vector<std::string> users, items;
  for (int k = 0; k < 40; ++k) {
    users.push_back("u" + std::to_string(k));
    items.push_back("i" + std::to_string(k));
  }
  std::vector<Rating> ratings;
  for (std::uint32_t u = 0; u < 40; ++u) {
    for (std::uint32_t i = 0; i < 40; ++i) ratings.push_back({u, i, rng.below(2) ? 4.0 : 2.0});
  }
  const Dataset d(users, items, ratings);
  const ExperimentResult r = run_experiment(d, make_folds(d, 7), {AlgorithmId::kBaseline}, quick_config(), "flat");
  CAPTURE(to_string(r.category));
  CAPTURE(r.delta_rmse);
  CAPTURE(r.p_value);
  CHECK((r.category == Category::kBetterNs || r.category == Category::kWorseNs));
}

TEST_CASE("evaluate input validation") {
  const Dataset d = test::structured_dataset(20, 20, 0.5, 6);
  ExperimentPlan empty;
  CHECK_THROWS_AS(evaluate(d, make_folds(d, 1), empty, {}, "x"), UsageError);
  ExperimentPlan plan;
  plan.algorithms = {{AlgorithmId::kBaseline}};
  CHECK_THROWS_AS(evaluate(d, make_folds(d.n_ratings() + 1, 1), plan, {}, "x"), DataError);
}

TEST_CASE("reports render and read back") {
  std::vector<ExperimentResult> rs(4);
  const Category cats[4] = {Category::kSigBetter, Category::kBetterNs, Category::kWorseNs, Category::kSigWorse};
  for (int k = 0; k < 4; ++k) {
    rs[k].dataset_id = k < 2 ? "ml-100k" : "other";
    rs[k].algorithm = k % 2 ? "svd" : "baseline";
    rs[k].holdout_rmse_rs = 1.0 + k * 0.01;
    rs[k].holdout_rmse_rs_rp = 0.95 + k * 0.02;
    rs[k].delta_rmse = rs[k].holdout_rmse_rs_rp - rs[k].holdout_rmse_rs;
    rs[k].p_value = k == 0 || k == 3 ? 0.001 : 0.3;
    rs[k].category = cats[k];
    rs[k].seed = 7;
    rs[k].rmse_rs_alone = {1, 1, 1, 1, 1};
    rs[k].rmse_rs_plus_rp = {0.9, 0.9, 0.9, 0.9, 0.9};
  }
  const std::string summary = improvement_summary(rs);
  CHECK(summary.find("improved: 2/4 experiments") != std::string::npos);
  CHECK(summary.find("significantly improved: 1/4 experiments") != std::string::npos);
  const std::string md = grid_markdown(rs);
  CHECK(md.find("| svd |") != std::string::npos);
  CHECK(md.find("ml-100k") != std::string::npos);
  const std::string html = grid_html(rs);
  for (const char* colour : {"#1a9850", "#a6d96a", "#fdae61", "#d73027"}) CHECK(html.find(colour) != std::string::npos);

  test::TempDir dir("report");
  write_report(dir.path().string(), rs);
  for (const char* f : {"results.csv", "per_fold.csv", "grid.md", "grid.html", "summary.txt", "predictions.csv"}) {
    CHECK(std::filesystem::exists(dir.path() / f));
  }
  const auto back = read_results(dir.file("results.csv"));
  REQUIRE(back.size() == 4);
  CHECK(results_table(back) == results_table(rs));
  CHECK_THROWS_AS(write_report(dir.path().string(), {}), UsageError);
  test::write_file(dir.file("bad.csv"), "dataset,algorithm\n");
  CHECK_THROWS_AS(read_results(dir.file("bad.csv")), DataError);
}
