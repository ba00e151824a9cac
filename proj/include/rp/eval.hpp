#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rp/cascade.hpp"
#include "rp/cpm.hpp"
#include "rp/dataset.hpp"
#include "rp/recsys.hpp"
#include "rp/rpfeat.hpp"

namespace rp {

inline constexpr double kSignificanceLevel = 0.05;

/// Throws DataError on empty or mismatched input.
double rmse(std::span<const double> y, std::span<const double> yhat);

enum class WilcoxonMethod { kAuto, kExact, kNormal };
/// Sample sizes up to this use the exact null distribution under kAuto.
inline constexpr std::size_t kWilcoxonExactMax = 20;

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;  ///< min(w_plus, w_minus)
  double p_value = 1.0;  ///< two-sided
  std::size_t n_nonzero = 0;
  bool exact = false;
};

/// Signed-rank test on the differences a - b. Zero differences are dropped and tied magnitudes
/// share their average rank.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::kAuto);

enum class Category { kSigBetter, kBetterNs, kWorseNs, kSigWorse };

std::string to_string(Category c);
Category parse_category(const std::string& s);
/// delta < 0 means the cascade improved on the initial predictor.
Category categorize(double delta, double p_value) noexcept;

/// Where the cascade's training features come from.
///   kCrossFit: each CV fold's rows are scored by a predictor fitted without that fold.
///   kSameCpm: training and evaluation rows are both read from the CPM of one predictor fitted
///             on the training folds.
enum class FeatureSource { kCrossFit, kSameCpm };

std::string to_string(FeatureSource s);
FeatureSource parse_feature_source(const std::string& s);

struct ExperimentConfig {
  HyperParams hp;
  GBTConfig gbt;
  std::uint64_t seed = 7;
  FeatureSource source = FeatureSource::kCrossFit;
  CpmOptions cpm;
  bool clamp_cascade = false;
};

/// Held-out prediction distribution of the cascade next to its training labels.
struct PredictionSummary {
  double prediction_mean = 0.0;
  double prediction_std = 0.0;
  double train_label_mean = 0.0;
  double train_label_std = 0.0;
  double eval_label_std = 0.0;
  double mean_predictor_rmse = 0.0;  ///< RMSE of predicting train_label_mean everywhere
};

struct ExperimentResult {
  std::string dataset_id;
  std::string algorithm;
  std::vector<double> rmse_rs_alone;    ///< per CV fold
  std::vector<double> rmse_rs_plus_rp;  ///< per CV fold
  double holdout_rmse_rs = 0.0;
  double holdout_rmse_rs_rp = 0.0;
  double delta_rmse = 0.0;  ///< holdout_rmse_rs_rp - holdout_rmse_rs
  double p_value = 1.0;
  double wilcoxon_w = 0.0;
  Category category = Category::kWorseNs;
  std::uint64_t seed = 0;
  std::size_t n_eval = 0;
  PredictionSummary summary;
};

/// One cascade evaluation unit (CV fold 0-4 or the holdout) and the overlaps that would
/// indicate leakage. "fit" sets are the ratings that trained initial predictors.
struct SplitAudit {
  int eval_fold = 0;
  std::size_t n_label_pairs = 0;
  std::size_t n_eval_pairs = 0;
  std::size_t label_eval_overlap = 0;
  std::size_t eval_scorer_fit_overlap = 0;  ///< predictor that scored the evaluation rows
  std::size_t eval_any_fit_overlap = 0;     ///< any predictor whose output reaches this unit
};

/// Throws Error if a unit trains the cascade on evaluation labels, scores evaluation rows with
/// a predictor fitted on them, or lets any holdout rating reach a predictor fit.
void check_no_leakage(std::span<const SplitAudit> audit);

struct ExperimentPlan {
  std::vector<AlgorithmSpec> algorithms;
  bool stacked = false;
  bool random_features = false;
  AlgorithmSpec random_reference{AlgorithmId::kNegativeControl};
};

struct EvaluationRun {
  std::vector<ExperimentResult> results;
  std::vector<SplitAudit> audit;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every requested experiment split by split, fitting each predictor once per split.
/// Results come in plan order: single algorithms, then "stacked", then "random_features".
EvaluationRun evaluate(const Dataset& dataset, const FoldAssignment& folds, const ExperimentPlan& plan,
                       const ExperimentConfig& config, const std::string& dataset_id,
                       const ProgressFn& progress = {});

ExperimentResult run_experiment(const Dataset& dataset, const FoldAssignment& folds, AlgorithmSpec algorithm,
                                const ExperimentConfig& config, const std::string& dataset_id);
/// 168-wide stacked features against the Ensemble mean.
ExperimentResult run_stacked_experiment(const Dataset& dataset, const FoldAssignment& folds,
                                        const ExperimentConfig& config, const std::string& dataset_id);
/// Uniform [0, 1] features in place of the 14 RP features; RS-alone is `reference`.
ExperimentResult negative_control_random_features(const Dataset& dataset, const FoldAssignment& folds,
                                                  const ExperimentConfig& config, const std::string& dataset_id,
                                                  AlgorithmSpec reference = {AlgorithmId::kNegativeControl});

/// comma-delimited: dataset,algorithm,rmse_rs,rmse_rs_rp,delta,p_value,category,seed
std::string results_table(std::span<const ExperimentResult> results);
/// dataset,algorithm,fold,rmse_rs,rmse_rs_rp
std::string per_fold_table(std::span<const ExperimentResult> results);
std::string grid_markdown(std::span<const ExperimentResult> results);
std::string grid_html(std::span<const ExperimentResult> results);
/// "improved: x/y experiments; significantly improved: z/y experiments" plus per-category counts.
std::string improvement_summary(std::span<const ExperimentResult> results);

/// dataset,algorithm,prediction_mean,prediction_std,train_label_mean,train_label_std,eval_label_std,mean_predictor_rmse
std::string prediction_summary_table(std::span<const ExperimentResult> results);
/// eval_fold,n_label_pairs,n_eval_pairs,label_eval_overlap,eval_scorer_fit_overlap,eval_any_fit_overlap
std::string audit_table(std::span<const SplitAudit> audit);

/// Writes results.csv, per_fold.csv, grid.md, grid.html, summary.txt and predictions.csv into `dir`.
void write_report(const std::string& dir, std::span<const ExperimentResult> results);
/// Reads back the top-level fields of a results.csv file.
std::vector<ExperimentResult> read_results(const std::string& path);

}  // namespace rp
