#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <map>

#include "rp/eval.hpp"
#include "rp/rng.hpp"

namespace rp {

namespace {

constexpr int kNumUnits = kNumFolds;  // CV folds 0-4 plus the holdout

enum class SlotKind { kSingle, kStacked, kRandom };

struct Slot {
  SlotKind kind = SlotKind::kSingle;
  std::string name;
  std::size_t scorer = 0;  ///< index into the scored predictor list; its cells are RS-alone
  std::vector<double> rp;
};

std::vector<std::size_t> cv_folds_except(const FoldAssignment& folds, int excluded) {
  std::vector<int> keep;
  for (int f = 0; f < kHoldoutFold; ++f) {
    if (f != excluded) keep.push_back(f);
  }
  return folds.indices_in(keep);
}

/// Ratings that train the predictor for split `s` (and label the cascade of unit `s`).
std::vector<std::size_t> fit_indices(const FoldAssignment& folds, int s) {
  return s == kHoldoutFold ? cv_folds_except(folds, -1) : cv_folds_except(folds, s);
}

Matrix<double> take_rows(const Matrix<double>& x, std::span<const std::size_t> rows) {
  Matrix<double> out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = x.row(rows[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

std::vector<double> take(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
  return out;
}

std::vector<UserItemPair> pairs_of(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<UserItemPair> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = {ds.ratings()[idx[k]].user, ds.ratings()[idx[k]].item};
  return out;
}

void put_rows(Matrix<double>& dst, const Matrix<double>& src, std::span<const std::size_t> rows) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto s = src.row(k);
    std::copy(s.begin(), s.end(), dst.row(rows[k]).begin());
  }
}

GBTConfig unit_config(const ExperimentConfig& cfg, std::size_t slot, int unit) {
  GBTConfig g = cfg.gbt;
  g.seed = mix_seed(mix_seed(cfg.seed, cfg.gbt.seed), slot * 8 + static_cast<std::uint64_t>(unit));
  return g;
}

std::vector<double> cascade_predict(const Matrix<double>& x_train, std::span<const double> y_train,
                                    const Matrix<double>& x_eval, const GBTConfig& g, bool clamp) {
  const GBTModel model = gbt_fit(x_train, y_train, g);
  return gbt_predict(model, x_eval, clamp);
}

Matrix<double> random_features(std::size_t n, std::uint64_t seed) {
  Matrix<double> x(n, kNumRpFeatures);
  const std::uint64_t base = mix_seed(seed, 0xF00D);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < kNumRpFeatures; ++f) x(r, f) = to_unit(splitmix64(base + r * kNumRpFeatures + f));
  }
  return x;
}

std::vector<std::uint64_t> pair_keys(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::uint64_t> keys(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Rating& r = ds.ratings()[idx[k]];
    keys[k] = static_cast<std::uint64_t>(r.user) * ds.n_items() + r.item;
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

std::size_t overlap(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  std::size_t n = 0;
  for (auto k : a) n += std::binary_search(b.begin(), b.end(), k) ? 1 : 0;
  return n;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

void check_no_leakage(std::span<const SplitAudit> audit) {
  for (const auto& a : audit) {
    const std::string unit = a.eval_fold == kHoldoutFold ? "holdout" : "fold " + std::to_string(a.eval_fold);
    if (a.label_eval_overlap != 0) {
      throw Error("leak: " + unit + " trains the cascade on " + std::to_string(a.label_eval_overlap) +
                  " evaluation pairs");
    }
    if (a.eval_scorer_fit_overlap != 0) {
      throw Error("leak: " + unit + " scores evaluation pairs with a predictor fitted on them");
    }
    if (a.eval_fold == kHoldoutFold && a.eval_any_fit_overlap != 0) {
      throw Error("leak: holdout ratings reached a predictor fit");
    }
  }
}

EvaluationRun evaluate(const Dataset& ds, const FoldAssignment& folds, const ExperimentPlan& plan,
                       const ExperimentConfig& cfg, const std::string& dataset_id, const ProgressFn& progress) {
  cfg.hp.validate();
  cfg.gbt.validate();
  if (folds.fold_of_rating.size() != ds.n_ratings()) throw DataError("fold file does not match the dataset");
  for (auto n : folds.sizes()) {
    if (n == 0) throw DataError("every fold needs at least one rating");
  }
  if (plan.algorithms.empty() && !plan.stacked && !plan.random_features) throw UsageError("nothing to evaluate");
  const auto log = [&](const std::string& s) {
    if (progress) progress(s);
  };

  // predictors whose CPMs are needed, components first so the ensemble can share them
  bool need_components = plan.stacked;
  for (const auto& a : plan.algorithms) need_components |= a.id == AlgorithmId::kEnsemble;
  std::vector<AlgorithmSpec> scored;
  const auto index_of = [&](AlgorithmSpec a) {
    const auto it = std::find(scored.begin(), scored.end(), a);
    if (it != scored.end()) return static_cast<std::size_t>(it - scored.begin());
    scored.push_back(a);
    return scored.size() - 1;
  };
  if (need_components) {
    for (const auto& a : kComponentAlgorithms) index_of(a);
    index_of({AlgorithmId::kEnsemble});
  }
  std::vector<Slot> slots;
  for (const auto& a : plan.algorithms) {
    Slot s;
    s.name = to_string(a);
    s.scorer = index_of(a);
    slots.push_back(std::move(s));
  }
  if (plan.stacked) {
    Slot s;
    s.kind = SlotKind::kStacked;
    s.name = "stacked";
    s.scorer = index_of({AlgorithmId::kEnsemble});
    slots.push_back(std::move(s));
  }
  if (plan.random_features) {
    Slot s;
    s.kind = SlotKind::kRandom;
    s.name = "random_features";
    s.scorer = index_of(plan.random_reference);
    slots.push_back(std::move(s));
  }
  std::vector<bool> needs_features(scored.size(), false);
  for (const auto& s : slots) {
    if (s.kind == SlotKind::kSingle) needs_features[s.scorer] = true;
  }
  if (plan.stacked) {
    for (const auto& a : kComponentAlgorithms) needs_features[index_of(a)] = true;
  }

  const std::size_t n = ds.n_ratings();
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = ds.ratings()[r].value;
  for (auto& s : slots) s.rp.assign(n, 0.0);
  std::vector<std::vector<double>> rs(scored.size(), std::vector<double>(n, 0.0));
  std::vector<Matrix<double>> features(scored.size());
  if (cfg.source == FeatureSource::kCrossFit) {
    for (std::size_t k = 0; k < scored.size(); ++k) {
      if (needs_features[k]) features[k] = Matrix<double>(n, kNumRpFeatures);
    }
  }
  std::vector<std::vector<std::uint64_t>> fit_keys(kNumUnits);

  using clock = std::chrono::steady_clock;
  for (int split = 0; split < kNumUnits; ++split) {
    const auto t0 = clock::now();
    const auto fit_idx = fit_indices(folds, split);
    const auto eval_idx = folds.indices_in(split);
    fit_keys[split] = pair_keys(ds, fit_idx);
    const Dataset train = ds.subset(fit_idx);
    const std::uint64_t split_seed = mix_seed(cfg.seed, 0x5117 + static_cast<std::uint64_t>(split));

    std::vector<PredictorPtr> predictors(scored.size());
    for (std::size_t k = 0; k < scored.size(); ++k) {
      if (scored[k].id == AlgorithmId::kEnsemble) continue;
      predictors[k] = fit(scored[k], cfg.hp, train, split_seed);
    }
    std::vector<Cpm> cpms(scored.size());
    if (need_components) {
      std::vector<PredictorPtr> comps;
      for (const auto& a : kComponentAlgorithms) comps.push_back(predictors[index_of(a)]);
      const std::size_t e = index_of({AlgorithmId::kEnsemble});
      predictors[e] = make_ensemble(std::move(comps), cfg.hp.clamp);
      auto joint = generate_ensemble_cpms(static_cast<const EnsembleModel&>(*predictors[e]), split_seed, cfg.cpm);
      for (std::size_t c = 0; c < kComponentAlgorithms.size(); ++c) cpms[index_of(kComponentAlgorithms[c])] = std::move(joint[c]);
      cpms[e] = std::move(joint.back());
    }
    for (std::size_t k = 0; k < scored.size(); ++k) {
      if (cpms[k].scores.empty()) cpms[k] = generate_cpm(*predictors[k], split_seed, cfg.cpm);
    }
    predictors.clear();
    const auto t1 = clock::now();

    const auto eval_pairs = pairs_of(ds, eval_idx);
    const auto train_pairs = pairs_of(ds, fit_idx);
    const auto y_train = take(y, fit_idx);
    std::vector<Matrix<double>> train_blocks(scored.size()), eval_blocks(scored.size());
    for (std::size_t k = 0; k < scored.size(); ++k) {
      for (std::size_t j = 0; j < eval_idx.size(); ++j) {
        rs[k][eval_idx[j]] = cpms[k].scores(eval_pairs[j].user, eval_pairs[j].item);
      }
      if (!needs_features[k]) continue;
      eval_blocks[k] = feature_matrix(cpms[k], eval_pairs);
      if (cfg.source == FeatureSource::kCrossFit) {
        put_rows(features[k], eval_blocks[k], eval_idx);
      } else {
        train_blocks[k] = feature_matrix(cpms[k], train_pairs);
      }
      cpms[k] = Cpm{};
    }
    cpms.clear();

    if (cfg.source == FeatureSource::kSameCpm) {
      for (std::size_t s = 0; s < slots.size(); ++s) {
        Slot& slot = slots[s];
        std::vector<double> pred;
        if (slot.kind == SlotKind::kSingle) {
          pred = cascade_predict(train_blocks[slot.scorer], y_train, eval_blocks[slot.scorer],
                                 unit_config(cfg, s, split), cfg.clamp_cascade);
        } else if (slot.kind == SlotKind::kStacked) {
          std::vector<Matrix<double>> tr, ev;
          for (const auto& a : kComponentAlgorithms) {
            tr.push_back(train_blocks[index_of(a)]);
            ev.push_back(eval_blocks[index_of(a)]);
          }
          pred = cascade_predict(stack(tr), y_train, stack(ev), unit_config(cfg, s, split), cfg.clamp_cascade);
        } else {
          continue;
        }
        for (std::size_t j = 0; j < eval_idx.size(); ++j) slot.rp[eval_idx[j]] = pred[j];
      }
    }
    const auto t2 = clock::now();
    const auto secs = [](auto d) { return std::chrono::duration<double>(d).count(); };
    char buf[160];
    std::snprintf(buf, sizeof buf, "split %d/%d: predictors+CPMs %.1fs, features%s %.1fs", split + 1, kNumUnits,
                  secs(t1 - t0), cfg.source == FeatureSource::kSameCpm ? "+cascades" : "", secs(t2 - t1));
    log(buf);
  }

  // cascades over out-of-fold features (and the random-feature control in either mode)
  const auto fit_units = [&](Slot& slot, std::size_t s, const Matrix<double>& x) {
    for (int unit = 0; unit < kNumUnits; ++unit) {
      const auto tr = fit_indices(folds, unit);
      const auto ev = folds.indices_in(unit);
      const auto pred = cascade_predict(take_rows(x, tr), take(y, tr), take_rows(x, ev), unit_config(cfg, s, unit),
                                        cfg.clamp_cascade);
      for (std::size_t j = 0; j < ev.size(); ++j) slot.rp[ev[j]] = pred[j];
    }
  };
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Slot& slot = slots[s];
    const auto t0 = clock::now();
    if (slot.kind == SlotKind::kRandom) {
      fit_units(slot, s, random_features(n, cfg.seed));
    } else if (cfg.source == FeatureSource::kCrossFit) {
      if (slot.kind == SlotKind::kSingle) {
        fit_units(slot, s, features[slot.scorer]);
      } else {
        std::vector<Matrix<double>> blocks;
        for (const auto& a : kComponentAlgorithms) blocks.push_back(features[index_of(a)]);
        fit_units(slot, s, stack(blocks));
      }
    } else {
      continue;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "cascade %s: %.1fs", slot.name.c_str(),
                  std::chrono::duration<double>(clock::now() - t0).count());
    log(buf);
  }

  EvaluationRun run;
  for (int unit = 0; unit < kNumUnits; ++unit) {
    const auto ev_keys = pair_keys(ds, folds.indices_in(unit));
    SplitAudit a;
    a.eval_fold = unit;
    const auto& label_keys = fit_keys[unit];  // cascade labels are the unit's training folds
    a.n_label_pairs = label_keys.size();
    a.n_eval_pairs = ev_keys.size();
    a.label_eval_overlap = overlap(label_keys, ev_keys);
    a.eval_scorer_fit_overlap = overlap(fit_keys[unit], ev_keys);
    std::vector<std::uint64_t> reach;
    if (cfg.source == FeatureSource::kCrossFit) {
      // training rows of this unit were scored by the predictors of the other splits
      for (int g = 0; g < kNumUnits; ++g) {
        if (unit == kHoldoutFold ? true : (g != unit && g != kHoldoutFold)) {
          reach.insert(reach.end(), fit_keys[g].begin(), fit_keys[g].end());
        }
      }
      if (unit != kHoldoutFold) reach.insert(reach.end(), fit_keys[unit].begin(), fit_keys[unit].end());
    } else {
      reach = fit_keys[unit];
    }
    std::sort(reach.begin(), reach.end());
    reach.erase(std::unique(reach.begin(), reach.end()), reach.end());
    a.eval_any_fit_overlap = overlap(reach, ev_keys);
    run.audit.push_back(a);
  }
  check_no_leakage(run.audit);

  const auto holdout = folds.indices_in(kHoldoutFold);
  const auto train_all = fit_indices(folds, kHoldoutFold);
  const auto y_hold = take(y, holdout);
  const auto y_train = take(y, train_all);
  for (const auto& slot : slots) {
    ExperimentResult res;
    res.dataset_id = dataset_id;
    res.algorithm = slot.name;
    res.seed = cfg.seed;
    const auto& base = rs[slot.scorer];
    for (int f = 0; f < kHoldoutFold; ++f) {
      const auto idx = folds.indices_in(f);
      const auto yf = take(y, idx);
      res.rmse_rs_alone.push_back(rmse(yf, take(base, idx)));
      res.rmse_rs_plus_rp.push_back(rmse(yf, take(slot.rp, idx)));
    }
    const auto rs_hold = take(base, holdout);
    const auto rp_hold = take(slot.rp, holdout);
    res.holdout_rmse_rs = rmse(y_hold, rs_hold);
    res.holdout_rmse_rs_rp = rmse(y_hold, rp_hold);
    res.delta_rmse = res.holdout_rmse_rs_rp - res.holdout_rmse_rs;
    std::vector<double> err_rs(holdout.size()), err_rp(holdout.size());
    for (std::size_t j = 0; j < holdout.size(); ++j) {
      err_rs[j] = std::abs(rs_hold[j] - y_hold[j]);
      err_rp[j] = std::abs(rp_hold[j] - y_hold[j]);
    }
    const auto w = wilcoxon_signed_rank(err_rp, err_rs);
    res.p_value = w.p_value;
    res.wilcoxon_w = w.w;
    res.category = categorize(res.delta_rmse, res.p_value);
    res.n_eval = holdout.size();
    auto& sm = res.summary;
    sm.prediction_mean = mean_of(rp_hold);
    sm.prediction_std = std_of(rp_hold);
    sm.train_label_mean = mean_of(y_train);
    sm.train_label_std = std_of(y_train);
    sm.eval_label_std = std_of(y_hold);
    sm.mean_predictor_rmse = rmse(y_hold, std::vector<double>(y_hold.size(), sm.train_label_mean));
    run.results.push_back(std::move(res));
  }
  return run;
}

ExperimentResult run_experiment(const Dataset& dataset, const FoldAssignment& folds, AlgorithmSpec algorithm,
                                const ExperimentConfig& config, const std::string& dataset_id) {
  ExperimentPlan plan;
  plan.algorithms = {algorithm};
  return evaluate(dataset, folds, plan, config, dataset_id).results.front();
}

ExperimentResult run_stacked_experiment(const Dataset& dataset, const FoldAssignment& folds,
                                        const ExperimentConfig& config, const std::string& dataset_id) {
  ExperimentPlan plan;
  plan.stacked = true;
  return evaluate(dataset, folds, plan, config, dataset_id).results.front();
}

ExperimentResult negative_control_random_features(const Dataset& dataset, const FoldAssignment& folds,
                                                  const ExperimentConfig& config, const std::string& dataset_id,
                                                  AlgorithmSpec reference) {
  ExperimentPlan plan;
  plan.random_features = true;
  plan.random_reference = reference;
  return evaluate(dataset, folds, plan, config, dataset_id).results.front();
}

}  // namespace rp
