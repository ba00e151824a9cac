#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "manifest.hpp"
#include "rp/cascade.hpp"
#include "rp/cpm.hpp"
#include "rp/dataset.hpp"
#include "rp/densify.hpp"
#include "rp/eval.hpp"
#include "rp/recsys.hpp"
#include "rp/rpfeat.hpp"

namespace {

using namespace rp;
using rp::cli::RunManifest;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBudget = 3;

struct Globals {
  std::uint64_t seed = 7;
  int workers = 0;
  std::uint64_t budget_bytes = kDefaultBudgetBytes;
  std::string convention = "full";
  bool clamp = true;
  std::string delimiter = "\t";
  bool header = false;
};

struct ModelFlags {
  HyperParams hp;
  GBTConfig gbt;
};

FormatDescriptor format_of(const Globals& g) {
  FormatDescriptor f;
  f.delimiter = g.delimiter == "\\t" ? "\t" : g.delimiter;
  f.has_header = g.header;
  return f;
}

DensityConvention convention_of(const Globals& g) {
  if (g.convention == "full") return DensityConvention::kFull;
  if (g.convention == "half") return DensityConvention::kHalf;
  throw UsageError("--convention must be full or half");
}

std::string num(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// "0-4", "0,2,3" or "all".
std::vector<int> parse_fold_list(const std::string& s) {
  std::vector<int> out;
  if (s == "all") {
    for (int f = 0; f < kNumFolds; ++f) out.push_back(f);
    return out;
  }
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int lo = std::stoi(part.substr(0, dash)), hi = std::stoi(part.substr(dash + 1));
        for (int f = lo; f <= hi; ++f) out.push_back(f);
      }
    } catch (const std::logic_error&) {
      throw UsageError("bad fold list '" + s + "'");
    }
  }
  for (int f : out) {
    if (f < 0 || f >= kNumFolds) throw UsageError("fold " + std::to_string(f) + " out of range 0-5");
  }
  if (out.empty()) throw UsageError("empty fold list");
  return out;
}

std::vector<AlgorithmSpec> parse_algorithm_list(const std::string& s) {
  if (s == "all") return all_algorithms();
  std::vector<AlgorithmSpec> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_algorithm(part));
  if (out.empty()) throw UsageError("empty algorithm list");
  return out;
}

nlohmann::ordered_json globals_json(const Globals& g) {
  return {{"seed", g.seed},           {"workers", g.workers},     {"budget_bytes", g.budget_bytes},
          {"convention", g.convention}, {"clamp", g.clamp},        {"delimiter", g.delimiter},
          {"header", g.header}};
}

nlohmann::ordered_json hp_json(const HyperParams& hp) {
  return {{"k_neighbors", hp.k_neighbors},
          {"min_k", hp.min_k},
          {"similarity", hp.similarity == SimilarityKind::kMsd ? "msd" : "cosine"},
          {"n_factors", hp.n_factors},
          {"n_epochs", hp.n_epochs},
          {"learning_rate", hp.learning_rate},
          {"reg", hp.reg},
          {"init_std", hp.init_std},
          {"nmf_factors", hp.nmf_factors},
          {"nmf_epochs", hp.nmf_epochs},
          {"nmf_reg_user", hp.nmf_reg_user},
          {"nmf_reg_item", hp.nmf_reg_item},
          {"baseline_epochs", hp.baseline_epochs},
          {"baseline_reg_user", hp.baseline_reg_user},
          {"baseline_reg_item", hp.baseline_reg_item},
          {"cocluster_users", hp.cocluster_users},
          {"cocluster_items", hp.cocluster_items},
          {"cocluster_epochs", hp.cocluster_epochs},
          {"clamp", hp.clamp}};
}

nlohmann::ordered_json gbt_json(const GBTConfig& c) {
  return {{"n_trees", c.n_trees},     {"max_depth", c.max_depth},
          {"learning_rate", c.learning_rate}, {"subsample", c.subsample},
          {"min_samples_leaf", c.min_samples_leaf}, {"seed", c.seed}};
}

void add_hp_flags(CLI::App* sub, ModelFlags& m) {
  auto& hp = m.hp;
  sub->add_option("--knn-k", hp.k_neighbors, "KNN neighbourhood size");
  sub->add_option("--knn-min-k", hp.min_k, "KNN minimum neighbours");
  sub->add_option("--factors", hp.n_factors, "SVD/SVD++ latent factors");
  sub->add_option("--epochs", hp.n_epochs, "SVD/SVD++ epochs");
  sub->add_option("--lr", hp.learning_rate, "SVD/SVD++ learning rate");
  sub->add_option("--reg", hp.reg, "SVD/SVD++ regularisation");
  sub->add_option("--nmf-factors", hp.nmf_factors, "NMF latent factors");
  sub->add_option("--nmf-epochs", hp.nmf_epochs, "NMF epochs");
  sub->add_option("--baseline-epochs", hp.baseline_epochs, "baseline ALS epochs");
}

void add_gbt_flags(CLI::App* sub, ModelFlags& m) {
  auto& c = m.gbt;
  sub->add_option("--gbt-trees", c.n_trees, "cascade trees");
  sub->add_option("--gbt-depth", c.max_depth, "cascade tree depth");
  sub->add_option("--gbt-lr", c.learning_rate, "cascade learning rate");
  sub->add_option("--gbt-subsample", c.subsample, "cascade row subsample");
  sub->add_option("--gbt-min-leaf", c.min_samples_leaf, "cascade minimum rows per leaf");
}

RunManifest start_manifest(const std::string& command, int argc, char** argv, const Globals& g) {
  RunManifest m;
  m.command = command;
  m.argv.assign(argv, argv + argc);
  m.seed = g.seed;
  m.started_at = cli::utc_now();
  m.config["globals"] = globals_json(g);
  return m;
}

void finish_manifest(RunManifest& m, const std::string& artifact) {
  m.outputs.push_back(artifact);
  m.finished_at = cli::utc_now();
  m.write_for(artifact);
}

Dataset training_subset(const Dataset& ds, const std::string& folds_path, const std::string& fit_folds) {
  if (folds_path.empty()) return ds;
  const FoldAssignment folds = read_folds(folds_path);
  if (folds.fold_of_rating.size() != ds.n_ratings()) throw DataError("fold file does not match the dataset");
  const auto list = parse_fold_list(fit_folds);
  return ds.subset(folds.indices_in(list));
}

/// Dense index of every dataset id in a CPM's id table.
std::vector<std::uint32_t> index_map(const std::vector<std::string>& dataset_ids, const std::vector<std::string>& cpm_ids) {
  if (dataset_ids == cpm_ids) {
    std::vector<std::uint32_t> out(dataset_ids.size());
    for (std::uint32_t k = 0; k < out.size(); ++k) out[k] = k;
    return out;
  }
  std::unordered_map<std::string, std::uint32_t> pos;
  for (std::uint32_t k = 0; k < cpm_ids.size(); ++k) pos.emplace(cpm_ids[k], k);
  std::vector<std::uint32_t> out(dataset_ids.size(), UINT32_MAX);
  for (std::size_t k = 0; k < dataset_ids.size(); ++k) {
    const auto it = pos.find(dataset_ids[k]);
    if (it != pos.end()) out[k] = it->second;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reciprocal-perspective cascade for five-point rating recommenders"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file (flags win)");

  Globals g;
  app.add_option("--seed", g.seed, "master seed")->envname("RP_SEED");
  app.add_option("--workers", g.workers, "thread cap (0 = all cores)")->envname("RP_WORKERS");
  app.add_option("--budget-bytes", g.budget_bytes, "refuse CPMs larger than this")->envname("RP_BUDGET_BYTES");
  app.add_option("--convention", g.convention, "density convention: full (n*m) or half (n*m/2)")
      ->envname("RP_CONVENTION")
      ->check(CLI::IsMember({"full", "half"}));
  app.add_flag("--clamp,!--no-clamp", g.clamp, "clamp predictor scores to [1, 5]")->envname("RP_CLAMP");
  app.add_option("--delimiter", g.delimiter, "ratings file delimiter (\\t for tab)")->envname("RP_DELIMITER");
  app.add_flag("--header", g.header, "ratings file has a header line")->envname("RP_HEADER");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "print dataset statistics");
  std::string stats_data;
  std::vector<std::uint64_t> stats_counts;
  stats_cmd->add_option("data", stats_data, "ratings file");
  stats_cmd->add_option("--counts", stats_counts, "n_users n_items n_ratings instead of a file")
      ->expected(3)
      ->delimiter(',');

  // densify
  auto* densify_cmd = app.add_subcommand("densify", "k-core densification to a target density");
  std::string densify_data, densify_out;
  double densify_target = 0.01;
  int densify_k = 0;
  densify_cmd->add_option("data", densify_data, "ratings file")->required();
  densify_cmd->add_option("--target", densify_target, "target density");
  densify_cmd->add_option("--k", densify_k, "use this k-core directly instead of a target");
  densify_cmd->add_option("--out", densify_out, "densified ratings file");

  // folds
  auto* folds_cmd = app.add_subcommand("folds", "assign ratings to six folds (fold 5 is the holdout)");
  std::string folds_data, folds_out;
  folds_cmd->add_option("data", folds_data, "ratings file")->required();
  folds_cmd->add_option("--out", folds_out, "fold file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "fit one initial predictor");
  std::string train_data, train_algo, train_folds, train_fit_folds = "0-4", train_out;
  ModelFlags train_flags;
  train_cmd->add_option("data", train_data, "ratings file")->required();
  train_cmd->add_option("--algo", train_algo, "algorithm name")->required();
  train_cmd->add_option("--folds", train_folds, "fold file; fit on --fit-folds only");
  train_cmd->add_option("--fit-folds", train_fit_folds, "folds to fit on");
  train_cmd->add_option("--out", train_out, "model file")->required();
  add_hp_flags(train_cmd, train_flags);

  // cpm
  auto* cpm_cmd = app.add_subcommand("cpm", "generate a Comprehensive Prediction Matrix");
  std::string cpm_model, cpm_data, cpm_algo, cpm_folds, cpm_fit_folds = "0-4", cpm_out;
  ModelFlags cpm_flags;
  cpm_cmd->add_option("--model", cpm_model, "fitted model file");
  cpm_cmd->add_option("--data", cpm_data, "ratings file (fit --algo first)");
  cpm_cmd->add_option("--algo", cpm_algo, "algorithm to fit when --data is given");
  cpm_cmd->add_option("--folds", cpm_folds, "fold file for --data");
  cpm_cmd->add_option("--fit-folds", cpm_fit_folds, "folds to fit on");
  cpm_cmd->add_option("--out", cpm_out, "CPM file")->required();
  add_hp_flags(cpm_cmd, cpm_flags);

  // rp-extract
  auto* rpx_cmd = app.add_subcommand("rp-extract", "extract the 14 RP features (168 when given 12 CPMs)");
  std::vector<std::string> rpx_cpms;
  std::string rpx_data, rpx_folds, rpx_fold_list = "all", rpx_out;
  rpx_cmd->add_option("--cpm", rpx_cpms, "CPM file(s); several are stacked in order")->required();
  rpx_cmd->add_option("--data", rpx_data, "ratings file whose pairs are extracted")->required();
  rpx_cmd->add_option("--folds", rpx_folds, "fold file");
  rpx_cmd->add_option("--fold-set", rpx_fold_list, "folds whose pairs are extracted");
  rpx_cmd->add_option("--out", rpx_out, "feature file")->required();

  // cascade
  auto* cas_cmd = app.add_subcommand("cascade", "fit the cascade (--labels) or apply it (--model)");
  std::string cas_features, cas_labels, cas_model, cas_out;
  bool cas_clamp_output = false;
  ModelFlags cas_flags;
  cas_cmd->add_option("--features", cas_features, "feature file")->required();
  auto* cas_labels_opt = cas_cmd->add_option("--labels", cas_labels, "ratings file supplying training labels");
  cas_cmd->add_option("--model", cas_model, "fitted cascade to apply")->excludes(cas_labels_opt);
  cas_cmd->add_option("--out", cas_out, "cascade model (fit) or predictions (apply)")->required();
  cas_cmd->add_flag("--clamp-output", cas_clamp_output, "clamp applied predictions to [1, 5]");
  add_gbt_flags(cas_cmd, cas_flags);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "full cross-validated RS vs RS+RP comparison");
  std::string eval_data, eval_algos = "all", eval_folds, eval_out, eval_source = "cross_fit", eval_id;
  bool eval_stacked = false, eval_random = false, eval_quiet = false, eval_clamp_cascade = false;
  ModelFlags eval_flags;
  eval_cmd->add_option("--data", eval_data, "ratings file")->required();
  eval_cmd->add_option("--algos", eval_algos, "comma list of algorithms, or all");
  eval_cmd->add_option("--folds", eval_folds, "fold file (default: derived from --seed)");
  eval_cmd->add_option("--out", eval_out, "report directory")->required();
  eval_cmd->add_option("--source", eval_source, "cascade feature source")
      ->check(CLI::IsMember({"cross_fit", "same_cpm"}));
  eval_cmd->add_option("--dataset-id", eval_id, "dataset label in the report (default: file stem)");
  eval_cmd->add_flag("--stacked", eval_stacked, "add the 168-feature stacked cascade");
  eval_cmd->add_flag("--random-features", eval_random, "add the random-feature negative control");
  eval_cmd->add_flag("--clamp-cascade", eval_clamp_cascade, "clamp cascade outputs before scoring");
  eval_cmd->add_flag("--quiet", eval_quiet, "no progress on stderr");
  add_hp_flags(eval_cmd, eval_flags);
  add_gbt_flags(eval_cmd, eval_flags);

  // report
  auto* report_cmd = app.add_subcommand("report", "render grids from a results table");
  std::string report_results, report_out;
  report_cmd->add_option("--results", report_results, "results.csv")->required();
  report_cmd->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_workers(g.workers);
    const auto fmt = format_of(g);

    if (stats_cmd->parsed()) {
      DatasetStats s;
      if (!stats_counts.empty()) {
        s = stats_from_counts(stats_counts[0], stats_counts[1], stats_counts[2]);
      } else if (!stats_data.empty()) {
        s = stats(ingest(stats_data, fmt));
      } else {
        throw UsageError("stats needs a ratings file or --counts");
      }
      std::cout << "n_users=" << s.n_users << "\n"
                << "n_items=" << s.n_items << "\n"
                << "n_ratings=" << s.n_ratings << "\n"
                << "cpm_elements_full=" << s.cpm_elements_full << "\n"
                << "cpm_elements_half=" << s.cpm_elements_half << "\n"
                << "density_full=" << num(s.density_full) << "\n"
                << "density_half=" << num(s.density_half) << "\n"
                << "sparsity_full=" << num(s.sparsity_full) << "\n"
                << "convention=" << g.convention << "\n"
                << "density=" << num(density(s, convention_of(g))) << "\n";
      return kExitOk;
    }

    if (densify_cmd->parsed()) {
      RunManifest m = start_manifest("densify", argc, argv, g);
      m.add_input(densify_data);
      const Dataset ds = ingest(densify_data, fmt);
      const auto conv = convention_of(g);
      DensifyResult res;
      if (densify_k > 0) {
        res.threshold_k = densify_k;
        res.dataset = kcore(ds, densify_k);
        res.stats_before = stats(ds);
        res.stats_after = res.dataset.empty() ? DatasetStats{} : stats(res.dataset);
        res.convention = conv;
      } else {
        res = densify_to(ds, densify_target, conv);
      }
      std::cout << "k=" << res.threshold_k << "\n"
                << "n_users=" << res.stats_after.n_users << "\n"
                << "n_items=" << res.stats_after.n_items << "\n"
                << "n_ratings=" << res.stats_after.n_ratings << "\n"
                << "density=" << num(density(res.stats_after, conv)) << "\n";
      if (!densify_out.empty()) {
        write_ratings(densify_out, res.dataset, fmt.delimiter);
        m.config["target"] = densify_target;
        m.config["k"] = res.threshold_k;
        finish_manifest(m, densify_out);
      }
      return kExitOk;
    }

    if (folds_cmd->parsed()) {
      RunManifest m = start_manifest("folds", argc, argv, g);
      m.add_input(folds_data);
      const Dataset ds = ingest(folds_data, fmt);
      write_folds(folds_out, make_folds(ds, g.seed));
      finish_manifest(m, folds_out);
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      RunManifest m = start_manifest("train", argc, argv, g);
      m.add_input(train_data);
      if (!train_folds.empty()) m.add_input(train_folds);
      train_flags.hp.clamp = g.clamp;
      const Dataset ds = ingest(train_data, fmt);
      const Dataset train = training_subset(ds, train_folds, train_fit_folds);
      const auto model = fit(parse_algorithm(train_algo), train_flags.hp, train, g.seed);
      save_predictor(*model, train_out);
      m.config["algorithm"] = train_algo;
      m.config["fit_folds"] = train_folds.empty() ? "all ratings" : train_fit_folds;
      m.config["hyperparameters"] = hp_json(train_flags.hp);
      finish_manifest(m, train_out);
      return kExitOk;
    }

    if (cpm_cmd->parsed()) {
      RunManifest m = start_manifest("cpm", argc, argv, g);
      CpmOptions opts;
      opts.budget_bytes = g.budget_bytes;
      PredictorPtr model;
      if (!cpm_model.empty()) {
        m.add_input(cpm_model);
        model = load_predictor(cpm_model);
      } else if (!cpm_data.empty() && !cpm_algo.empty()) {
        m.add_input(cpm_data);
        const Dataset ds = ingest(cpm_data, fmt);
        check_cpm_budget(ds.n_users(), ds.n_items(), opts.budget_bytes);
        cpm_flags.hp.clamp = g.clamp;
        model = fit(parse_algorithm(cpm_algo), cpm_flags.hp, training_subset(ds, cpm_folds, cpm_fit_folds), g.seed);
        m.config["algorithm"] = cpm_algo;
        m.config["hyperparameters"] = hp_json(cpm_flags.hp);
      } else {
        throw UsageError("cpm needs --model, or --data with --algo");
      }
      check_cpm_budget(model->n_users(), model->n_items(), opts.budget_bytes);
      save_cpm(generate_cpm(*model, g.seed, opts), cpm_out);
      finish_manifest(m, cpm_out);
      return kExitOk;
    }

    if (rpx_cmd->parsed()) {
      RunManifest m = start_manifest("rp-extract", argc, argv, g);
      m.add_input(rpx_data);
      const Dataset ds = ingest(rpx_data, fmt);
      std::vector<std::size_t> idx;
      if (!rpx_folds.empty()) {
        m.add_input(rpx_folds);
        const FoldAssignment folds = read_folds(rpx_folds);
        if (folds.fold_of_rating.size() != ds.n_ratings()) throw DataError("fold file does not match the dataset");
        idx = folds.indices_in(parse_fold_list(rpx_fold_list));
      } else {
        idx.resize(ds.n_ratings());
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
      }
      std::vector<Matrix<double>> blocks;
      std::vector<std::string> names;
      for (const auto& path : rpx_cpms) {
        m.add_input(path);
        const Cpm cpm = load_cpm(path);
        const auto umap = index_map(ds.users(), cpm.user_ids);
        const auto imap = index_map(ds.items(), cpm.item_ids);
        std::vector<UserItemPair> pairs(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const Rating& r = ds.ratings()[idx[k]];
          if (umap[r.user] == UINT32_MAX || imap[r.item] == UINT32_MAX) {
            throw DataError("CPM '" + path + "' has no cell for pair (" + ds.users()[r.user] + ", " +
                            ds.items()[r.item] + ")");
          }
          pairs[k] = {umap[r.user], imap[r.item]};
        }
        blocks.push_back(feature_matrix(cpm, pairs));
        names.push_back(to_string(cpm.algorithm));
      }
      FeatureTable t;
      for (auto k : idx) {
        t.users.push_back(ds.users()[ds.ratings()[k].user]);
        t.items.push_back(ds.items()[ds.ratings()[k].item]);
      }
      t.columns = feature_column_names(names);
      t.values = blocks.size() == 1 ? std::move(blocks.front()) : stack(blocks, blocks.size());
      write_features(rpx_out, t);
      m.config["fold_set"] = rpx_folds.empty() ? std::string("all ratings") : rpx_fold_list;
      finish_manifest(m, rpx_out);
      return kExitOk;
    }

    if (cas_cmd->parsed()) {
      RunManifest m = start_manifest("cascade", argc, argv, g);
      m.add_input(cas_features);
      const FeatureTable t = read_features(cas_features);
      if (!cas_labels.empty()) {
        m.add_input(cas_labels);
        const Dataset ds = ingest(cas_labels, fmt);
        std::vector<double> y(t.users.size());
        std::unordered_map<std::string, double> label;
        for (const Rating& r : ds.ratings()) label[ds.users()[r.user] + '\x1f' + ds.items()[r.item]] = r.value;
        for (std::size_t k = 0; k < y.size(); ++k) {
          const auto it = label.find(t.users[k] + '\x1f' + t.items[k]);
          if (it == label.end()) throw DataError("no label for pair (" + t.users[k] + ", " + t.items[k] + ")");
          y[k] = it->second;
        }
        cas_flags.gbt.seed = g.seed;
        const GBTModel model = gbt_fit(t.values, y, cas_flags.gbt);
        save_gbt(model, cas_out);
        m.config["cascade"] = gbt_json(cas_flags.gbt);
      } else if (!cas_model.empty()) {
        m.add_input(cas_model);
        const GBTModel model = load_gbt(cas_model);
        const auto pred = gbt_predict(model, t.values, cas_clamp_output);
        std::ofstream out(cas_out);
        if (!out) throw DataError("cannot write '" + cas_out + "'");
        out << "user,item,prediction\n";
        for (std::size_t k = 0; k < pred.size(); ++k) out << t.users[k] << ',' << t.items[k] << ',' << num(pred[k], "%.9g") << '\n';
        m.config["clamp_output"] = cas_clamp_output;
      } else {
        throw UsageError("cascade needs --labels (fit) or --model (apply)");
      }
      finish_manifest(m, cas_out);
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      RunManifest m = start_manifest("evaluate", argc, argv, g);
      m.add_input(eval_data);
      const Dataset ds = ingest(eval_data, fmt);
      FoldAssignment folds;
      if (!eval_folds.empty()) {
        m.add_input(eval_folds);
        folds = read_folds(eval_folds);
      } else {
        folds = make_folds(ds, g.seed);
      }
      ExperimentPlan plan;
      plan.algorithms = parse_algorithm_list(eval_algos);
      plan.stacked = eval_stacked;
      plan.random_features = eval_random;
      ExperimentConfig cfg;
      cfg.hp = eval_flags.hp;
      cfg.hp.clamp = g.clamp;
      cfg.gbt = eval_flags.gbt;
      cfg.seed = g.seed;
      cfg.source = parse_feature_source(eval_source);
      cfg.cpm.budget_bytes = g.budget_bytes;
      cfg.clamp_cascade = eval_clamp_cascade;
      check_cpm_budget(ds.n_users(), ds.n_items(), cfg.cpm.budget_bytes);
      const std::string id = eval_id.empty() ? std::filesystem::path(eval_data).stem().string() : eval_id;
      ProgressFn progress;
      if (!eval_quiet) progress = [](const std::string& s) { std::cerr << s << std::endl; };
      const EvaluationRun run = evaluate(ds, folds, plan, cfg, id, progress);
      write_report(eval_out, run.results);
      {
        std::ofstream a(std::filesystem::path(eval_out) / "audit.csv", std::ios::binary);
        a << audit_table(run.audit);
      }
      std::cout << improvement_summary(run.results);
      m.config["algorithms"] = eval_algos;
      m.config["stacked"] = eval_stacked;
      m.config["random_features"] = eval_random;
      m.config["feature_source"] = eval_source;
      m.config["clamp_cascade"] = eval_clamp_cascade;
      m.config["pairing_unit"] = "per-rating absolute errors on the holdout fold";
      m.config["p_threshold"] = kSignificanceLevel;
      m.config["hyperparameters"] = hp_json(cfg.hp);
      m.config["cascade"] = gbt_json(cfg.gbt);
      finish_manifest(m, eval_out);
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      RunManifest m = start_manifest("report", argc, argv, g);
      m.add_input(report_results);
      const auto results = read_results(report_results);
      std::filesystem::create_directories(report_out);
      const std::filesystem::path d(report_out);
      std::ofstream(d / "grid.md", std::ios::binary) << grid_markdown(results);
      std::ofstream(d / "grid.html", std::ios::binary) << grid_html(results);
      std::ofstream(d / "summary.txt", std::ios::binary) << improvement_summary(results);
      std::cout << improvement_summary(results);
      finish_manifest(m, report_out);
      return kExitOk;
    }
  } catch (const BudgetError& e) {
    std::cerr << "rp: " << e.what() << "\n";
    return kExitBudget;
  } catch (const UsageError& e) {
    std::cerr << "rp: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "rp: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
