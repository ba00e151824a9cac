#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rp/eval.hpp"

namespace rp {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Distinct values in first-seen order.
template <typename F>
std::vector<std::string> distinct(std::span<const ExperimentResult> results, F key) {
  std::vector<std::string> out;
  for (const auto& r : results) {
    if (std::find(out.begin(), out.end(), key(r)) == out.end()) out.push_back(key(r));
  }
  return out;
}

const ExperimentResult* find(std::span<const ExperimentResult> results, const std::string& ds,
                             const std::string& algo) {
  for (const auto& r : results) {
    if (r.dataset_id == ds && r.algorithm == algo) return &r;
  }
  return nullptr;
}

const char* color_of(Category c) {
  switch (c) {
    case Category::kSigBetter: return "#1a9850";
    case Category::kBetterNs: return "#a6d96a";
    case Category::kWorseNs: return "#fdae61";
    case Category::kSigWorse: return "#d73027";
  }
  return "#ffffff";
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw DataError("short write to '" + p.string() + "'");
}

}  // namespace

std::string results_table(std::span<const ExperimentResult> results) {
  std::string s = "dataset,algorithm,rmse_rs,rmse_rs_rp,delta,p_value,category,seed\n";
  for (const auto& r : results) {
    s += r.dataset_id + "," + r.algorithm + "," + fmt("%.6f", r.holdout_rmse_rs) + "," +
         fmt("%.6f", r.holdout_rmse_rs_rp) + "," + fmt("%.6f", r.delta_rmse) + "," + fmt("%.6g", r.p_value) + "," +
         to_string(r.category) + "," + std::to_string(r.seed) + "\n";
  }
  return s;
}

std::string per_fold_table(std::span<const ExperimentResult> results) {
  std::string s = "dataset,algorithm,fold,rmse_rs,rmse_rs_rp\n";
  for (const auto& r : results) {
    for (std::size_t f = 0; f < r.rmse_rs_alone.size(); ++f) {
      s += r.dataset_id + "," + r.algorithm + "," + std::to_string(f) + "," + fmt("%.6f", r.rmse_rs_alone[f]) + "," +
           fmt("%.6f", r.rmse_rs_plus_rp[f]) + "\n";
    }
  }
  return s;
}

std::string grid_markdown(std::span<const ExperimentResult> results) {
  const auto datasets = distinct(results, [](const ExperimentResult& r) { return r.dataset_id; });
  const auto algos = distinct(results, [](const ExperimentResult& r) { return r.algorithm; });
  std::string s = "| algorithm |";
  for (const auto& d : datasets) s += " " + d + " |";
  s += "\n|---|";
  for (std::size_t k = 0; k < datasets.size(); ++k) s += "---|";
  s += "\n";
  for (const auto& a : algos) {
    s += "| " + a + " |";
    for (const auto& d : datasets) {
      const auto* r = find(results, d, a);
      s += r ? " " + fmt("%+.4f", r->delta_rmse) + " (" + to_string(r->category) + ", p=" + fmt("%.3g", r->p_value) +
                   ") |"
             : " |";
    }
    s += "\n";
  }
  s += "\nCells show RMSE(RS+RP) - RMSE(RS) on the held-out fold; negative is better.\n\n";
  s += improvement_summary(results);
  return s;
}

std::string grid_html(std::span<const ExperimentResult> results) {
  const auto datasets = distinct(results, [](const ExperimentResult& r) { return r.dataset_id; });
  const auto algos = distinct(results, [](const ExperimentResult& r) { return r.algorithm; });
  std::string s =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>RP cascade results</title>\n"
      "<style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px;"
      "font-family:monospace;text-align:right}th{background:#eee}</style></head><body>\n<table>\n<tr><th>algorithm</th>";
  for (const auto& d : datasets) s += "<th>" + d + "</th>";
  s += "</tr>\n";
  for (const auto& a : algos) {
    s += "<tr><th>" + a + "</th>";
    for (const auto& d : datasets) {
      const auto* r = find(results, d, a);
      if (!r) {
        s += "<td></td>";
        continue;
      }
      s += std::string("<td style=\"background:") + color_of(r->category) + "\" title=\"" + to_string(r->category) +
           " p=" + fmt("%.3g", r->p_value) + "\">" + fmt("%+.4f", r->delta_rmse) + "</td>";
    }
    s += "</tr>\n";
  }
  s += "</table>\n<p>";
  for (auto c : {Category::kSigBetter, Category::kBetterNs, Category::kWorseNs, Category::kSigWorse}) {
    s += std::string("<span style=\"background:") + color_of(c) + ";padding:2px 6px\">" + to_string(c) + "</span> ";
  }
  s += "</p>\n<pre>" + improvement_summary(results) + "</pre>\n</body></html>\n";
  return s;
}

std::string improvement_summary(std::span<const ExperimentResult> results) {
  std::size_t counts[4] = {0, 0, 0, 0};
  for (const auto& r : results) ++counts[static_cast<int>(r.category)];
  const std::size_t y = results.size();
  const std::size_t improved = counts[0] + counts[1];
  std::string s = "improved: " + std::to_string(improved) + "/" + std::to_string(y) + " experiments\n";
  s += "significantly improved: " + std::to_string(counts[0]) + "/" + std::to_string(y) + " experiments\n";
  for (auto c : {Category::kSigBetter, Category::kBetterNs, Category::kWorseNs, Category::kSigWorse}) {
    s += to_string(c) + ": " + std::to_string(counts[static_cast<int>(c)]) + "\n";
  }
  return s;
}

std::string prediction_summary_table(std::span<const ExperimentResult> results) {
  std::string s =
      "dataset,algorithm,prediction_mean,prediction_std,train_label_mean,train_label_std,eval_label_std,"
      "mean_predictor_rmse\n";
  for (const auto& r : results) {
    const auto& m = r.summary;
    s += r.dataset_id + "," + r.algorithm;
    for (double v : {m.prediction_mean, m.prediction_std, m.train_label_mean, m.train_label_std, m.eval_label_std,
                     m.mean_predictor_rmse}) {
      s += "," + fmt("%.6f", v);
    }
    s += "\n";
  }
  return s;
}

std::string audit_table(std::span<const SplitAudit> audit) {
  std::string s =
      "eval_fold,n_label_pairs,n_eval_pairs,label_eval_overlap,eval_scorer_fit_overlap,eval_any_fit_overlap\n";
  for (const auto& a : audit) {
    s += std::to_string(a.eval_fold) + "," + std::to_string(a.n_label_pairs) + "," + std::to_string(a.n_eval_pairs) +
         "," + std::to_string(a.label_eval_overlap) + "," + std::to_string(a.eval_scorer_fit_overlap) + "," +
         std::to_string(a.eval_any_fit_overlap) + "\n";
  }
  return s;
}

void write_report(const std::string& dir, std::span<const ExperimentResult> results) {
  if (results.empty()) throw UsageError("report needs at least one result");
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d);
  write_text(d / "results.csv", results_table(results));
  write_text(d / "per_fold.csv", per_fold_table(results));
  write_text(d / "grid.md", grid_markdown(results));
  write_text(d / "grid.html", grid_html(results));
  write_text(d / "summary.txt", improvement_summary(results));
  write_text(d / "predictions.csv", prediction_summary_table(results));
}

std::vector<ExperimentResult> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "dataset,algorithm,rmse_rs,rmse_rs_rp,delta,p_value,category,seed") {
    throw DataError("'" + path + "' is not a results table");
  }
  std::vector<ExperimentResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw DataError("wrong field count at " + path + ":" + std::to_string(line_no));
    ExperimentResult r;
    try {
      r.dataset_id = f[0];
      r.algorithm = f[1];
      r.holdout_rmse_rs = std::stod(f[2]);
      r.holdout_rmse_rs_rp = std::stod(f[3]);
      r.delta_rmse = std::stod(f[4]);
      r.p_value = std::stod(f[5]);
      r.category = parse_category(f[6]);
      r.seed = std::stoull(f[7]);
    } catch (const std::logic_error&) {
      throw DataError("malformed value at " + path + ":" + std::to_string(line_no));
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("'" + path + "' holds no results");
  return out;
}

}  // namespace rp
