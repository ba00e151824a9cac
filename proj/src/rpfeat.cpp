#include "rp/rpfeat.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>

namespace rp {

namespace {

constexpr double kPresenceTolerance = 1e-6;

O2AProfile finish_profile(std::vector<double> v) {
  if (v.empty()) throw DataError("cannot build a One-to-All profile from zero scores");
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError("non-finite score in One-to-All profile");
  }
  std::sort(v.begin(), v.end(), std::greater<>());
  O2AProfile p;
  const std::size_t n = v.size();
  double sum = 0.0;
  for (double x : v) sum += x;
  p.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - p.mean) * (x - p.mean);
  p.std = std::sqrt(ss / static_cast<double>(n));
  p.baseline_score = (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  double best = std::abs(v[0] - p.baseline_score);
  for (std::size_t k = 1; k < n; ++k) {
    const double d = std::abs(v[k] - p.baseline_score);
    if (d < best) {
      best = d;
      p.baseline_index = k;
    }
  }
  p.sorted_scores = std::move(v);
  p.baseline_percentile = percentile_of(p, p.sorted_scores[p.baseline_index]);
  return p;
}

bool contains(const O2AProfile& p, double s) {
  const auto& v = p.sorted_scores;
  // first element <= s
  const auto it = std::partition_point(v.begin(), v.end(), [s](double x) { return x > s; });
  if (it != v.end() && std::abs(*it - s) <= kPresenceTolerance) return true;
  if (it != v.begin() && std::abs(*(it - 1) - s) <= kPresenceTolerance) return true;
  return false;
}

double fold_difference(double s, double baseline) {
  return baseline != 0.0 ? (s - baseline) / baseline : s - baseline;
}

double sd_distance(double s, double mean, double sd) { return sd > 0.0 ? (s - mean) / sd : 0.0; }

}  // namespace

O2AProfile build_profile(std::span<const double> scores) {
  return finish_profile(std::vector<double>(scores.begin(), scores.end()));
}

O2AProfile build_profile(std::span<const float> scores) {
  return finish_profile(std::vector<double>(scores.begin(), scores.end()));
}

double percentile_of(const O2AProfile& profile, double s) {
  const auto& v = profile.sorted_scores;
  const std::size_t n = v.size();
  if (n <= 1) return 0.0;
  const auto lo = std::partition_point(v.begin(), v.end(), [s](double x) { return x > s; });
  const auto hi = std::partition_point(lo, v.end(), [s](double x) { return x >= s; });
  const auto first = static_cast<double>(lo - v.begin());
  double rank;
  if (hi > lo) {
    rank = first + 0.5 * static_cast<double>(hi - lo - 1);
  } else {
    rank = std::min(first, static_cast<double>(n - 1));
  }
  return rank / static_cast<double>(n - 1);
}

RpFeatureVector extract(const O2AProfile& row_profile, const O2AProfile& col_profile, double s) {
  if (!contains(row_profile, s) || !contains(col_profile, s)) {
    throw DataError("pair score is absent from its One-to-All profiles (CPM/profile mismatch)");
  }
  RpFeatureVector f;
  f.ryx = percentile_of(row_profile, s);
  f.rxy = percentile_of(col_profile, s);
  f.arro = 1.0 / ((f.ryx + kArroEpsilon) * (f.rxy + kArroEpsilon));
  f.rxt = row_profile.baseline_percentile;
  f.sxt = row_profile.baseline_score;
  f.ryt = col_profile.baseline_percentile;
  f.syt = col_profile.baseline_score;
  f.pdx = f.ryx - f.rxt;
  f.pdy = f.rxy - f.ryt;
  f.fdx = fold_difference(s, f.sxt);
  f.fdy = fold_difference(s, f.syt);
  f.stdx = sd_distance(s, row_profile.mean, row_profile.std);
  f.stdy = sd_distance(s, col_profile.mean, col_profile.std);
  f.original_score = s;
  return f;
}

Matrix<double> feature_matrix(const Cpm& cpm, std::span<const UserItemPair> pairs, Exec exec,
                              FeatureInstrumentation* instrumentation) {
  const std::size_t n = cpm.n_users(), m = cpm.n_items();
  std::vector<std::int64_t> row_slot(n, -1), col_slot(m, -1);
  std::vector<std::uint32_t> rows, cols;
  for (const auto& p : pairs) {
    if (p.user >= n || p.item >= m) throw UsageError("feature pair index out of range");
    if (row_slot[p.user] < 0) {
      row_slot[p.user] = static_cast<std::int64_t>(rows.size());
      rows.push_back(p.user);
    }
    if (col_slot[p.item] < 0) {
      col_slot[p.item] = static_cast<std::int64_t>(cols.size());
      cols.push_back(p.item);
    }
  }

  std::vector<O2AProfile> row_profiles(rows.size()), col_profiles(cols.size());
  const auto n_rows = static_cast<std::int64_t>(rows.size());
  const auto n_cols = static_cast<std::int64_t>(cols.size());
  const auto n_pairs = static_cast<std::int64_t>(pairs.size());
  Matrix<double> out(pairs.size(), kNumRpFeatures);
  const auto do_pair = [&](std::int64_t k) {
    const auto& p = pairs[static_cast<std::size_t>(k)];
    const double s = cpm.scores(p.user, p.item);
    const auto f = extract(row_profiles[row_slot[p.user]], col_profiles[col_slot[p.item]], s).to_array();
    std::copy(f.begin(), f.end(), out.row(static_cast<std::size_t>(k)).begin());
  };

  if (exec == Exec::kParallel) {
    std::exception_ptr failure;
    const auto guarded = [&](auto&& body) {
      try {
        body();
      } catch (...) {
#pragma omp critical(rp_feature_failure)
        if (!failure) failure = std::current_exception();
      }
    };
#pragma omp parallel
    {
#pragma omp for schedule(dynamic, 8) nowait
      for (std::int64_t r = 0; r < n_rows; ++r) {
        guarded([&] { row_profiles[r] = build_profile(cpm.scores.row(rows[r])); });
      }
#pragma omp for schedule(dynamic, 8)
      for (std::int64_t c = 0; c < n_cols; ++c) {
        guarded([&] {
          const auto col = slice_col(cpm, cols[c]);
          col_profiles[c] = build_profile(std::span<const float>(col));
        });
      }
#pragma omp for schedule(static)
      for (std::int64_t k = 0; k < n_pairs; ++k) {
        guarded([&] { do_pair(k); });
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::int64_t r = 0; r < n_rows; ++r) row_profiles[r] = build_profile(cpm.scores.row(rows[r]));
    for (std::int64_t c = 0; c < n_cols; ++c) {
      const auto col = slice_col(cpm, cols[c]);
      col_profiles[c] = build_profile(std::span<const float>(col));
    }
    for (std::int64_t k = 0; k < n_pairs; ++k) do_pair(k);
  }
  if (instrumentation) {
    instrumentation->row_profiles_built += rows.size();
    instrumentation->col_profiles_built += cols.size();
  }
  return out;
}

Matrix<double> stack(std::span<const Matrix<double>> blocks, std::size_t expected_blocks) {
  if (blocks.size() != expected_blocks) {
    throw DataError("shape mismatch: expected " + std::to_string(expected_blocks) + " feature blocks, got " +
                    std::to_string(blocks.size()));
  }
  const std::size_t rows = blocks.front().rows();
  for (const auto& b : blocks) {
    if (b.rows() != rows || b.cols() != kNumRpFeatures) {
      throw DataError("shape mismatch: every block must be " + std::to_string(rows) + " x 14");
    }
  }
  Matrix<double> out(rows, blocks.size() * kNumRpFeatures);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto src = blocks[b].row(r);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * kNumRpFeatures));
    }
  }
  return out;
}

std::vector<std::string> feature_column_names(std::span<const std::string> algorithms) {
  std::vector<std::string> cols;
  for (const auto& a : algorithms) {
    for (std::size_t f = 0; f + 1 < kNumRpFeatures; ++f) {
      cols.push_back(algorithms.size() == 1 ? std::string(kRpFeatureNames[f])
                                            : std::string(kRpFeatureNames[f]) + "_" + a);
    }
    cols.push_back("score_" + a);
  }
  return cols;
}

void write_features(const std::string& path, const FeatureTable& t) {
  if (t.users.size() != t.values.rows() || t.items.size() != t.values.rows() || t.columns.size() != t.values.cols()) {
    throw UsageError("feature table shape is inconsistent");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "user,item";
  for (const auto& c : t.columns) out << ',' << c;
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < t.values.rows(); ++r) {
    out << t.users[r] << ',' << t.items[r];
    for (double v : t.values.row(r)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

FeatureTable read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file '" + path + "'");
  FeatureTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty feature file '" + path + "'");
  {
    std::stringstream hs(line);
    std::string cell;
    std::vector<std::string> head;
    while (std::getline(hs, cell, ',')) head.push_back(cell);
    if (head.size() < 3 || head[0] != "user" || head[1] != "item") {
      throw DataError("feature file '" + path + "' lacks the user,item header");
    }
    t.columns.assign(head.begin() + 2, head.end());
  }
  std::vector<double> values;
  std::size_t line_no = 1, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t start = 0, field = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      const std::string_view cell(line.data() + start, end - start);
      if (field == 0) {
        t.users.emplace_back(cell);
      } else if (field == 1) {
        t.items.emplace_back(cell);
      } else {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
          throw DataError("malformed feature value at " + path + ":" + std::to_string(line_no));
        }
        values.push_back(v);
      }
      ++field;
      start = end + 1;
    }
    if (field != t.columns.size() + 2) {
      throw DataError("wrong field count at " + path + ":" + std::to_string(line_no));
    }
    ++rows;
  }
  t.values = Matrix<double>(rows, t.columns.size());
  t.values.data() = std::move(values);
  return t;
}

}  // namespace rp
