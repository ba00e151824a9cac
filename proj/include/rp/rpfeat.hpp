#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rp/common.hpp"
#include "rp/cpm.hpp"
#include "rp/parallel.hpp"

namespace rp {

/// One CPM row (a user's perspective) or column (an item's perspective) sorted into a
/// decreasing One-to-All curve, with its summary statistics.
struct O2AProfile {
  std::vector<double> sorted_scores;  ///< non-increasing
  double mean = 0.0;
  double std = 0.0;  ///< population
  double baseline_score = 0.0;  ///< median; mean of the two middle values for even length
  std::size_t baseline_index = 0;  ///< element nearest the median, ties to the higher score
  double baseline_percentile = 0.0;
};

/// Throws DataError on empty or non-finite input.
O2AProfile build_profile(std::span<const double> scores);
O2AProfile build_profile(std::span<const float> scores);

/// Normalised rank of `s` on the curve: 0 at the top score, 1 at the bottom. Ties take their
/// average zero-based rank; a score between entries takes the rank of the first entry <= s.
double percentile_of(const O2AProfile& profile, double s);

inline constexpr std::size_t kNumRpFeatures = 14;
inline constexpr double kArroEpsilon = 1e-3;
inline constexpr std::array<const char*, kNumRpFeatures> kRpFeatureNames = {
    "ryx", "rxy", "arro", "rxt", "sxt", "ryt", "syt", "pdx", "pdy", "fdx", "fdy", "stdx", "stdy", "score"};

/// X is the user (row) perspective, Y the item (column) perspective.
struct RpFeatureVector {
  double ryx = 0, rxy = 0, arro = 0, rxt = 0, sxt = 0, ryt = 0, syt = 0;
  double pdx = 0, pdy = 0, fdx = 0, fdy = 0, stdx = 0, stdy = 0, original_score = 0;

  std::array<double, kNumRpFeatures> to_array() const noexcept {
    return {ryx, rxy, arro, rxt, sxt, ryt, syt, pdx, pdy, fdx, fdy, stdx, stdy, original_score};
  }
};

/// Both profiles must contain `s` (within 1e-6); otherwise the CPM and profiles disagree and
/// DataError is thrown.
RpFeatureVector extract(const O2AProfile& row_profile, const O2AProfile& col_profile, double s);

struct UserItemPair {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  bool operator==(const UserItemPair&) const = default;
};

/// Profile construction counts, for checking that each row/column is sorted once.
struct FeatureInstrumentation {
  std::size_t row_profiles_built = 0;
  std::size_t col_profiles_built = 0;
};

/// |pairs| x 14 features; profiles are built once per distinct row/column touched.
Matrix<double> feature_matrix(const Cpm& cpm, std::span<const UserItemPair> pairs, Exec exec = Exec::kParallel,
                              FeatureInstrumentation* instrumentation = nullptr);

inline constexpr std::size_t kNumStackedBlocks = 12;

/// Horizontal concatenation of per-predictor feature blocks, in the order given.
/// Throws DataError unless there are exactly `expected_blocks` blocks, each 14 wide, with equal rows.
Matrix<double> stack(std::span<const Matrix<double>> blocks, std::size_t expected_blocks = kNumStackedBlocks);

/// Comma-delimited feature dump: user,item,ryx,...,stdy,score_<algo>; stacked files repeat the
/// block per algorithm with feature names suffixed _<algo>.
struct FeatureTable {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<std::string> columns;
  Matrix<double> values;
};

std::vector<std::string> feature_column_names(std::span<const std::string> algorithms);
void write_features(const std::string& path, const FeatureTable& table);
FeatureTable read_features(const std::string& path);

}  // namespace rp
