#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rp/common.hpp"
#include "rp/parallel.hpp"

namespace rp {

struct GBTConfig {
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  double subsample = 1.0;
  int min_samples_leaf = 20;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GBTConfig&) const = default;
};

/// Flat binary regression tree; node 0 is the root. Rows with x[feature] <= threshold go left.
struct RegressionTree {
  struct Node {
    std::int32_t feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  ///< leaf output, already scaled by the learning rate

    bool operator==(const Node&) const = default;
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const noexcept;
  bool operator==(const RegressionTree&) const = default;
};

/// Squared-error gradient-boosted trees.
class GBTModel {
 public:
  GBTModel() = default;
  GBTModel(GBTConfig config, std::size_t feature_width, double base_prediction, std::vector<RegressionTree> trees);

  const GBTConfig& config() const noexcept { return config_; }
  std::size_t feature_width() const noexcept { return width_; }
  double base_prediction() const noexcept { return base_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  /// Same model using only its first `n` trees.
  GBTModel truncated(std::size_t n) const;

  double predict_row(std::span<const double> x) const noexcept;

  bool operator==(const GBTModel&) const = default;

 private:
  GBTConfig config_;
  std::size_t width_ = 0;
  double base_ = 0.0;
  std::vector<RegressionTree> trees_;
};

/// Throws DataError on empty, mismatched, or non-finite input. The result does not depend on
/// the order of the training rows.
GBTModel gbt_fit(const Matrix<double>& x, std::span<const double> y, const GBTConfig& config,
                 Exec exec = Exec::kParallel);

/// Throws DataError when the width of `x` differs from the model's.
std::vector<double> gbt_predict(const GBTModel& model, const Matrix<double>& x, bool clamp = false);

// Binary layout: "RPGB", u16 version, config, u64 width, f64 base, u64 tree count, then per tree
// u64 node count and the node fields as parallel arrays.
inline constexpr std::uint16_t kGbtVersion = 1;

std::vector<std::uint8_t> serialize_gbt(const GBTModel& model);
GBTModel deserialize_gbt(std::span<const std::uint8_t> bytes);
void save_gbt(const GBTModel& model, const std::string& path);
GBTModel load_gbt(const std::string& path);

}  // namespace rp
