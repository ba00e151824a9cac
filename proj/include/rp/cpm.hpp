#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rp/common.hpp"
#include "rp/parallel.hpp"
#include "rp/recsys.hpp"

namespace rp {

/// Comprehensive Prediction Matrix: the initial predictor's score for every user-item pair.
struct Cpm {
  AlgorithmSpec algorithm;
  std::uint64_t seed = 0;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  Matrix<float> scores;  ///< n_users x n_items, row-major

  std::size_t n_users() const noexcept { return scores.rows(); }
  std::size_t n_items() const noexcept { return scores.cols(); }

  bool operator==(const Cpm&) const = default;
};

inline constexpr std::uint64_t kDefaultBudgetBytes = 8ULL << 30;

struct CpmOptions {
  std::uint64_t budget_bytes = kDefaultBudgetBytes;
  Exec exec = Exec::kParallel;
};

/// 4 bytes per cell, all n*m cells.
constexpr std::uint64_t projected_cpm_bytes(std::uint64_t n, std::uint64_t m) noexcept { return n * m * 4; }

/// Throws BudgetError ("projected size 2.1e9 bytes exceeds budget ...") when n*m*4 > budget.
void check_cpm_budget(std::uint64_t n, std::uint64_t m, std::uint64_t budget_bytes);

/// Scores for the listed users x items (dense index lists into the predictor's index space).
Cpm generate_cpm(const Predictor& predictor, std::span<const std::uint32_t> users,
                 std::span<const std::uint32_t> items, std::uint64_t seed, const CpmOptions& opts = {});
/// Scores for the predictor's whole index space.
Cpm generate_cpm(const Predictor& predictor, std::uint64_t seed, const CpmOptions& opts = {});

/// CPMs of every ensemble component followed by the ensemble's own, in one pass over the cells.
/// The last matrix equals generate_cpm(ensemble) exactly.
std::vector<Cpm> generate_ensemble_cpms(const EnsembleModel& ensemble, std::uint64_t seed,
                                        const CpmOptions& opts = {});

std::vector<float> slice_row(const Cpm& cpm, std::size_t u);
std::vector<float> slice_col(const Cpm& cpm, std::size_t i);

// Binary layout: "RPCM", u16 version, u8 algorithm tag (id, +0x80 for item-based KNN), u64 seed,
// u64 n, u64 m, n then m length-prefixed (u32) UTF-8 ids, then n*m little-endian f32 row-major.
inline constexpr std::uint16_t kCpmVersion = 1;

std::vector<std::uint8_t> serialize_cpm(const Cpm& cpm);
Cpm deserialize_cpm(std::span<const std::uint8_t> bytes);
void save_cpm(const Cpm& cpm, const std::string& path);
Cpm load_cpm(const std::string& path);

}  // namespace rp
