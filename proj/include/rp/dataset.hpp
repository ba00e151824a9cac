#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rp {

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

/// One parsed line of a ratings file, before indexing.
struct RatingTriple {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

/// An indexed rating: dense internal indices into Dataset::users / Dataset::items.
struct Rating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;

  bool operator==(const Rating&) const = default;
};

/// Delimiter and column layout of a ratings file.
struct FormatDescriptor {
  std::string delimiter = "\t";
  bool has_header = false;
  int user_column = 0;
  int item_column = 1;
  int rating_column = 2;
  int timestamp_column = 3;  ///< -1 to ignore.
};

/// De-duplicated ratings over dense index maps. Immutable once built.
class Dataset {
 public:
  Dataset() = default;

  /// Builds from raw triples: ids indexed in first-seen order, a repeated (user, item)
  /// pair keeps its first position but takes the value of its last occurrence.
  static Dataset from_triples(std::span<const RatingTriple> triples);

  /// Builds from pre-indexed ratings. Throws DataError on out-of-range indices or duplicates.
  Dataset(std::vector<std::string> users, std::vector<std::string> items,
          std::vector<Rating> ratings);

  const std::vector<std::string>& users() const noexcept { return users_; }
  const std::vector<std::string>& items() const noexcept { return items_; }
  const std::vector<Rating>& ratings() const noexcept { return ratings_; }

  std::size_t n_users() const noexcept { return users_.size(); }
  std::size_t n_items() const noexcept { return items_.size(); }
  std::size_t n_ratings() const noexcept { return ratings_.size(); }
  bool empty() const noexcept { return ratings_.empty(); }

  /// Same index space, only the selected ratings (in the given order).
  Dataset subset(std::span<const std::size_t> rating_indices) const;

  std::optional<std::uint32_t> find_user(const std::string& id) const;
  std::optional<std::uint32_t> find_item(const std::string& id) const;

 private:
  std::vector<std::string> users_;
  std::vector<std::string> items_;
  std::vector<Rating> ratings_;
  std::unordered_map<std::string, std::uint32_t> user_index_;
  std::unordered_map<std::string, std::uint32_t> item_index_;
};

/// Throws DataError naming the line on malformed input, an empty file, or a rating outside [1, 5].
Dataset ingest(const std::string& path, const FormatDescriptor& format = {});
std::vector<RatingTriple> parse_ratings(std::istream& in, const FormatDescriptor& format,
                                        const std::string& source_name = "<stream>");

void write_ratings(const std::string& path, const Dataset& dataset, const std::string& delimiter = "\t");

/// Two density conventions: the "half" one divides by floor(n*m/2), the "full" one by n*m.
struct DatasetStats {
  std::uint64_t n_users = 0;
  std::uint64_t n_items = 0;
  std::uint64_t n_ratings = 0;
  std::uint64_t cpm_elements_full = 0;
  std::uint64_t cpm_elements_half = 0;
  double density_full = 0.0;
  double density_half = 0.0;
  double sparsity_full = 0.0;
};

enum class DensityConvention { kFull, kHalf };

double density(const DatasetStats& s, DensityConvention c) noexcept;

DatasetStats stats(const Dataset& dataset);
DatasetStats stats_from_counts(std::uint64_t n_users, std::uint64_t n_items, std::uint64_t n_ratings);

inline constexpr int kNumFolds = 6;
inline constexpr int kHoldoutFold = 5;

/// Per-rating fold label: a seeded uniform permutation cut into six contiguous blocks.
struct FoldAssignment {
  std::vector<std::uint8_t> fold_of_rating;
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices_in(std::span<const int> folds) const;
  std::vector<std::size_t> indices_in(int fold) const;
  std::vector<std::size_t> sizes() const;
};

FoldAssignment make_folds(const Dataset& dataset, std::uint64_t seed);
FoldAssignment make_folds(std::size_t n_ratings, std::uint64_t seed);

void write_folds(const std::string& path, const FoldAssignment& folds);
FoldAssignment read_folds(const std::string& path);

}  // namespace rp
