#include "rp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "rp/common.hpp"
#include "rp/rng.hpp"

namespace rp {

namespace {

std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '"' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::uint64_t pair_key(std::uint32_t u, std::uint32_t i) {
  return (static_cast<std::uint64_t>(u) << 32) | i;
}

}  // namespace

Dataset::Dataset(std::vector<std::string> users, std::vector<std::string> items,
                 std::vector<Rating> ratings)
    : users_(std::move(users)), items_(std::move(items)), ratings_(std::move(ratings)) {
  user_index_.reserve(users_.size());
  for (std::uint32_t u = 0; u < users_.size(); ++u) {
    if (!user_index_.emplace(users_[u], u).second) throw DataError("duplicate user id '" + users_[u] + "'");
  }
  item_index_.reserve(items_.size());
  for (std::uint32_t i = 0; i < items_.size(); ++i) {
    if (!item_index_.emplace(items_[i], i).second) throw DataError("duplicate item id '" + items_[i] + "'");
  }
  std::vector<std::uint64_t> keys;
  keys.reserve(ratings_.size());
  for (const Rating& r : ratings_) {
    if (r.user >= users_.size() || r.item >= items_.size()) throw DataError("rating index out of range");
    keys.push_back(pair_key(r.user, r.item));
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw DataError("duplicate (user, item) pair");
  }
}

Dataset Dataset::from_triples(std::span<const RatingTriple> triples) {
  std::vector<std::string> users, items;
  std::unordered_map<std::string, std::uint32_t> uidx, iidx;
  std::unordered_map<std::uint64_t, std::size_t> position;
  std::vector<Rating> ratings;
  ratings.reserve(triples.size());
  for (const RatingTriple& t : triples) {
    if (!(t.rating >= kMinRating && t.rating <= kMaxRating)) throw DataError("rating out of range");
    auto [uit, unew] = uidx.try_emplace(t.user, static_cast<std::uint32_t>(users.size()));
    if (unew) users.push_back(t.user);
    auto [iit, inew] = iidx.try_emplace(t.item, static_cast<std::uint32_t>(items.size()));
    if (inew) items.push_back(t.item);
    const Rating r{uit->second, iit->second, t.rating};
    auto [pit, pnew] = position.try_emplace(pair_key(r.user, r.item), ratings.size());
    if (pnew) {
      ratings.push_back(r);
    } else {
      ratings[pit->second].value = r.value;
    }
  }
  return Dataset(std::move(users), std::move(items), std::move(ratings));
}

Dataset Dataset::subset(std::span<const std::size_t> rating_indices) const {
  Dataset out;
  out.users_ = users_;
  out.items_ = items_;
  out.user_index_ = user_index_;
  out.item_index_ = item_index_;
  out.ratings_.reserve(rating_indices.size());
  for (std::size_t k : rating_indices) {
    if (k >= ratings_.size()) throw DataError("subset index out of range");
    out.ratings_.push_back(ratings_[k]);
  }
  return out;
}

std::optional<std::uint32_t> Dataset::find_user(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> Dataset::find_item(const std::string& id) const {
  auto it = item_index_.find(id);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<RatingTriple> parse_ratings(std::istream& in, const FormatDescriptor& format,
                                        const std::string& source_name) {
  if (format.delimiter.empty()) throw UsageError("empty delimiter");
  const int needed = std::max({format.user_column, format.item_column, format.rating_column}) + 1;
  std::vector<RatingTriple> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = format.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(line, format.delimiter);
    const auto where = [&] { return source_name + ":" + std::to_string(line_no); };
    if (static_cast<int>(fields.size()) < needed) {
      throw DataError("malformed line " + where() + ": expected at least " + std::to_string(needed) +
                      " fields");
    }
    RatingTriple t;
    t.user = std::string(trim(fields[format.user_column]));
    t.item = std::string(trim(fields[format.item_column]));
    if (t.user.empty() || t.item.empty()) throw DataError("malformed line " + where() + ": empty id");
    const std::string_view rs = trim(fields[format.rating_column]);
    const auto [ptr, ec] = std::from_chars(rs.data(), rs.data() + rs.size(), t.rating);
    if (ec != std::errc{} || ptr != rs.data() + rs.size()) {
      throw DataError("malformed line " + where() + ": rating '" + std::string(rs) + "' is not a number");
    }
    if (!(t.rating >= kMinRating && t.rating <= kMaxRating)) {
      throw DataError("rating out of range at line " + where() + ": " + std::string(rs));
    }
    if (format.timestamp_column >= 0 && format.timestamp_column < static_cast<int>(fields.size())) {
      const std::string_view ts = trim(fields[format.timestamp_column]);
      std::int64_t v = 0;
      const auto [tp, tec] = std::from_chars(ts.data(), ts.data() + ts.size(), v);
      if (tec == std::errc{} && tp == ts.data() + ts.size()) t.timestamp = v;
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw DataError("empty file: " + source_name);
  return out;
}

Dataset ingest(const std::string& path, const FormatDescriptor& format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file '" + path + "'");
  const auto triples = parse_ratings(in, format, path);
  return Dataset::from_triples(triples);
}

void write_ratings(const std::string& path, const Dataset& dataset, const std::string& delimiter) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  char buf[64];
  for (const Rating& r : dataset.ratings()) {
    const auto res = std::to_chars(buf, buf + sizeof buf, r.value);
    out << dataset.users()[r.user] << delimiter << dataset.items()[r.item] << delimiter
        << std::string_view(buf, res.ptr - buf) << '\n';
  }
}

double density(const DatasetStats& s, DensityConvention c) noexcept {
  return c == DensityConvention::kFull ? s.density_full : s.density_half;
}

DatasetStats stats_from_counts(std::uint64_t n_users, std::uint64_t n_items, std::uint64_t n_ratings) {
  if (n_users == 0 || n_items == 0) throw DataError("dataset has zero users or items");
  DatasetStats s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_ratings = n_ratings;
  s.cpm_elements_full = n_users * n_items;
  s.cpm_elements_half = s.cpm_elements_full / 2;
  s.density_full = static_cast<double>(n_ratings) / static_cast<double>(s.cpm_elements_full);
  s.density_half = s.cpm_elements_half == 0
                       ? s.density_full * 2.0
                       : static_cast<double>(n_ratings) / static_cast<double>(s.cpm_elements_half);
  s.sparsity_full = 1.0 - s.density_full;
  return s;
}

DatasetStats stats(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("dataset is empty");
  return stats_from_counts(dataset.n_users(), dataset.n_items(), dataset.n_ratings());
}

std::vector<std::size_t> FoldAssignment::indices_in(std::span<const int> folds) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < fold_of_rating.size(); ++k) {
    if (std::find(folds.begin(), folds.end(), fold_of_rating[k]) != folds.end()) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::indices_in(int fold) const {
  const int f[] = {fold};
  return indices_in(f);
}

std::vector<std::size_t> FoldAssignment::sizes() const {
  std::vector<std::size_t> out(kNumFolds, 0);
  for (auto f : fold_of_rating) ++out[f];
  return out;
}

FoldAssignment make_folds(std::size_t n_ratings, std::uint64_t seed) {
  if (n_ratings < static_cast<std::size_t>(kNumFolds)) {
    throw DataError("too few ratings for " + std::to_string(kNumFolds) + " folds");
  }
  std::vector<std::size_t> perm(n_ratings);
  for (std::size_t k = 0; k < n_ratings; ++k) perm[k] = k;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));

  FoldAssignment fa;
  fa.seed = seed;
  fa.fold_of_rating.assign(n_ratings, 0);
  const std::size_t base = n_ratings / kNumFolds;
  const std::size_t extra = n_ratings % kNumFolds;
  std::size_t pos = 0;
  for (int f = 0; f < kNumFolds; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t k = 0; k < len; ++k) fa.fold_of_rating[perm[pos++]] = static_cast<std::uint8_t>(f);
  }
  return fa;
}

FoldAssignment make_folds(const Dataset& dataset, std::uint64_t seed) {
  return make_folds(dataset.n_ratings(), seed);
}

void write_folds(const std::string& path, const FoldAssignment& folds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "# seed=" << folds.seed << " prng=" << kPrngName << " folds=" << kNumFolds
      << " holdout=" << kHoldoutFold << '\n';
  for (std::size_t k = 0; k < folds.fold_of_rating.size(); ++k) {
    out << k << '\t' << static_cast<int>(folds.fold_of_rating[k]) << '\n';
  }
}

FoldAssignment read_folds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fold file '" + path + "'");
  FoldAssignment fa;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# seed=", 0) != 0) {
    throw DataError("fold file '" + path + "' lacks its metadata header");
  }
  fa.seed = std::stoull(line.substr(7));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::size_t idx = 0;
    int fold = -1;
    if (!(ls >> idx >> fold) || fold < 0 || fold >= kNumFolds || idx != fa.fold_of_rating.size()) {
      throw DataError("malformed fold line " + path + ":" + std::to_string(line_no));
    }
    fa.fold_of_rating.push_back(static_cast<std::uint8_t>(fold));
  }
  return fa;
}

}  // namespace rp
