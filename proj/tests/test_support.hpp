#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rp/dataset.hpp"
#include "rp/rng.hpp"

namespace rp::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rp_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Random ratings over an n_users x n_items grid; integer ratings when `integral`.
inline Dataset random_dataset(std::size_t n_users, std::size_t n_items, std::size_t n_ratings, std::uint64_t seed,
                              bool integral = true) {
  Rng rng(seed);
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  std::vector<Rating> ratings;
  const std::size_t cap = std::min(n_ratings, n_users * n_items);
  while (ratings.size() < cap) {
    const auto u = static_cast<std::uint32_t>(rng.below(n_users));
    const auto i = static_cast<std::uint32_t>(rng.below(n_items));
    if (!seen.insert({u, i}).second) continue;
    const double v = integral ? static_cast<double>(1 + rng.below(5)) : 1.0 + 4.0 * rng.uniform();
    ratings.push_back({u, i, v});
  }
  return Dataset(std::move(users), std::move(items), std::move(ratings));
}

/// Ratings with user and item effects plus noise, so that predictors have something to learn.
inline Dataset structured_dataset(std::size_t n_users, std::size_t n_items, double fill, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> bu(n_users), bi(n_items);
  for (auto& b : bu) b = rng.normal(0.0, 0.6);
  for (auto& b : bi) b = rng.normal(0.0, 0.6);
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < n_users; ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  std::vector<Rating> ratings;
  for (std::uint32_t u = 0; u < n_users; ++u) {
    for (std::uint32_t i = 0; i < n_items; ++i) {
      if (rng.uniform() >= fill) continue;
      const double affinity = ((u % 3) == (i % 3)) ? 0.8 : -0.4;
      double r = std::round(3.4 + bu[u] + bi[i] + affinity + rng.normal(0.0, 0.5));
      r = std::clamp(r, 1.0, 5.0);
      ratings.push_back({u, i, r});
    }
  }
  return Dataset(std::move(users), std::move(items), std::move(ratings));
}

}  // namespace rp::test
