#include "rp/densify.hpp"

#include <deque>
#include <sstream>

#include "rp/common.hpp"

namespace rp {

Dataset kcore(const Dataset& dataset, int k) {
  if (k < 1) throw UsageError("k-core threshold must be >= 1");
  const auto& ratings = dataset.ratings();
  const std::size_t n = dataset.n_users(), m = dataset.n_items();

  std::vector<std::vector<std::uint32_t>> by_user(n), by_item(m);
  std::vector<std::size_t> udeg(n, 0), ideg(m, 0);
  for (std::uint32_t r = 0; r < ratings.size(); ++r) {
    by_user[ratings[r].user].push_back(r);
    by_item[ratings[r].item].push_back(r);
    ++udeg[ratings[r].user];
    ++ideg[ratings[r].item];
  }

  const auto kk = static_cast<std::size_t>(k);
  std::vector<bool> user_gone(n, false), item_gone(m, false), rating_gone(ratings.size(), false);
  // queue entries: index, is_user
  std::deque<std::pair<std::uint32_t, bool>> queue;
  for (std::uint32_t u = 0; u < n; ++u) {
    if (udeg[u] < kk) {
      user_gone[u] = true;
      queue.emplace_back(u, true);
    }
  }
  for (std::uint32_t i = 0; i < m; ++i) {
    if (ideg[i] < kk) {
      item_gone[i] = true;
      queue.emplace_back(i, false);
    }
  }
  while (!queue.empty()) {
    const auto [v, is_user] = queue.front();
    queue.pop_front();
    for (std::uint32_t r : is_user ? by_user[v] : by_item[v]) {
      if (rating_gone[r]) continue;
      rating_gone[r] = true;
      if (is_user) {
        const std::uint32_t i = ratings[r].item;
        if (--ideg[i] < kk && !item_gone[i]) {
          item_gone[i] = true;
          queue.emplace_back(i, false);
        }
      } else {
        const std::uint32_t u = ratings[r].user;
        if (--udeg[u] < kk && !user_gone[u]) {
          user_gone[u] = true;
          queue.emplace_back(u, true);
        }
      }
    }
  }

  std::vector<std::uint32_t> new_user(n), new_item(m);
  std::vector<std::string> users, items;
  for (std::uint32_t u = 0; u < n; ++u) {
    if (!user_gone[u]) {
      new_user[u] = static_cast<std::uint32_t>(users.size());
      users.push_back(dataset.users()[u]);
    }
  }
  for (std::uint32_t i = 0; i < m; ++i) {
    if (!item_gone[i]) {
      new_item[i] = static_cast<std::uint32_t>(items.size());
      items.push_back(dataset.items()[i]);
    }
  }
  std::vector<Rating> kept;
  for (std::size_t r = 0; r < ratings.size(); ++r) {
    if (!rating_gone[r]) kept.push_back({new_user[ratings[r].user], new_item[ratings[r].item], ratings[r].value});
  }
  return Dataset(std::move(users), std::move(items), std::move(kept));
}

DensifyResult densify_to(const Dataset& dataset, double target_density, DensityConvention convention) {
  if (!(target_density > 0.0 && target_density < 1.0)) {
    throw UsageError("target density must lie in (0, 1)");
  }
  DensifyResult res;
  res.convention = convention;
  res.stats_before = stats(dataset);
  Dataset core = dataset;
  // kcore(d, k+1) == kcore(kcore(d, k), k+1), so each step peels the previous core.
  for (int k = 1;; ++k) {
    core = kcore(core, k);
    if (core.empty()) {
      std::ostringstream msg;
      msg << "target density " << target_density << " unreachable: the " << k << "-core is empty";
      throw DataError(msg.str());
    }
    const DatasetStats s = stats(core);
    if (density(s, convention) >= target_density) {
      res.threshold_k = k;
      res.stats_after = s;
      res.dataset = std::move(core);
      return res;
    }
  }
}

}  // namespace rp
