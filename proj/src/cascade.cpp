#include "rp/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rp/binary_io.hpp"
#include "rp/dataset.hpp"
#include "rp/rng.hpp"

namespace rp {

namespace {

constexpr std::string_view kMagic = "RPGB";
constexpr double kMinGain = 1e-12;

struct RowState {
  std::int32_t node;  ///< -1 once the row sits in a finished leaf or is out of the sample
  double resid;
};

struct Split {
  double gain = 0.0;
  double threshold = 0.0;
  std::int32_t feature = -1;
};

struct NodeStats {
  std::size_t count = 0;
  double sum = 0.0;
};

/// Feature-major copy of the training rows, reordered into a canonical row order so the fit
/// is independent of the order rows arrive in.
struct Columns {
  std::size_t n = 0, width = 0;
  std::vector<double> values;  ///< width x n
  std::vector<double> y;
  std::vector<std::vector<std::uint32_t>> order;  ///< per feature, rows by ascending value
  std::vector<std::vector<double>> sorted;        ///< per feature, values in that order

  double at(std::size_t f, std::size_t r) const noexcept { return values[f * n + r]; }
};

Columns canonical_columns(const Matrix<double>& x, std::span<const double> y) {
  Columns c;
  c.n = x.rows();
  c.width = x.cols();
  std::vector<std::uint32_t> perm(c.n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t f = 0; f < c.width; ++f) {
      if (ra[f] != rb[f]) return ra[f] < rb[f];
    }
    if (y[a] != y[b]) return y[a] < y[b];
    return a < b;
  });
  c.values.resize(c.width * c.n);
  c.y.resize(c.n);
  for (std::size_t r = 0; r < c.n; ++r) {
    const auto src = x.row(perm[r]);
    for (std::size_t f = 0; f < c.width; ++f) c.values[f * c.n + r] = src[f];
    c.y[r] = y[perm[r]];
  }
  c.order.resize(c.width);
  c.sorted.resize(c.width);
  const auto n_features = static_cast<std::int64_t>(c.width);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t f = 0; f < n_features; ++f) {
    auto& ord = c.order[f];
    ord.resize(c.n);
    std::iota(ord.begin(), ord.end(), 0u);
    const double* col = c.values.data() + static_cast<std::size_t>(f) * c.n;
    std::stable_sort(ord.begin(), ord.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    auto& s = c.sorted[f];
    s.resize(c.n);
    for (std::size_t j = 0; j < c.n; ++j) s[j] = col[ord[j]];
  }
  return c;
}

double midpoint(double lo, double hi) noexcept {
  const double t = lo + (hi - lo) * 0.5;
  return t < hi ? t : lo;
}

/// Best split of every active node along one feature. `slot_of` maps a node id to its index in
/// `stats`, or -1 for nodes that are not being split at this level.
void scan_feature(const Columns& c, std::size_t f, const std::vector<RowState>& rows,
                  const std::vector<std::int32_t>& slot_of, const std::vector<NodeStats>& stats, int min_leaf,
                  std::vector<Split>& best) {
  const std::size_t k = stats.size();
  std::vector<std::size_t> count_left(k, 0);
  std::vector<double> sum_left(k, 0.0), last(k, 0.0);
  best.assign(k, Split{});
  const auto& ord = c.order[f];
  const auto& vals = c.sorted[f];
  const auto min_n = static_cast<std::size_t>(min_leaf);
  for (std::size_t j = 0; j < c.n; ++j) {
    const RowState& st = rows[ord[j]];
    if (st.node < 0) continue;
    const std::int32_t s = slot_of[st.node];
    if (s < 0) continue;
    const double v = vals[j];
    const std::size_t nl = count_left[s];
    const NodeStats& ns = stats[s];
    if (nl >= min_n && v > last[s] && ns.count - nl >= min_n) {
      const double sl = sum_left[s], sr = ns.sum - sl;
      const auto dl = static_cast<double>(nl), dr = static_cast<double>(ns.count - nl);
      const double gain = sl * sl / dl + sr * sr / dr - ns.sum * ns.sum / static_cast<double>(ns.count);
      if (gain > best[s].gain) best[s] = Split{gain, midpoint(last[s], v), static_cast<std::int32_t>(f)};
    }
    count_left[s] = nl + 1;
    sum_left[s] += st.resid;
    last[s] = v;
  }
}

RegressionTree grow_tree(const Columns& c, std::vector<RowState>& rows, const GBTConfig& cfg, Exec exec) {
  RegressionTree tree;
  tree.nodes.emplace_back();
  std::vector<NodeStats> node_stats(1);
  for (const auto& r : rows) {
    if (r.node >= 0) {
      ++node_stats[0].count;
      node_stats[0].sum += r.resid;
    }
  }
  std::vector<std::int32_t> level = {0};
  std::vector<std::vector<Split>> per_feature(c.width);

  for (int depth = 0; depth < cfg.max_depth && !level.empty(); ++depth) {
    std::vector<std::int32_t> slot_of(tree.nodes.size(), -1);
    std::vector<NodeStats> active_stats;
    std::vector<std::int32_t> active;
    for (std::int32_t id : level) {
      if (node_stats[id].count >= 2 * static_cast<std::size_t>(cfg.min_samples_leaf)) {
        slot_of[id] = static_cast<std::int32_t>(active.size());
        active.push_back(id);
        active_stats.push_back(node_stats[id]);
      }
    }
    if (active.empty()) break;

    const auto n_features = static_cast<std::int64_t>(c.width);
    if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
      for (std::int64_t f = 0; f < n_features; ++f) {
        scan_feature(c, static_cast<std::size_t>(f), rows, slot_of, active_stats, cfg.min_samples_leaf,
                     per_feature[f]);
      }
    } else {
      for (std::int64_t f = 0; f < n_features; ++f) {
        scan_feature(c, static_cast<std::size_t>(f), rows, slot_of, active_stats, cfg.min_samples_leaf,
                     per_feature[f]);
      }
    }

    // reduce in feature order; strict comparison keeps the lowest feature index on ties
    std::vector<Split> chosen(active.size());
    for (std::size_t f = 0; f < c.width; ++f) {
      for (std::size_t s = 0; s < active.size(); ++s) {
        if (per_feature[f][s].gain > chosen[s].gain) chosen[s] = per_feature[f][s];
      }
    }

    std::vector<std::int32_t> next;
    std::vector<std::int32_t> split_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < active.size(); ++s) {
      if (chosen[s].feature < 0 || chosen[s].gain <= kMinGain) continue;
      const std::int32_t id = active[s];
      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      node_stats.resize(tree.nodes.size());
      auto& node = tree.nodes[id];
      node.feature = chosen[s].feature;
      node.threshold = chosen[s].threshold;
      node.left = left;
      node.right = left + 1;
      split_of[id] = static_cast<std::int32_t>(s);
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      RowState& st = rows[r];
      if (st.node < 0) continue;
      if (split_of[st.node] < 0) {
        st.node = -1;  // parent became a leaf
        continue;
      }
      const auto& node = tree.nodes[st.node];
      st.node = c.at(static_cast<std::size_t>(node.feature), r) <= node.threshold ? node.left : node.right;
      ++node_stats[st.node].count;
      node_stats[st.node].sum += st.resid;
    }
    level = std::move(next);
  }

  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    auto& node = tree.nodes[id];
    if (node.feature >= 0) continue;
    const NodeStats& ns = node_stats[id];
    node.value = ns.count > 0 ? cfg.learning_rate * ns.sum / static_cast<double>(ns.count) : 0.0;
  }
  return tree;
}

double predict_columns(const RegressionTree& tree, const Columns& c, std::size_t r) noexcept {
  std::int32_t id = 0;
  while (tree.nodes[id].feature >= 0) {
    const auto& node = tree.nodes[id];
    id = c.at(static_cast<std::size_t>(node.feature), r) <= node.threshold ? node.left : node.right;
  }
  return tree.nodes[id].value;
}

void check_finite(const Matrix<double>& x) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
}

}  // namespace

void GBTConfig::validate() const {
  if (n_trees < 0) throw UsageError("n_trees must be >= 0");
  if (max_depth < 1) throw UsageError("max_depth must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw UsageError("subsample must lie in (0, 1]");
  if (min_samples_leaf < 1) throw UsageError("min_samples_leaf must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning_rate must be > 0");
}

double RegressionTree::predict(std::span<const double> x) const noexcept {
  std::int32_t id = 0;
  while (nodes[id].feature >= 0) {
    const auto& node = nodes[id];
    id = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes[id].value;
}

GBTModel::GBTModel(GBTConfig config, std::size_t feature_width, double base_prediction,
                   std::vector<RegressionTree> trees)
    : config_(config), width_(feature_width), base_(base_prediction), trees_(std::move(trees)) {}

GBTModel GBTModel::truncated(std::size_t n) const {
  const std::size_t k = std::min(n, trees_.size());
  return GBTModel(config_, width_, base_, std::vector<RegressionTree>(trees_.begin(), trees_.begin() + k));
}

double GBTModel::predict_row(std::span<const double> x) const noexcept {
  double p = base_;
  for (const auto& t : trees_) p += t.predict(x);
  return p;
}

GBTModel gbt_fit(const Matrix<double>& x, std::span<const double> y, const GBTConfig& config, Exec exec) {
  config.validate();
  if (x.rows() == 0 || y.empty()) throw DataError("cannot fit a cascade on zero rows");
  if (x.rows() != y.size()) throw DataError("feature rows and labels differ in length");
  if (x.cols() == 0) throw DataError("cannot fit a cascade on zero features");
  check_finite(x);
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("non-finite label");
  }

  const Columns c = canonical_columns(x, y);
  double base = 0.0;
  for (double v : c.y) base += v;
  base /= static_cast<double>(c.n);

  std::vector<double> pred(c.n, base);
  std::vector<RowState> rows(c.n);
  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(config.n_trees));
  std::vector<std::uint32_t> pool;
  const auto sample_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(c.n))));
  for (int t = 0; t < config.n_trees; ++t) {
    if (sample_size < c.n) {
      pool.resize(c.n);
      std::iota(pool.begin(), pool.end(), 0u);
      Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
      for (std::size_t k = 0; k < sample_size; ++k) {
        std::swap(pool[k], pool[k + static_cast<std::size_t>(rng.below(c.n - k))]);
      }
      for (auto& r : rows) r.node = -1;
      for (std::size_t k = 0; k < sample_size; ++k) rows[pool[k]].node = 0;
    } else {
      for (auto& r : rows) r.node = 0;
    }
    for (std::size_t r = 0; r < c.n; ++r) rows[r].resid = c.y[r] - pred[r];
    trees.push_back(grow_tree(c, rows, config, exec));
    const auto& tree = trees.back();
    for (std::size_t r = 0; r < c.n; ++r) pred[r] += predict_columns(tree, c, r);
  }
  return GBTModel(config, c.width, base, std::move(trees));
}

std::vector<double> gbt_predict(const GBTModel& model, const Matrix<double>& x, bool clamp) {
  if (x.cols() != model.feature_width()) {
    throw DataError("feature width mismatch: model expects " + std::to_string(model.feature_width()) +
                    " columns, got " + std::to_string(x.cols()));
  }
  check_finite(x);
  std::vector<double> out(x.rows());
  const auto n = static_cast<std::int64_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    double p = model.predict_row(x.row(static_cast<std::size_t>(r)));
    if (clamp) p = std::clamp(p, kMinRating, kMaxRating);
    out[r] = p;
  }
  return out;
}

std::vector<std::uint8_t> serialize_gbt(const GBTModel& model) {
  ByteWriter w;
  w.magic(kMagic);
  w.u16(kGbtVersion);
  const auto& c = model.config();
  w.i32(c.n_trees);
  w.i32(c.max_depth);
  w.f64(c.learning_rate);
  w.f64(c.subsample);
  w.i32(c.min_samples_leaf);
  w.u64(c.seed);
  w.u64(model.feature_width());
  w.f64(model.base_prediction());
  w.u64(model.trees().size());
  for (const auto& t : model.trees()) {
    w.u64(t.nodes.size());
    for (const auto& n : t.nodes) w.i32(n.feature);
    for (const auto& n : t.nodes) w.f64(n.threshold);
    for (const auto& n : t.nodes) w.i32(n.left);
    for (const auto& n : t.nodes) w.i32(n.right);
    for (const auto& n : t.nodes) w.f64(n.value);
  }
  return w.take();
}

GBTModel deserialize_gbt(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::uint16_t version = r.u16();
  if (version != kGbtVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch, "version mismatch: cascade file is v" +
                                                             std::to_string(version) + ", expected v" +
                                                             std::to_string(kGbtVersion));
  }
  GBTConfig c;
  c.n_trees = r.i32();
  c.max_depth = r.i32();
  c.learning_rate = r.f64();
  c.subsample = r.f64();
  c.min_samples_leaf = r.i32();
  c.seed = r.u64();
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw FormatError(FormatErrorKind::kCorrupt, std::string("bad cascade config: ") + e.what());
  }
  const std::uint64_t width = r.u64();
  const double base = r.f64();
  const std::uint64_t n_trees = r.u64();
  // every tree costs at least its node count plus one node
  if (width == 0 || !std::isfinite(base) || n_trees > r.remaining() / 36) {
    throw FormatError(FormatErrorKind::kCorrupt, "bad cascade header");
  }
  std::vector<RegressionTree> trees(static_cast<std::size_t>(n_trees));
  for (auto& t : trees) {
    const std::uint64_t n = r.u64();
    if (n == 0 || n > r.remaining() / 28) throw FormatError(FormatErrorKind::kTruncatedPayload, "truncated payload");
    t.nodes.resize(static_cast<std::size_t>(n));
    for (auto& node : t.nodes) node.feature = r.i32();
    for (auto& node : t.nodes) node.threshold = r.f64();
    for (auto& node : t.nodes) node.left = r.i32();
    for (auto& node : t.nodes) node.right = r.i32();
    for (auto& node : t.nodes) node.value = r.f64();
    for (std::size_t id = 0; id < t.nodes.size(); ++id) {
      const auto& node = t.nodes[id];
      if (node.feature < 0) {
        if (node.feature != -1 || !std::isfinite(node.value)) throw FormatError(FormatErrorKind::kCorrupt, "bad leaf");
        continue;
      }
      // children strictly after their parent rules out cycles
      const auto self = static_cast<std::int64_t>(id);
      if (static_cast<std::uint64_t>(node.feature) >= width || node.left <= self || node.right <= self ||
          static_cast<std::size_t>(node.left) >= t.nodes.size() ||
          static_cast<std::size_t>(node.right) >= t.nodes.size() || !std::isfinite(node.threshold)) {
        throw FormatError(FormatErrorKind::kCorrupt, "bad split node");
      }
    }
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kCorrupt, "trailing bytes after cascade payload");
  return GBTModel(c, static_cast<std::size_t>(width), base, std::move(trees));
}

void save_gbt(const GBTModel& model, const std::string& path) { write_file_bytes(path, serialize_gbt(model)); }

GBTModel load_gbt(const std::string& path) { return deserialize_gbt(read_file_bytes(path)); }

}  // namespace rp
