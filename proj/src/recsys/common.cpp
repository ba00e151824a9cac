#include <algorithm>
#include <cmath>
#include <map>

#include "rp/recsys.hpp"

namespace rp {

bool is_knn(AlgorithmId id) noexcept {
  return id == AlgorithmId::kKnnBasic || id == AlgorithmId::kKnnMeans ||
         id == AlgorithmId::kKnnZscore || id == AlgorithmId::kKnnBaseline;
}

namespace {

const std::map<AlgorithmId, std::string>& names() {
  static const std::map<AlgorithmId, std::string> m = {
      {AlgorithmId::kNegativeControl, "negative_control"},
      {AlgorithmId::kRandomNormal, "random_normal"},
      {AlgorithmId::kBaseline, "baseline"},
      {AlgorithmId::kKnnBasic, "knn_basic"},
      {AlgorithmId::kKnnMeans, "knn_means"},
      {AlgorithmId::kKnnZscore, "knn_zscore"},
      {AlgorithmId::kKnnBaseline, "knn_baseline"},
      {AlgorithmId::kSvd, "svd"},
      {AlgorithmId::kSvdpp, "svdpp"},
      {AlgorithmId::kNmf, "nmf"},
      {AlgorithmId::kSlopeOne, "slope_one"},
      {AlgorithmId::kCoClustering, "coclustering"},
      {AlgorithmId::kEnsemble, "ensemble"},
  };
  return m;
}

}  // namespace

std::string to_string(AlgorithmSpec spec) {
  std::string s = names().at(spec.id);
  if (is_knn(spec.id) && spec.orientation == Orientation::kItem) s += "_item";
  return s;
}

AlgorithmSpec parse_algorithm(const std::string& name) {
  std::string base = name;
  Orientation orient = Orientation::kUser;
  if (base.size() > 5 && base.ends_with("_item")) {
    base.resize(base.size() - 5);
    orient = Orientation::kItem;
  } else if (base.size() > 5 && base.ends_with("_user")) {
    base.resize(base.size() - 5);
  }
  for (const auto& [id, n] : names()) {
    if (n == base) {
      if (orient == Orientation::kItem && !is_knn(id)) break;
      return {id, orient};
    }
  }
  throw UsageError("unknown algorithm '" + name + "'");
}

std::vector<AlgorithmSpec> all_algorithms() {
  std::vector<AlgorithmSpec> v(kComponentAlgorithms.begin(), kComponentAlgorithms.end());
  v.push_back({AlgorithmId::kEnsemble});
  return v;
}

void HyperParams::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid hyperparameter: ") + what);
  };
  need(k_neighbors > 0, "k_neighbors must be positive");
  need(min_k >= 1, "min_k must be >= 1");
  need(n_factors > 0 && nmf_factors > 0, "factor counts must be positive");
  need(n_epochs >= 0 && nmf_epochs >= 0 && baseline_epochs >= 0 && cocluster_epochs >= 0,
       "epoch counts must be non-negative");
  need(learning_rate >= 0.0 && reg >= 0.0, "learning_rate and reg must be >= 0");
  need(nmf_reg_user >= 0.0 && nmf_reg_item >= 0.0, "NMF regularization must be >= 0");
  need(baseline_reg_user >= 0.0 && baseline_reg_item >= 0.0, "baseline regularization must be >= 0");
  need(init_std >= 0.0, "init_std must be >= 0");
  need(cocluster_users > 0 && cocluster_items > 0, "cluster counts must be positive");
}

TrainingData::TrainingData(std::size_t n_users, std::size_t n_items, std::vector<Rating> ratings)
    : n_users_(n_users), n_items_(n_items), ratings_(std::move(ratings)) {
  user_offsets_.assign(n_users + 1, 0);
  item_offsets_.assign(n_items + 1, 0);
  for (const Rating& r : ratings_) {
    if (r.user >= n_users || r.item >= n_items) throw DataError("training rating index out of range");
    ++user_offsets_[r.user + 1];
    ++item_offsets_[r.item + 1];
  }
  for (std::size_t u = 0; u < n_users; ++u) user_offsets_[u + 1] += user_offsets_[u];
  for (std::size_t i = 0; i < n_items; ++i) item_offsets_[i + 1] += item_offsets_[i];
  user_entries_.resize(ratings_.size());
  item_entries_.resize(ratings_.size());
  std::vector<std::size_t> ucur(user_offsets_.begin(), user_offsets_.end() - 1);
  std::vector<std::size_t> icur(item_offsets_.begin(), item_offsets_.end() - 1);
  double sum = 0.0;
  for (const Rating& r : ratings_) {
    user_entries_[ucur[r.user]++] = {r.item, r.value};
    item_entries_[icur[r.item]++] = {r.user, r.value};
    sum += r.value;
  }
  global_mean_ = ratings_.empty() ? 0.0 : sum / static_cast<double>(ratings_.size());
  double ss = 0.0;
  for (const Rating& r : ratings_) ss += (r.value - global_mean_) * (r.value - global_mean_);
  global_std_ = ratings_.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(ratings_.size()));

  const auto moments = [](std::span<const Neighbor> xs, double fallback, double& mean, double& sd) {
    if (xs.empty()) {
      mean = fallback;
      sd = 0.0;
      return;
    }
    double s = 0.0;
    for (const auto& x : xs) s += x.value;
    mean = s / static_cast<double>(xs.size());
    double v = 0.0;
    for (const auto& x : xs) v += (x.value - mean) * (x.value - mean);
    sd = std::sqrt(v / static_cast<double>(xs.size()));
  };
  user_mean_.resize(n_users);
  user_std_.resize(n_users);
  for (std::uint32_t u = 0; u < n_users; ++u) moments(user_ratings(u), global_mean_, user_mean_[u], user_std_[u]);
  item_mean_.resize(n_items);
  item_std_.resize(n_items);
  for (std::uint32_t i = 0; i < n_items; ++i) moments(item_ratings(i), global_mean_, item_mean_[i], item_std_[i]);
}

void TrainingData::save(ByteWriter& w) const {
  w.u64(n_users_);
  w.u64(n_items_);
  w.u64(ratings_.size());
  for (const Rating& r : ratings_) {
    w.u32(r.user);
    w.u32(r.item);
    w.f64(r.value);
  }
}

TrainingData TrainingData::load(ByteReader& r) {
  const std::uint64_t n = r.u64(), m = r.u64(), count = r.u64();
  if (count > r.remaining() / 16) throw FormatError(FormatErrorKind::kTruncatedPayload, "truncated payload");
  std::vector<Rating> ratings(static_cast<std::size_t>(count));
  for (auto& x : ratings) {
    x.user = r.u32();
    x.item = r.u32();
    x.value = r.f64();
  }
  try {
    return TrainingData(static_cast<std::size_t>(n), static_cast<std::size_t>(m), std::move(ratings));
  } catch (const DataError& e) {
    throw FormatError(FormatErrorKind::kCorrupt, std::string("corrupt training block: ") + e.what());
  }
}

double Biases::estimate(const TrainingData& t, std::optional<std::uint32_t> u,
                        std::optional<std::uint32_t> i) const noexcept {
  double est = mu;
  if (t.user_known(u)) est += user[*u];
  if (t.item_known(i)) est += item[*i];
  return est;
}

Biases fit_baseline_als(const TrainingData& t, int epochs, double reg_user, double reg_item) {
  Biases b;
  b.mu = t.global_mean();
  b.user.assign(t.n_users(), 0.0);
  b.item.assign(t.n_items(), 0.0);
  for (int e = 0; e < epochs; ++e) {
    for (std::uint32_t i = 0; i < t.n_items(); ++i) {
      const auto rs = t.item_ratings(i);
      double dev = 0.0;
      for (const auto& [u, r] : rs) dev += r - b.mu - b.user[u];
      b.item[i] = dev / (reg_item + static_cast<double>(rs.size()));
    }
    for (std::uint32_t u = 0; u < t.n_users(); ++u) {
      const auto rs = t.user_ratings(u);
      double dev = 0.0;
      for (const auto& [i, r] : rs) dev += r - b.mu - b.item[i];
      b.user[u] = dev / (reg_user + static_cast<double>(rs.size()));
    }
  }
  return b;
}

namespace {

double finish_similarity(SimilarityKind kind, std::size_t count, double a, double b, double c) {
  if (count == 0) return 0.0;
  if (kind == SimilarityKind::kMsd) return 1.0 / (a / static_cast<double>(count) + 1.0);
  const double denom = std::sqrt(b * c);
  return denom > 0.0 ? a / denom : 0.0;
}

}  // namespace

double similarity(SimilarityKind kind, Orientation side, std::uint32_t a, std::uint32_t b,
                  const TrainingData& t) {
  const bool users = side == Orientation::kUser;
  const std::size_t n = users ? t.n_users() : t.n_items();
  if (a >= n || b >= n) throw UsageError("similarity index out of range");
  auto xs = users ? t.user_ratings(a) : t.item_ratings(a);
  auto ys = users ? t.user_ratings(b) : t.item_ratings(b);
  std::vector<Neighbor> x(xs.begin(), xs.end()), y(ys.begin(), ys.end());
  const auto by_index = [](const Neighbor& l, const Neighbor& r) { return l.index < r.index; };
  std::sort(x.begin(), x.end(), by_index);
  std::sort(y.begin(), y.end(), by_index);
  std::size_t count = 0;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t p = 0, q = 0; p < x.size() && q < y.size();) {
    if (x[p].index < y[q].index) {
      ++p;
    } else if (y[q].index < x[p].index) {
      ++q;
    } else {
      ++count;
      if (kind == SimilarityKind::kMsd) {
        s1 += (x[p].value - y[q].value) * (x[p].value - y[q].value);
      } else {
        s1 += x[p].value * y[q].value;
        s2 += x[p].value * x[p].value;
        s3 += y[q].value * y[q].value;
      }
      ++p;
      ++q;
    }
  }
  return finish_similarity(kind, count, s1, s2, s3);
}

Matrix<double> similarity_matrix(SimilarityKind kind, Orientation side, const TrainingData& t,
                                 Exec exec) {
  const bool users = side == Orientation::kUser;
  const std::size_t n = users ? t.n_users() : t.n_items();
  Matrix<double> sim(n, n, 0.0);
  const auto row_of = [&](std::uint32_t a) { return users ? t.user_ratings(a) : t.item_ratings(a); };
  const auto col_of = [&](std::uint32_t x) { return users ? t.item_ratings(x) : t.user_ratings(x); };

  const auto compute_row = [&](std::uint32_t a, std::vector<double>& s1, std::vector<double>& s2,
                               std::vector<double>& s3, std::vector<std::uint32_t>& cnt) {
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    std::fill(s3.begin(), s3.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0u);
    for (const auto& [x, ra] : row_of(a)) {
      for (const auto& [b, rb] : col_of(x)) {
        ++cnt[b];
        if (kind == SimilarityKind::kMsd) {
          s1[b] += (ra - rb) * (ra - rb);
        } else {
          s1[b] += ra * rb;
          s2[b] += ra * ra;
          s3[b] += rb * rb;
        }
      }
    }
    auto out = sim.row(a);
    for (std::size_t b = 0; b < n; ++b) out[b] = finish_similarity(kind, cnt[b], s1[b], s2[b], s3[b]);
  };

  const auto n_rows = static_cast<std::int64_t>(n);
  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<double> s1(n), s2(n), s3(n);
      std::vector<std::uint32_t> cnt(n);
#pragma omp for schedule(dynamic, 16)
      for (std::int64_t a = 0; a < n_rows; ++a) compute_row(static_cast<std::uint32_t>(a), s1, s2, s3, cnt);
    }
  } else {
    std::vector<double> s1(n), s2(n), s3(n);
    std::vector<std::uint32_t> cnt(n);
    for (std::int64_t a = 0; a < n_rows; ++a) compute_row(static_cast<std::uint32_t>(a), s1, s2, s3, cnt);
  }
  return sim;
}

}  // namespace rp
