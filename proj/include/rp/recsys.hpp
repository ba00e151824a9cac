#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rp/binary_io.hpp"
#include "rp/common.hpp"
#include "rp/dataset.hpp"
#include "rp/parallel.hpp"

namespace rp {

enum class AlgorithmId : std::uint8_t {
  kNegativeControl = 0,
  kRandomNormal = 1,
  kBaseline = 2,
  kKnnBasic = 3,
  kKnnMeans = 4,
  kKnnZscore = 5,
  kKnnBaseline = 6,
  kSvd = 7,
  kSvdpp = 8,
  kNmf = 9,
  kSlopeOne = 10,
  kCoClustering = 11,
  kEnsemble = 12,
};

enum class Orientation : std::uint8_t { kUser = 0, kItem = 1 };

struct AlgorithmSpec {
  AlgorithmId id = AlgorithmId::kBaseline;
  Orientation orientation = Orientation::kUser;  ///< Meaningful for the KNN family only.

  bool operator==(const AlgorithmSpec&) const = default;
};

bool is_knn(AlgorithmId id) noexcept;

/// Canonical names: negative_control, random_normal, baseline, knn_basic, ..., ensemble.
/// Item-based KNN appends "_item" (e.g. knn_means_item).
std::string to_string(AlgorithmSpec spec);
AlgorithmSpec parse_algorithm(const std::string& name);

/// The twelve non-ensemble predictors in canonical order; also the stacking block order.
inline constexpr std::array<AlgorithmSpec, 12> kComponentAlgorithms = {{
    {AlgorithmId::kNegativeControl},
    {AlgorithmId::kRandomNormal},
    {AlgorithmId::kBaseline},
    {AlgorithmId::kKnnBasic},
    {AlgorithmId::kKnnMeans},
    {AlgorithmId::kKnnZscore},
    {AlgorithmId::kKnnBaseline},
    {AlgorithmId::kSvd},
    {AlgorithmId::kSvdpp},
    {AlgorithmId::kNmf},
    {AlgorithmId::kSlopeOne},
    {AlgorithmId::kCoClustering},
}};

/// All thirteen, ensemble last.
std::vector<AlgorithmSpec> all_algorithms();

enum class SimilarityKind : std::uint8_t { kMsd = 0, kCosine = 1 };

struct HyperParams {
  int k_neighbors = 40;
  int min_k = 1;
  SimilarityKind similarity = SimilarityKind::kMsd;

  int n_factors = 100;  ///< SVD and SVD++
  int n_epochs = 20;    ///< SVD and SVD++
  double learning_rate = 0.005;
  double reg = 0.02;
  double init_std = 0.1;

  int nmf_factors = 15;
  int nmf_epochs = 50;
  double nmf_reg_user = 0.06;
  double nmf_reg_item = 0.06;

  int baseline_epochs = 10;
  double baseline_reg_user = 15.0;
  double baseline_reg_item = 10.0;

  int cocluster_users = 3;
  int cocluster_items = 3;
  int cocluster_epochs = 20;

  bool clamp = true;

  void validate() const;
};

/// One training rating seen from a user (index = item) or an item (index = user).
struct Neighbor {
  std::uint32_t index;
  double value;
};

/// Training ratings in both adjacency orders plus the per-user / per-item moments every
/// predictor needs. Users or items without training ratings count as unknown.
class TrainingData {
 public:
  TrainingData() = default;
  TrainingData(std::size_t n_users, std::size_t n_items, std::vector<Rating> ratings);
  explicit TrainingData(const Dataset& train)
      : TrainingData(train.n_users(), train.n_items(), train.ratings()) {}

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_items() const noexcept { return n_items_; }
  const std::vector<Rating>& ratings() const noexcept { return ratings_; }

  std::span<const Neighbor> user_ratings(std::uint32_t u) const noexcept {
    return {user_entries_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const Neighbor> item_ratings(std::uint32_t i) const noexcept {
    return {item_entries_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }
  bool user_known(std::optional<std::uint32_t> u) const noexcept {
    return u && *u < n_users_ && user_offsets_[*u + 1] > user_offsets_[*u];
  }
  bool item_known(std::optional<std::uint32_t> i) const noexcept {
    return i && *i < n_items_ && item_offsets_[*i + 1] > item_offsets_[*i];
  }

  double global_mean() const noexcept { return global_mean_; }
  double global_std() const noexcept { return global_std_; }
  const std::vector<double>& user_means() const noexcept { return user_mean_; }
  const std::vector<double>& item_means() const noexcept { return item_mean_; }
  /// Population standard deviations.
  const std::vector<double>& user_stds() const noexcept { return user_std_; }
  const std::vector<double>& item_stds() const noexcept { return item_std_; }

  void save(ByteWriter& w) const;
  static TrainingData load(ByteReader& r);

 private:
  std::size_t n_users_ = 0, n_items_ = 0;
  std::vector<Rating> ratings_;
  std::vector<std::size_t> user_offsets_{0}, item_offsets_{0};
  std::vector<Neighbor> user_entries_, item_entries_;
  double global_mean_ = 0.0, global_std_ = 0.0;
  std::vector<double> user_mean_, item_mean_, user_std_, item_std_;
};

/// b_u and b_i of the baseline estimate mu + b_u + b_i.
struct Biases {
  double mu = 0.0;
  std::vector<double> user;
  std::vector<double> item;

  /// Unknown sides contribute a zero bias.
  double estimate(const TrainingData& t, std::optional<std::uint32_t> u,
                  std::optional<std::uint32_t> i) const noexcept;
};

/// Alternating least squares for the biases: item sweep, then user sweep, per epoch.
Biases fit_baseline_als(const TrainingData& t, int epochs, double reg_user, double reg_item);

/// Mean-squared-difference similarity 1/(msd+1) (or cosine) between two users or two items over
/// their co-ratings; 0 with no co-ratings.
double similarity(SimilarityKind kind, Orientation side, std::uint32_t a, std::uint32_t b,
                  const TrainingData& t);

/// Full pairwise similarity table for one side, row-parallel.
Matrix<double> similarity_matrix(SimilarityKind kind, Orientation side, const TrainingData& t,
                                 Exec exec = Exec::kParallel);

/// A fitted initial predictor. Immutable; predict() is safe to call concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;

  AlgorithmSpec algorithm() const noexcept { return spec_; }
  bool clamped() const noexcept { return clamp_; }
  const std::vector<std::string>& user_ids() const noexcept { return user_ids_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  std::size_t n_users() const noexcept { return user_ids_.size(); }
  std::size_t n_items() const noexcept { return item_ids_.size(); }

  /// Score for (u, i), clamped to [1, 5] when clamping is on. nullopt marks an unknown side.
  double predict(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
    const double est = estimate(u, i);
    if (!clamp_) return est;
    return est < kMinRating ? kMinRating : (est > kMaxRating ? kMaxRating : est);
  }

  /// Raw, unclamped score.
  virtual double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const = 0;

  virtual void save_params(ByteWriter& w) const = 0;

 protected:
  Predictor(AlgorithmSpec spec, bool clamp, std::vector<std::string> users,
            std::vector<std::string> items)
      : spec_(spec), clamp_(clamp), user_ids_(std::move(users)), item_ids_(std::move(items)) {}

 private:
  AlgorithmSpec spec_;
  bool clamp_;
  std::vector<std::string> user_ids_, item_ids_;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

/// Trains one predictor on `train`. Statistics come from the training ratings only; the
/// predictor keeps the dataset's full index space so held-out users/items stay addressable.
/// Throws DataError on an empty training set.
PredictorPtr fit(AlgorithmSpec algorithm, const HyperParams& hp, const Dataset& train,
                 std::uint64_t seed);

/// Equi-weighted mean of already-fitted component predictors (normally the twelve, in
/// canonical order).
PredictorPtr make_ensemble(std::vector<PredictorPtr> components, bool clamp = true);

// ---- concrete predictors, exposed for inspection in tests ----

class NegativeControlModel final : public Predictor {
 public:
  NegativeControlModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                       std::uint64_t seed);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

class RandomNormalModel final : public Predictor {
 public:
  RandomNormalModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                    double mean, double stddev, std::uint64_t seed);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  double mean() const noexcept { return mean_; }
  double stddev() const noexcept { return stddev_; }

 private:
  double mean_, stddev_;
  std::uint64_t seed_;
};

class BaselineModel final : public Predictor {
 public:
  BaselineModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                TrainingData data, Biases biases);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  const Biases& biases() const noexcept { return biases_; }

 private:
  TrainingData data_;
  Biases biases_;
};

/// KnnBasic / KnnMeans / KnnZscore / KnnBaseline, user- or item-based.
class KnnModel final : public Predictor {
 public:
  KnnModel(AlgorithmSpec spec, bool clamp, std::vector<std::string> users,
           std::vector<std::string> items, TrainingData data, Biases biases, Matrix<double> sim,
           int k, int min_k);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  const Matrix<double>& similarities() const noexcept { return sim_; }

 private:
  TrainingData data_;
  Biases biases_;
  Matrix<double> sim_;
  int k_, min_k_;
};

class SvdModel final : public Predictor {
 public:
  SvdModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
           TrainingData data, double mu, std::vector<double> bu, std::vector<double> bi,
           Matrix<double> p, Matrix<double> q);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;

  /// Regularized squared error over `t`, the quantity SGD minimizes.
  double objective(const TrainingData& t, double reg) const;

 private:
  TrainingData data_;
  double mu_;
  std::vector<double> bu_, bi_;
  Matrix<double> p_, q_;
};

class SvdppModel final : public Predictor {
 public:
  SvdppModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
             TrainingData data, double mu, std::vector<double> bu, std::vector<double> bi,
             Matrix<double> p, Matrix<double> q, Matrix<double> y);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;

 private:
  TrainingData data_;
  double mu_;
  std::vector<double> bu_, bi_;
  Matrix<double> p_, q_, y_;
  Matrix<double> user_vec_;  // p_u + |I_u|^-1/2 sum_j y_j, cached
};

class NmfModel final : public Predictor {
 public:
  NmfModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
           TrainingData data, Biases fallback, Matrix<double> p, Matrix<double> q);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  const Matrix<double>& user_factors() const noexcept { return p_; }
  const Matrix<double>& item_factors() const noexcept { return q_; }

 private:
  TrainingData data_;
  Biases fallback_;
  Matrix<double> p_, q_;
};

class SlopeOneModel final : public Predictor {
 public:
  SlopeOneModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                TrainingData data, Biases fallback, Matrix<double> dev, Matrix<std::uint32_t> freq);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  /// Mean of r_ui - r_uj over users who rated both.
  double deviation(std::uint32_t i, std::uint32_t j) const noexcept { return dev_(i, j); }

 private:
  TrainingData data_;
  Biases fallback_;
  Matrix<double> dev_;
  Matrix<std::uint32_t> freq_;
};

class CoClusteringModel final : public Predictor {
 public:
  struct Clusters {
    std::vector<std::uint32_t> of_user, of_item;
    std::vector<double> user_cluster_mean, item_cluster_mean;
    Matrix<double> cocluster_mean;
  };
  CoClusteringModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                    TrainingData data, Clusters clusters);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  const Clusters& clusters() const noexcept { return c_; }

 private:
  TrainingData data_;
  Clusters c_;
};

class EnsembleModel final : public Predictor {
 public:
  EnsembleModel(bool clamp, std::vector<PredictorPtr> components);
  double estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const override;
  void save_params(ByteWriter& w) const override;
  const std::vector<PredictorPtr>& components() const noexcept { return components_; }

 private:
  std::vector<PredictorPtr> components_;
};

// ---- persistence: magic "RPRS", u16 version, algorithm tag, little-endian parameter blocks ----

inline constexpr std::uint16_t kModelVersion = 1;

std::vector<std::uint8_t> serialize_predictor(const Predictor& p);
PredictorPtr deserialize_predictor(std::span<const std::uint8_t> bytes);
void save_predictor(const Predictor& p, const std::string& path);
PredictorPtr load_predictor(const std::string& path);

}  // namespace rp
