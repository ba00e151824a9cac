#include "rp/recsys.hpp"

namespace rp {

SlopeOneModel::SlopeOneModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                             TrainingData data, Biases fallback, Matrix<double> dev,
                             Matrix<std::uint32_t> freq)
    : Predictor({AlgorithmId::kSlopeOne}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      fallback_(std::move(fallback)),
      dev_(std::move(dev)),
      freq_(std::move(freq)) {}

double SlopeOneModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  if (!data_.user_known(u) || !data_.item_known(i)) return fallback_.estimate(data_, u, i);
  double est = data_.user_means()[*u];
  double sum = 0.0;
  std::size_t relevant = 0;
  const auto dev_row = dev_.row(*i);
  const auto freq_row = freq_.row(*i);
  for (const auto& [j, r] : data_.user_ratings(*u)) {
    if (freq_row[j] > 0) {
      sum += dev_row[j];
      ++relevant;
    }
  }
  if (relevant > 0) est += sum / static_cast<double>(relevant);
  return est;
}

void SlopeOneModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(fallback_.mu);
  w.array(fallback_.user);
  w.array(fallback_.item);
  w.array(dev_.data());
  w.array(freq_.data());
}

CoClusteringModel::CoClusteringModel(bool clamp, std::vector<std::string> users,
                                     std::vector<std::string> items, TrainingData data, Clusters clusters)
    : Predictor({AlgorithmId::kCoClustering}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      c_(std::move(clusters)) {}

double CoClusteringModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  if (!data_.user_known(u) || !data_.item_known(i)) return data_.global_mean();
  const std::uint32_t cu = c_.of_user[*u], ci = c_.of_item[*i];
  return c_.cocluster_mean(cu, ci) + (data_.user_means()[*u] - c_.user_cluster_mean[cu]) +
         (data_.item_means()[*i] - c_.item_cluster_mean[ci]);
}

void CoClusteringModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.array(c_.of_user);
  w.array(c_.of_item);
  w.array(c_.user_cluster_mean);
  w.array(c_.item_cluster_mean);
  w.u64(c_.cocluster_mean.rows());
  w.u64(c_.cocluster_mean.cols());
  w.array(c_.cocluster_mean.data());
}

namespace {

std::vector<std::string> ids_of(const std::vector<PredictorPtr>& comps, bool users) {
  if (comps.empty()) throw UsageError("ensemble needs at least one component");
  return users ? comps.front()->user_ids() : comps.front()->item_ids();
}

}  // namespace

EnsembleModel::EnsembleModel(bool clamp, std::vector<PredictorPtr> components)
    : Predictor({AlgorithmId::kEnsemble}, clamp, ids_of(components, true), ids_of(components, false)),
      components_(std::move(components)) {
  for (const auto& c : components_) {
    if (c->algorithm().id == AlgorithmId::kEnsemble) throw UsageError("ensemble cannot nest an ensemble");
    if (c->n_users() != n_users() || c->n_items() != n_items()) {
      throw UsageError("ensemble components disagree on the index space");
    }
  }
}

double EnsembleModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  double sum = 0.0;
  for (const auto& c : components_) sum += c->predict(u, i);
  return sum / static_cast<double>(components_.size());
}

void EnsembleModel::save_params(ByteWriter& w) const {
  w.u64(components_.size());
  for (const auto& c : components_) w.array(serialize_predictor(*c));
}

PredictorPtr make_ensemble(std::vector<PredictorPtr> components, bool clamp) {
  return std::make_shared<EnsembleModel>(clamp, std::move(components));
}

}  // namespace rp
