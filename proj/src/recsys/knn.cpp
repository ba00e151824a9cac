#include <algorithm>
#include <cmath>

#include "rp/recsys.hpp"

namespace rp {

KnnModel::KnnModel(AlgorithmSpec spec, bool clamp, std::vector<std::string> users,
                   std::vector<std::string> items, TrainingData data, Biases biases,
                   Matrix<double> sim, int k, int min_k)
    : Predictor(spec, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      biases_(std::move(biases)),
      sim_(std::move(sim)),
      k_(k),
      min_k_(min_k) {}

namespace {

struct Candidate {
  double sim;
  std::uint32_t pos;  // position in the candidate list; deterministic tie-break
  std::uint32_t index;
  double rating;
};

double nonzero_sigma(double s) { return s == 0.0 ? 1.0 : s; }

}  // namespace

double KnnModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  if (!data_.user_known(u) || !data_.item_known(i)) return biases_.estimate(data_, u, i);

  const bool user_based = algorithm().orientation == Orientation::kUser;
  // x is the element whose neighbours are searched, y the element they must have rated.
  const std::uint32_t x = user_based ? *u : *i;
  const auto rated = user_based ? data_.item_ratings(*i) : data_.user_ratings(*u);
  const auto& means = user_based ? data_.user_means() : data_.item_means();
  const auto& stds = user_based ? data_.user_stds() : data_.item_stds();
  const auto sim_row = sim_.row(x);

  thread_local std::vector<Candidate> cands;
  cands.clear();
  for (std::uint32_t p = 0; p < rated.size(); ++p) {
    cands.push_back({sim_row[rated[p].index], p, rated[p].index, rated[p].value});
  }
  const auto better = [](const Candidate& a, const Candidate& b) {
    return a.sim != b.sim ? a.sim > b.sim : a.pos < b.pos;
  };
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(), better);

  const AlgorithmId id = algorithm().id;
  const auto neighbour_baseline = [&](std::uint32_t nb) {
    return user_based ? biases_.estimate(data_, nb, *i) : biases_.estimate(data_, *u, nb);
  };

  double sum_sim = 0.0, sum_num = 0.0;
  int actual_k = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const Candidate& nb = cands[c];
    if (!(nb.sim > 0.0)) continue;
    ++actual_k;
    sum_sim += nb.sim;
    switch (id) {
      case AlgorithmId::kKnnBasic:
        sum_num += nb.sim * nb.rating;
        break;
      case AlgorithmId::kKnnMeans:
        sum_num += nb.sim * (nb.rating - means[nb.index]);
        break;
      case AlgorithmId::kKnnZscore:
        sum_num += nb.sim * (nb.rating - means[nb.index]) / nonzero_sigma(stds[nb.index]);
        break;
      default:
        sum_num += nb.sim * (nb.rating - neighbour_baseline(nb.index));
        break;
    }
  }

  double center = 0.0;
  switch (id) {
    case AlgorithmId::kKnnBasic:
      center = data_.global_mean();
      break;
    case AlgorithmId::kKnnMeans:
    case AlgorithmId::kKnnZscore:
      center = means[x];
      break;
    default:
      center = biases_.estimate(data_, u, i);
      break;
  }
  if (actual_k < min_k_ || sum_sim == 0.0) return center;

  switch (id) {
    case AlgorithmId::kKnnBasic:
      return sum_num / sum_sim;
    case AlgorithmId::kKnnZscore:
      return center + nonzero_sigma(stds[x]) * sum_num / sum_sim;
    default:
      return center + sum_num / sum_sim;
  }
}

void KnnModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(biases_.mu);
  w.array(biases_.user);
  w.array(biases_.item);
  w.u64(sim_.rows());
  w.array(sim_.data());
  w.i32(k_);
  w.i32(min_k_);
}

}  // namespace rp
