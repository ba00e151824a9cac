#include <cmath>
#include <numeric>

#include "rp/recsys.hpp"
#include "rp/rng.hpp"

namespace rp {

namespace {

std::uint64_t algorithm_seed(AlgorithmSpec spec, std::uint64_t seed) {
  return mix_seed(seed, static_cast<std::uint64_t>(spec.id) * 2 + static_cast<std::uint64_t>(spec.orientation));
}

Matrix<double> normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
  return m;
}

PredictorPtr fit_svd(const HyperParams& hp, const Dataset& train, TrainingData t, Rng& rng) {
  const std::size_t nf = static_cast<std::size_t>(hp.n_factors);
  const double lr = hp.learning_rate, reg = hp.reg;
  std::vector<double> bu(t.n_users(), 0.0), bi(t.n_items(), 0.0);
  Matrix<double> p = normal_matrix(t.n_users(), nf, hp.init_std, rng);
  Matrix<double> q = normal_matrix(t.n_items(), nf, hp.init_std, rng);
  const double mu = t.global_mean();
  const auto& ratings = t.ratings();
  std::vector<std::size_t> order(ratings.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hp.n_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k : order) {
      const Rating& r = ratings[k];
      auto pu = p.row(r.user);
      auto qi = q.row(r.item);
      double dotv = 0.0;
      for (std::size_t f = 0; f < nf; ++f) dotv += qi[f] * pu[f];
      const double err = r.value - (mu + bu[r.user] + bi[r.item] + dotv);
      bu[r.user] += lr * (err - reg * bu[r.user]);
      bi[r.item] += lr * (err - reg * bi[r.item]);
      for (std::size_t f = 0; f < nf; ++f) {
        const double puf = pu[f], qif = qi[f];
        pu[f] += lr * (err * qif - reg * puf);
        qi[f] += lr * (err * puf - reg * qif);
      }
    }
  }
  return std::make_shared<SvdModel>(hp.clamp, train.users(), train.items(), std::move(t), mu, std::move(bu),
                                    std::move(bi), std::move(p), std::move(q));
}

// SGD over ratings grouped by user. Every y_j of the current user receives the same affine update
// y_j <- a*y_j + lr*err*|I_u|^-1/2*q_i, so the updates are kept lazily as y_j = alpha*y_j0 + beta
// and materialised once at the end of the user's block. This is exact per-rating SGD, in O(f)
// per rating instead of O(|I_u| f).
PredictorPtr fit_svdpp(const HyperParams& hp, const Dataset& train, TrainingData t, Rng& rng) {
  const std::size_t nf = static_cast<std::size_t>(hp.n_factors);
  const double lr = hp.learning_rate, reg = hp.reg;
  std::vector<double> bu(t.n_users(), 0.0), bi(t.n_items(), 0.0);
  Matrix<double> p = normal_matrix(t.n_users(), nf, hp.init_std, rng);
  Matrix<double> q = normal_matrix(t.n_items(), nf, hp.init_std, rng);
  Matrix<double> y = normal_matrix(t.n_items(), nf, hp.init_std, rng);
  const double mu = t.global_mean();

  std::vector<std::uint32_t> users(t.n_users());
  std::iota(users.begin(), users.end(), 0u);
  std::vector<Neighbor> block;
  std::vector<double> sum_y(nf), beta(nf), impl(nf);

  for (int epoch = 0; epoch < hp.n_epochs; ++epoch) {
    rng.shuffle(std::span<std::uint32_t>(users));
    for (std::uint32_t u : users) {
      const auto rated = t.user_ratings(u);
      if (rated.empty()) continue;
      block.assign(rated.begin(), rated.end());
      rng.shuffle(std::span<Neighbor>(block));
      const double n_u = static_cast<double>(rated.size());
      const double norm = 1.0 / std::sqrt(n_u);

      std::fill(sum_y.begin(), sum_y.end(), 0.0);
      for (const auto& [j, r] : rated) {
        const auto yj = y.row(j);
        for (std::size_t f = 0; f < nf; ++f) sum_y[f] += yj[f];
      }
      double alpha = 1.0;
      std::fill(beta.begin(), beta.end(), 0.0);
      auto pu = p.row(u);

      for (const auto& [i, r] : block) {
        auto qi = q.row(i);
        double dotv = 0.0;
        for (std::size_t f = 0; f < nf; ++f) {
          impl[f] = norm * sum_y[f];
          dotv += qi[f] * (pu[f] + impl[f]);
        }
        const double err = r - (mu + bu[u] + bi[i] + dotv);
        bu[u] += lr * (err - reg * bu[u]);
        bi[i] += lr * (err - reg * bi[i]);
        const double decay = 1.0 - lr * reg;
        alpha *= decay;
        for (std::size_t f = 0; f < nf; ++f) {
          const double puf = pu[f], qif = qi[f];
          pu[f] += lr * (err * qif - reg * puf);
          qi[f] += lr * (err * (puf + impl[f]) - reg * qif);
          const double shift = lr * err * norm * qif;
          beta[f] = decay * beta[f] + shift;
          sum_y[f] = decay * sum_y[f] + n_u * shift;
        }
      }
      for (const auto& [j, r] : rated) {
        auto yj = y.row(j);
        for (std::size_t f = 0; f < nf; ++f) yj[f] = alpha * yj[f] + beta[f];
      }
    }
  }
  return std::make_shared<SvdppModel>(hp.clamp, train.users(), train.items(), std::move(t), mu, std::move(bu),
                                      std::move(bi), std::move(p), std::move(q), std::move(y));
}

PredictorPtr fit_nmf(const HyperParams& hp, const Dataset& train, TrainingData t, Biases fallback, Rng& rng) {
  const std::size_t nf = static_cast<std::size_t>(hp.nmf_factors);
  Matrix<double> p(t.n_users(), nf), q(t.n_items(), nf);
  for (double& v : p.data()) v = rng.uniform_open(0.0, 1.0);
  for (double& v : q.data()) v = rng.uniform_open(0.0, 1.0);

  Matrix<double> user_num(t.n_users(), nf), user_den(t.n_users(), nf);
  Matrix<double> item_num(t.n_items(), nf), item_den(t.n_items(), nf);
  for (int epoch = 0; epoch < hp.nmf_epochs; ++epoch) {
    std::fill(user_num.data().begin(), user_num.data().end(), 0.0);
    std::fill(user_den.data().begin(), user_den.data().end(), 0.0);
    std::fill(item_num.data().begin(), item_num.data().end(), 0.0);
    std::fill(item_den.data().begin(), item_den.data().end(), 0.0);
    for (const Rating& r : t.ratings()) {
      const auto pu = p.row(r.user);
      const auto qi = q.row(r.item);
      double est = 0.0;
      for (std::size_t f = 0; f < nf; ++f) est += qi[f] * pu[f];
      auto un = user_num.row(r.user), ud = user_den.row(r.user);
      auto in = item_num.row(r.item), id = item_den.row(r.item);
      for (std::size_t f = 0; f < nf; ++f) {
        un[f] += qi[f] * r.value;
        ud[f] += qi[f] * est;
        in[f] += pu[f] * r.value;
        id[f] += pu[f] * est;
      }
    }
    for (std::uint32_t u = 0; u < t.n_users(); ++u) {
      const double n_r = static_cast<double>(t.user_ratings(u).size());
      if (n_r == 0.0) continue;
      auto pu = p.row(u);
      const auto un = user_num.row(u), ud = user_den.row(u);
      for (std::size_t f = 0; f < nf; ++f) pu[f] *= un[f] / (ud[f] + n_r * hp.nmf_reg_user * pu[f]);
    }
    for (std::uint32_t i = 0; i < t.n_items(); ++i) {
      const double n_r = static_cast<double>(t.item_ratings(i).size());
      if (n_r == 0.0) continue;
      auto qi = q.row(i);
      const auto in = item_num.row(i), id = item_den.row(i);
      for (std::size_t f = 0; f < nf; ++f) qi[f] *= in[f] / (id[f] + n_r * hp.nmf_reg_item * qi[f]);
    }
  }
  return std::make_shared<NmfModel>(hp.clamp, train.users(), train.items(), std::move(t), std::move(fallback),
                                    std::move(p), std::move(q));
}

PredictorPtr fit_slope_one(const HyperParams& hp, const Dataset& train, TrainingData t, Biases fallback) {
  const std::size_t m = t.n_items();
  Matrix<double> dev(m, m, 0.0);
  Matrix<std::uint32_t> freq(m, m, 0u);
  const auto m_rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t ii = 0; ii < m_rows; ++ii) {
    const auto i = static_cast<std::uint32_t>(ii);
    auto drow = dev.row(i);
    auto frow = freq.row(i);
    for (const auto& [u, r_ui] : t.item_ratings(i)) {
      for (const auto& [j, r_uj] : t.user_ratings(u)) {
        drow[j] += r_ui - r_uj;
        ++frow[j];
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (frow[j] > 0) drow[j] /= static_cast<double>(frow[j]);
    }
  }
  // dev(i, j) = -dev(j, i) exactly; the two sums above visit users in different orders.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) dev(i, j) = -dev(j, i);
  }
  return std::make_shared<SlopeOneModel>(hp.clamp, train.users(), train.items(), std::move(t), std::move(fallback),
                                         std::move(dev), std::move(freq));
}

void cocluster_averages(const TrainingData& t, CoClusteringModel::Clusters& c, std::size_t ku, std::size_t ki) {
  std::vector<double> su(ku, 0.0), si(ki, 0.0);
  std::vector<std::size_t> nu(ku, 0), ni(ki, 0);
  Matrix<double> sc(ku, ki, 0.0);
  Matrix<std::size_t> nc(ku, ki, 0);
  for (const Rating& r : t.ratings()) {
    const auto cu = c.of_user[r.user], ci = c.of_item[r.item];
    su[cu] += r.value;
    ++nu[cu];
    si[ci] += r.value;
    ++ni[ci];
    sc(cu, ci) += r.value;
    ++nc(cu, ci);
  }
  const double mu = t.global_mean();
  c.user_cluster_mean.resize(ku);
  for (std::size_t k = 0; k < ku; ++k) c.user_cluster_mean[k] = nu[k] ? su[k] / static_cast<double>(nu[k]) : mu;
  c.item_cluster_mean.resize(ki);
  for (std::size_t k = 0; k < ki; ++k) c.item_cluster_mean[k] = ni[k] ? si[k] / static_cast<double>(ni[k]) : mu;
  c.cocluster_mean = Matrix<double>(ku, ki);
  for (std::size_t a = 0; a < ku; ++a) {
    for (std::size_t b = 0; b < ki; ++b) {
      c.cocluster_mean(a, b) = nc(a, b) ? sc(a, b) / static_cast<double>(nc(a, b)) : mu;
    }
  }
}

PredictorPtr fit_coclustering(const HyperParams& hp, const Dataset& train, TrainingData t, Rng& rng) {
  const auto ku = static_cast<std::size_t>(hp.cocluster_users);
  const auto ki = static_cast<std::size_t>(hp.cocluster_items);
  CoClusteringModel::Clusters c;
  c.of_user.resize(t.n_users());
  c.of_item.resize(t.n_items());
  for (auto& x : c.of_user) x = static_cast<std::uint32_t>(rng.below(ku));
  for (auto& x : c.of_item) x = static_cast<std::uint32_t>(rng.below(ki));
  const auto& umean = t.user_means();
  const auto& imean = t.item_means();

  std::vector<double> errors;
  for (int epoch = 0; epoch < hp.cocluster_epochs; ++epoch) {
    cocluster_averages(t, c, ku, ki);
    errors.assign(ku, 0.0);
    for (std::uint32_t u = 0; u < t.n_users(); ++u) {
      const auto rated = t.user_ratings(u);
      if (rated.empty()) continue;
      for (std::size_t uc = 0; uc < ku; ++uc) {
        double e = 0.0;
        for (const auto& [i, r] : rated) {
          const auto ic = c.of_item[i];
          const double est = c.cocluster_mean(uc, ic) + umean[u] - c.user_cluster_mean[uc] + imean[i] -
                             c.item_cluster_mean[ic];
          e += (r - est) * (r - est);
        }
        errors[uc] = e;
      }
      c.of_user[u] = static_cast<std::uint32_t>(std::min_element(errors.begin(), errors.end()) - errors.begin());
    }
    errors.assign(ki, 0.0);
    for (std::uint32_t i = 0; i < t.n_items(); ++i) {
      const auto raters = t.item_ratings(i);
      if (raters.empty()) continue;
      for (std::size_t ic = 0; ic < ki; ++ic) {
        double e = 0.0;
        for (const auto& [u, r] : raters) {
          const auto uc = c.of_user[u];
          const double est = c.cocluster_mean(uc, ic) + umean[u] - c.user_cluster_mean[uc] + imean[i] -
                             c.item_cluster_mean[ic];
          e += (r - est) * (r - est);
        }
        errors[ic] = e;
      }
      c.of_item[i] = static_cast<std::uint32_t>(std::min_element(errors.begin(), errors.end()) - errors.begin());
    }
  }
  cocluster_averages(t, c, ku, ki);
  return std::make_shared<CoClusteringModel>(hp.clamp, train.users(), train.items(), std::move(t), std::move(c));
}

}  // namespace

PredictorPtr fit(AlgorithmSpec algorithm, const HyperParams& hp, const Dataset& train, std::uint64_t seed) {
  hp.validate();
  if (train.empty()) throw DataError("cannot fit on an empty training set");
  if (algorithm.id == AlgorithmId::kEnsemble) {
    std::vector<PredictorPtr> comps;
    comps.reserve(kComponentAlgorithms.size());
    for (const AlgorithmSpec& c : kComponentAlgorithms) comps.push_back(fit(c, hp, train, seed));
    return make_ensemble(std::move(comps), hp.clamp);
  }

  Rng rng(algorithm_seed(algorithm, seed));
  TrainingData t(train);
  switch (algorithm.id) {
    case AlgorithmId::kNegativeControl:
      return std::make_shared<NegativeControlModel>(hp.clamp, train.users(), train.items(), rng.next_u64());
    case AlgorithmId::kRandomNormal:
      return std::make_shared<RandomNormalModel>(hp.clamp, train.users(), train.items(), t.global_mean(),
                                                 t.global_std(), rng.next_u64());
    case AlgorithmId::kSvd:
      return fit_svd(hp, train, std::move(t), rng);
    case AlgorithmId::kSvdpp:
      return fit_svdpp(hp, train, std::move(t), rng);
    case AlgorithmId::kCoClustering:
      return fit_coclustering(hp, train, std::move(t), rng);
    default:
      break;
  }

  Biases biases = fit_baseline_als(t, hp.baseline_epochs, hp.baseline_reg_user, hp.baseline_reg_item);
  switch (algorithm.id) {
    case AlgorithmId::kBaseline:
      return std::make_shared<BaselineModel>(hp.clamp, train.users(), train.items(), std::move(t), std::move(biases));
    case AlgorithmId::kNmf:
      return fit_nmf(hp, train, std::move(t), std::move(biases), rng);
    case AlgorithmId::kSlopeOne:
      return fit_slope_one(hp, train, std::move(t), std::move(biases));
    default: {
      Matrix<double> sim = similarity_matrix(hp.similarity, algorithm.orientation, t);
      return std::make_shared<KnnModel>(algorithm, hp.clamp, train.users(), train.items(), std::move(t),
                                        std::move(biases), std::move(sim), hp.k_neighbors, hp.min_k);
    }
  }
}

}  // namespace rp
