#include <cmath>

#include "rp/recsys.hpp"

namespace rp {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) s += a[f] * b[f];
  return s;
}

}  // namespace

SvdModel::SvdModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                   TrainingData data, double mu, std::vector<double> bu, std::vector<double> bi,
                   Matrix<double> p, Matrix<double> q)
    : Predictor({AlgorithmId::kSvd}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      mu_(mu),
      bu_(std::move(bu)),
      bi_(std::move(bi)),
      p_(std::move(p)),
      q_(std::move(q)) {}

double SvdModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  const bool ku = data_.user_known(u), ki = data_.item_known(i);
  double est = mu_;
  if (ku) est += bu_[*u];
  if (ki) est += bi_[*i];
  if (ku && ki) est += dot(q_.row(*i), p_.row(*u));
  return est;
}

double SvdModel::objective(const TrainingData& t, double reg) const {
  double loss = 0.0;
  for (const Rating& r : t.ratings()) {
    const double e = r.value - estimate(r.user, r.item);
    const double pn = dot(p_.row(r.user), p_.row(r.user));
    const double qn = dot(q_.row(r.item), q_.row(r.item));
    loss += e * e + reg * (bi_[r.item] * bi_[r.item] + bu_[r.user] * bu_[r.user] + qn + pn);
  }
  return loss;
}

void SvdModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(mu_);
  w.array(bu_);
  w.array(bi_);
  w.u64(p_.cols());
  w.array(p_.data());
  w.array(q_.data());
}

SvdppModel::SvdppModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                       TrainingData data, double mu, std::vector<double> bu, std::vector<double> bi,
                       Matrix<double> p, Matrix<double> q, Matrix<double> y)
    : Predictor({AlgorithmId::kSvdpp}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      mu_(mu),
      bu_(std::move(bu)),
      bi_(std::move(bi)),
      p_(std::move(p)),
      q_(std::move(q)),
      y_(std::move(y)) {
  const std::size_t nf = p_.cols();
  user_vec_ = Matrix<double>(p_.rows(), nf, 0.0);
  for (std::uint32_t u = 0; u < p_.rows(); ++u) {
    const auto rated = data_.user_ratings(u);
    auto out = user_vec_.row(u);
    std::copy(p_.row(u).begin(), p_.row(u).end(), out.begin());
    if (rated.empty()) continue;
    const double norm = 1.0 / std::sqrt(static_cast<double>(rated.size()));
    for (const auto& [j, r] : rated) {
      const auto yj = y_.row(j);
      for (std::size_t f = 0; f < nf; ++f) out[f] += norm * yj[f];
    }
  }
}

double SvdppModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  const bool ku = data_.user_known(u), ki = data_.item_known(i);
  double est = mu_;
  if (ku) est += bu_[*u];
  if (ki) est += bi_[*i];
  if (ku && ki) est += dot(q_.row(*i), user_vec_.row(*u));
  return est;
}

void SvdppModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(mu_);
  w.array(bu_);
  w.array(bi_);
  w.u64(p_.cols());
  w.array(p_.data());
  w.array(q_.data());
  w.array(y_.data());
}

NmfModel::NmfModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                   TrainingData data, Biases fallback, Matrix<double> p, Matrix<double> q)
    : Predictor({AlgorithmId::kNmf}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      fallback_(std::move(fallback)),
      p_(std::move(p)),
      q_(std::move(q)) {}

double NmfModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  if (!data_.user_known(u) || !data_.item_known(i)) return fallback_.estimate(data_, u, i);
  return dot(q_.row(*i), p_.row(*u));
}

void NmfModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(fallback_.mu);
  w.array(fallback_.user);
  w.array(fallback_.item);
  w.u64(p_.cols());
  w.array(p_.data());
  w.array(q_.data());
}

}  // namespace rp
