#include <cmath>
#include <numbers>

#include "rp/recsys.hpp"
#include "rp/rng.hpp"

namespace rp {

namespace {

constexpr std::uint32_t kUnknownIndex = 0xffffffffu;

std::uint64_t cell_hash(std::uint64_t seed, std::optional<std::uint32_t> u,
                        std::optional<std::uint32_t> i) {
  const std::uint64_t uu = u.value_or(kUnknownIndex);
  const std::uint64_t ii = i.value_or(kUnknownIndex);
  return splitmix64(seed ^ splitmix64((uu << 32) | ii));
}

}  // namespace

NegativeControlModel::NegativeControlModel(bool clamp, std::vector<std::string> users,
                                           std::vector<std::string> items, std::uint64_t seed)
    : Predictor({AlgorithmId::kNegativeControl}, clamp, std::move(users), std::move(items)), seed_(seed) {}

double NegativeControlModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  return 1.0 + static_cast<double>(cell_hash(seed_, u, i) % 5);
}

void NegativeControlModel::save_params(ByteWriter& w) const { w.u64(seed_); }

RandomNormalModel::RandomNormalModel(bool clamp, std::vector<std::string> users,
                                     std::vector<std::string> items, double mean, double stddev,
                                     std::uint64_t seed)
    : Predictor({AlgorithmId::kRandomNormal}, clamp, std::move(users), std::move(items)),
      mean_(mean),
      stddev_(stddev),
      seed_(seed) {}

double RandomNormalModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  const std::uint64_t h1 = cell_hash(seed_, u, i);
  const std::uint64_t h2 = splitmix64(h1);
  // (0, 1] keeps the log finite.
  const double u1 = 1.0 - to_unit(h1);
  const double u2 = to_unit(h2);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean_ + stddev_ * z;
}

void RandomNormalModel::save_params(ByteWriter& w) const {
  w.f64(mean_);
  w.f64(stddev_);
  w.u64(seed_);
}

BaselineModel::BaselineModel(bool clamp, std::vector<std::string> users, std::vector<std::string> items,
                             TrainingData data, Biases biases)
    : Predictor({AlgorithmId::kBaseline}, clamp, std::move(users), std::move(items)),
      data_(std::move(data)),
      biases_(std::move(biases)) {}

double BaselineModel::estimate(std::optional<std::uint32_t> u, std::optional<std::uint32_t> i) const {
  return biases_.estimate(data_, u, i);
}

void BaselineModel::save_params(ByteWriter& w) const {
  data_.save(w);
  w.f64(biases_.mu);
  w.array(biases_.user);
  w.array(biases_.item);
}

}  // namespace rp
