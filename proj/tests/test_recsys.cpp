#include <doctest.h>

#include <cmath>

#include "rp/common.hpp"
#include "rp/cpm.hpp"
#include "rp/recsys.hpp"
#include "test_support.hpp"

using namespace rp;

namespace {

Dataset toy(std::vector<std::string> users, std::vector<std::string> items, std::vector<Rating> r) {
  return Dataset(std::move(users), std::move(items), std::move(r));
}

HyperParams small_hp() {
  HyperParams hp;
  hp.n_factors = 8;
  hp.n_epochs = 10;
  hp.nmf_factors = 4;
  hp.nmf_epochs = 10;
  return hp;
}

HyperParams unclamped(HyperParams hp = {}) {
  hp.clamp = false;
  return hp;
}

}  // namespace

TEST_CASE("algorithm names round-trip") {
  const auto all = all_algorithms();
  CHECK(all.size() == 13);
  CHECK(all.back().id == AlgorithmId::kEnsemble);
  for (const auto& a : all) CHECK(parse_algorithm(to_string(a)) == a);
  const AlgorithmSpec item{AlgorithmId::kKnnMeans, Orientation::kItem};
  CHECK(to_string(item) == "knn_means_item");
  CHECK(parse_algorithm("knn_means_item") == item);
  CHECK_THROWS_AS(parse_algorithm("nope"), UsageError);
}

TEST_CASE("Baseline global mean and unknown fallbacks") {
  const Dataset d = toy({"u1", "u2"}, {"i1", "i2", "i3"}, {{0, 0, 4}, {0, 1, 2}});
  const auto p = fit({AlgorithmId::kBaseline}, {}, d, 1);
  const auto& b = dynamic_cast<const BaselineModel&>(*p).biases();
  CHECK(b.mu == 3.0);
  CHECK(p->predict(std::nullopt, std::nullopt) == 3.0);
  CHECK(p->predict(1, 2) == 3.0);
  CHECK(p->predict(0, 2) == doctest::Approx(3.0 + b.user[0]));
}

TEST_CASE("Baseline prediction decomposes into mu + b_u + b_i exactly") {
  const Dataset d = test::structured_dataset(30, 20, 0.4, 3);
  const auto p = fit({AlgorithmId::kBaseline}, unclamped(), d, 1);
  const auto& b = dynamic_cast<const BaselineModel&>(*p).biases();
  for (const auto& r : d.ratings()) CHECK(p->predict(r.user, r.item) - ((b.mu + b.user[r.user]) + b.item[r.item]) == 0.0);
}

TEST_CASE("RandomNormal fits the MLE mean and standard deviation") {
  const Dataset d = toy({"a", "b"}, {"x", "y"}, {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {1, 1, 5}});
  const auto p = fit({AlgorithmId::kRandomNormal}, {}, d, 9);
  const auto& m = dynamic_cast<const RandomNormalModel&>(*p);
  CHECK(m.mean() == doctest::Approx(2.75));
  CHECK(m.stddev() == doctest::Approx(std::sqrt((1.75 * 1.75 + 0.75 * 0.75 + 0.25 * 0.25 + 2.25 * 2.25) / 4.0)));
}

TEST_CASE("NegativeControl draws from {1..5} and is cell-stable") {
  const Dataset d = test::random_dataset(10, 10, 30, 2);
  const auto p = fit({AlgorithmId::kNegativeControl}, {}, d, 5);
  const auto q = fit({AlgorithmId::kNegativeControl}, {}, d, 5);
  std::set<double> values;
  for (std::uint32_t u = 0; u < 10; ++u) {
    for (std::uint32_t i = 0; i < 10; ++i) {
      const double s = p->predict(u, i);
      CHECK(s == std::round(s));
      CHECK(s == q->predict(u, i));
      CHECK(s == p->predict(u, i));
      values.insert(s);
    }
  }
  CHECK(values == std::set<double>{1, 2, 3, 4, 5});
}

TEST_CASE("similarity examples") {
  const Dataset d = toy({"a", "b", "c", "e"}, {"x", "y", "z"},
                        {{0, 0, 4}, {0, 1, 2}, {1, 0, 2}, {1, 1, 4}, {2, 0, 4}, {2, 1, 2}, {3, 2, 5}});
  const TrainingData t(d);
  CHECK(similarity(SimilarityKind::kMsd, Orientation::kUser, 0, 1, t) == doctest::Approx(0.2));
  CHECK(similarity(SimilarityKind::kMsd, Orientation::kUser, 0, 2, t) == 1.0);
  CHECK(similarity(SimilarityKind::kMsd, Orientation::kUser, 0, 3, t) == 0.0);
  const Matrix<double> s = similarity_matrix(SimilarityKind::kMsd, Orientation::kUser, t);
  CHECK(s(0, 1) == similarity(SimilarityKind::kMsd, Orientation::kUser, 0, 1, t));
  CHECK(s(1, 0) == s(0, 1));
}

TEST_CASE("similarity_matrix serial and parallel agree") {
  const Dataset d = test::random_dataset(40, 30, 400, 12);
  const TrainingData t(d);
  for (auto kind : {SimilarityKind::kMsd, SimilarityKind::kCosine}) {
    for (auto side : {Orientation::kUser, Orientation::kItem}) {
      CHECK(similarity_matrix(kind, side, t, Exec::kSerial) == similarity_matrix(kind, side, t, Exec::kParallel));
    }
  }
}

TEST_CASE("KnnBasic with a single neighbour returns that neighbour's rating") {
  const Dataset d = toy({"u", "v"}, {"x", "i"}, {{0, 0, 3}, {1, 0, 3}, {1, 1, 5}});
  const auto p = fit({AlgorithmId::kKnnBasic}, {}, d, 1);
  CHECK(p->predict(0, 1) == 5.0);
  const auto q = fit({AlgorithmId::kKnnBasic, Orientation::kItem}, {}, d, 1);
  CHECK(std::isfinite(q->predict(0, 1)));
}

TEST_CASE("KnnMeans with zero neighbour deviations predicts the user mean") {
  const Dataset d = toy({"u", "v", "w"}, {"x", "y", "i"},
                        {{0, 0, 2}, {0, 1, 4}, {1, 0, 3}, {1, 2, 3}, {2, 1, 4}, {2, 2, 4}});
  const auto p = fit({AlgorithmId::kKnnMeans}, unclamped(), d, 1);
  CHECK(p->predict(0, 2) == doctest::Approx(3.0));
}

TEST_CASE("KnnZscore is invariant to z-score preserving rescaling of a neighbour") {
  const std::vector<std::string> users = {"u", "v", "w"}, items = {"x", "y", "i"};
  const std::vector<Rating> base = {{0, 0, 2}, {0, 1, 4}, {1, 0, 1}, {1, 1, 2}, {1, 2, 2},
                                    {2, 1, 3}, {2, 2, 5}, {2, 0, 4}};
  std::vector<Rating> scaled = base;
  for (auto& r : scaled) {
    if (r.user == 1) r.value = 2.0 * r.value - 1.0;
  }
  Matrix<double> sim(3, 3, 0.0);
  sim(0, 1) = sim(1, 0) = 0.7;
  sim(0, 2) = sim(2, 0) = 0.3;
  sim(1, 2) = sim(2, 1) = 0.5;
  const AlgorithmSpec spec{AlgorithmId::kKnnZscore};
  const KnnModel a(spec, false, users, items, TrainingData(3, 3, base), Biases{}, sim, 40, 1);
  const KnnModel b(spec, false, users, items, TrainingData(3, 3, scaled), Biases{}, sim, 40, 1);
  CHECK(a.predict(0, 2) == doctest::Approx(b.predict(0, 2)).epsilon(1e-12));
}

TEST_CASE("SlopeOne toy example and antisymmetry") {
  const Dataset d = toy({"A", "B"}, {"i", "j"}, {{0, 0, 1.0}, {0, 1, 1.5}, {1, 0, 2.0}});
  const auto p = fit({AlgorithmId::kSlopeOne}, {}, d, 1);
  CHECK(p->predict(1, 1) == doctest::Approx(2.5));
  const auto& m = dynamic_cast<const SlopeOneModel&>(*p);
  CHECK(m.deviation(1, 0) == doctest::Approx(0.5));

  const Dataset r = test::random_dataset(25, 15, 150, 4, false);
  const auto q = fit({AlgorithmId::kSlopeOne}, {}, r, 1);
  const auto& s = dynamic_cast<const SlopeOneModel&>(*q);
  for (std::uint32_t i = 0; i < 15; ++i) {
    for (std::uint32_t j = 0; j < 15; ++j) CHECK(s.deviation(i, j) == -s.deviation(j, i));
  }
}

TEST_CASE("SVD regularised objective after fitting is no worse than at initialisation") {
  const Dataset d = test::structured_dataset(60, 40, 0.3, 5);
  const TrainingData t(d);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    HyperParams hp = unclamped(small_hp());
    hp.n_epochs = 0;
    const auto init = fit({AlgorithmId::kSvd}, hp, d, seed);
    hp.n_epochs = 20;
    const auto done = fit({AlgorithmId::kSvd}, hp, d, seed);
    const double before = dynamic_cast<const SvdModel&>(*init).objective(t, hp.reg);
    const double after = dynamic_cast<const SvdModel&>(*done).objective(t, hp.reg);
    CHECK(after <= before);
  }
}

TEST_CASE("NMF factors stay strictly positive") {
  const Dataset d = test::structured_dataset(40, 30, 0.3, 6);
  const auto p = fit({AlgorithmId::kNmf}, unclamped(small_hp()), d, 3);
  const auto& m = dynamic_cast<const NmfModel&>(*p);
  for (double v : m.user_factors().data()) CHECK(v > 0.0);
  for (double v : m.item_factors().data()) CHECK(v > 0.0);
  for (std::uint32_t u = 0; u < 40; ++u) {
    for (std::uint32_t i = 0; i < 30; ++i) CHECK(p->estimate(u, i) >= 0.0);
  }
}

TEST_CASE("CoClustering assigns every user and item a cluster") {
  const Dataset d = test::structured_dataset(30, 24, 0.4, 8);
  const auto p = fit({AlgorithmId::kCoClustering}, {}, d, 3);
  const auto& c = dynamic_cast<const CoClusteringModel&>(*p).clusters();
  for (auto k : c.of_user) CHECK(k < 3u);
  for (auto k : c.of_item) CHECK(k < 3u);
  CHECK(p->predict(std::nullopt, std::nullopt) == doctest::Approx(TrainingData(d).global_mean()));
}

TEST_CASE("Ensemble equals the mean of its twelve components exactly") {
  const Dataset d = test::structured_dataset(30, 20, 0.4, 9);
  const HyperParams hp = small_hp();
  const auto p = fit({AlgorithmId::kEnsemble}, hp, d, 4);
  const auto& e = dynamic_cast<const EnsembleModel&>(*p);
  REQUIRE(e.components().size() == 12);
  for (std::size_t k = 0; k < 12; ++k) CHECK(e.components()[k]->algorithm() == kComponentAlgorithms[k]);
  for (std::uint32_t u = 0; u < 30; ++u) {
    for (std::uint32_t i = 0; i < 20; ++i) {
      double sum = 0.0;
      for (const auto& c : e.components()) sum += c->predict(u, i);
      CHECK(p->estimate(u, i) == sum / 12.0);
    }
  }
}

TEST_CASE("every predictor is finite, clamped, deterministic, and survives save/load") {
  const Dataset d = test::structured_dataset(30, 20, 0.35, 10);
  const HyperParams hp = small_hp();
  test::TempDir dir("models");
  for (const auto& spec : all_algorithms()) {
    for (auto orient : {Orientation::kUser, Orientation::kItem}) {
      if (orient == Orientation::kItem && !is_knn(spec.id)) continue;
      const AlgorithmSpec a{spec.id, orient};
      CAPTURE(to_string(a));
      const auto p = fit(a, hp, d, 21);
      const auto q = fit(a, hp, d, 21);
      const Cpm cp = generate_cpm(*p, 0);
      CHECK(cp == generate_cpm(*q, 0));
      for (float s : cp.scores.data()) {
        CHECK(std::isfinite(s));
        CHECK(s >= 1.0f);
        CHECK(s <= 5.0f);
      }
      CHECK(std::isfinite(p->predict(std::nullopt, 0)));
      CHECK(std::isfinite(p->predict(0, std::nullopt)));
      const std::string path = dir.file(to_string(a) + ".bin");
      save_predictor(*p, path);
      const auto back = load_predictor(path);
      CHECK(back->algorithm() == a);
      CHECK(serialize_predictor(*back) == serialize_predictor(*p));
      CHECK(generate_cpm(*back, 0) == cp);
    }
  }
}

TEST_CASE("damaged model files raise typed errors") {
  const Dataset d = test::structured_dataset(12, 10, 0.5, 11);
  const auto p = fit({AlgorithmId::kSvd}, small_hp(), d, 1);
  const auto bytes = serialize_predictor(*p);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_predictor(bad);
    FAIL("accepted bad magic");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatErrorKind::kBadMagic);
  }
  bad = bytes;
  bad[4] = 0x7f;
  try {
    deserialize_predictor(bad);
    FAIL("accepted wrong version");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatErrorKind::kVersionMismatch);
  }
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{7}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_predictor(std::span(bytes.data(), len)), FormatError);
  }
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    auto fuzz = bytes;
    fuzz[6 + rng.below(fuzz.size() - 6)] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      const auto m = deserialize_predictor(fuzz);
      (void)m->predict(0, 0);
    } catch (const DataError&) {
    }
  }
}

TEST_CASE("fit rejects an empty training set and bad hyperparameters") {
  const Dataset empty({"a"}, {"x"}, {});
  CHECK_THROWS_AS(fit({AlgorithmId::kBaseline}, {}, empty, 1), DataError);
  HyperParams hp;
  hp.k_neighbors = 0;
  CHECK_THROWS_AS(hp.validate(), UsageError);
}
