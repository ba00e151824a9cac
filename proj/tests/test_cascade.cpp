#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rp/cascade.hpp"
#include "rp/common.hpp"
#include "test_support.hpp"

using namespace rp;

namespace {

double mse(std::span<const double> y, std::span<const double> p) {
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - p[k]) * (y[k] - p[k]);
  return s / static_cast<double>(y.size());
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double std_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

struct Problem {
  Matrix<double> x;
  std::vector<double> y;
};

Problem signal_problem(std::size_t n, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  Problem p{Matrix<double>(n, width), std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < width; ++f) p.x(r, f) = std::round(rng.uniform() * 50.0) / 10.0;
    p.y[r] = std::clamp(1.0 + p.x(r, 0) * 0.6 + (p.x(r, 1) > 2.5 ? 0.8 : 0.0) + rng.normal(0.0, 0.3), 1.0, 5.0);
  }
  return p;
}

GBTConfig quick() {
  GBTConfig c;
  c.n_trees = 30;
  c.max_depth = 3;
  c.min_samples_leaf = 5;
  return c;
}

}  // namespace

TEST_CASE("constant labels are reproduced exactly") {
  const Problem p = signal_problem(100, 3, 1);
  const std::vector<double> y(100, 3.5);
  const GBTModel m = gbt_fit(p.x, y, {});
  for (double v : gbt_predict(m, p.x)) CHECK(v == 3.5);
}

TEST_CASE("zero trees predict the label mean") {
  const Problem p = signal_problem(50, 4, 2);
  GBTConfig c;
  c.n_trees = 0;
  const GBTModel m = gbt_fit(p.x, p.y, c);
  CHECK(m.trees().empty());
  CHECK(m.base_prediction() == doctest::Approx(mean_of(p.y)));
  for (double v : gbt_predict(m, p.x)) CHECK(v == m.base_prediction());
  Matrix<double> other(3, 4, 100.0);
  for (double v : gbt_predict(m, other)) CHECK(v == m.base_prediction());
}

TEST_CASE("a perfectly informative feature is fitted closely") {
  Matrix<double> x(64, 1);
  std::vector<double> y(64);
  for (std::size_t r = 0; r < 64; ++r) {
    y[r] = 1.0 + 4.0 * static_cast<double>(r) / 63.0;
    x(r, 0) = y[r];
  }
  GBTConfig c;
  c.max_depth = 4;
  c.n_trees = 200;
  c.min_samples_leaf = 1;
  const GBTModel m = gbt_fit(x, y, c);
  CHECK(std::sqrt(mse(y, gbt_predict(m, x))) < 0.05);
}

TEST_CASE("training loss never increases with more trees") {
  for (std::uint64_t seed : {3u, 4u}) {
    const Problem p = signal_problem(400, 5, seed);
    for (double subsample : {1.0, 0.6}) {
      GBTConfig c = quick();
      c.subsample = subsample;
      c.seed = seed;
      const GBTModel m = gbt_fit(p.x, p.y, c);
      double prev = mse(p.y, gbt_predict(m.truncated(0), p.x));
      CHECK(prev == doctest::Approx(std::pow(std_of(p.y), 2)));
      for (std::size_t t = 1; t <= m.trees().size(); ++t) {
        const double cur = mse(p.y, gbt_predict(m.truncated(t), p.x));
        if (subsample == 1.0) CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
      CHECK(prev < mse(p.y, gbt_predict(m.truncated(0), p.x)));
    }
  }
}

TEST_CASE("row order does not change the model") {
  Problem p = signal_problem(300, 4, 5);
  const GBTModel a = gbt_fit(p.x, p.y, quick());
  Rng rng(6);
  std::vector<std::size_t> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span(perm));
  Problem q{Matrix<double>(300, 4), std::vector<double>(300)};
  for (std::size_t r = 0; r < 300; ++r) {
    for (std::size_t f = 0; f < 4; ++f) q.x(r, f) = p.x(perm[r], f);
    q.y[r] = p.y[perm[r]];
  }
  CHECK(gbt_fit(q.x, q.y, quick()) == a);
  GBTConfig sub = quick();
  sub.subsample = 0.5;
  CHECK(gbt_fit(q.x, q.y, sub) == gbt_fit(p.x, p.y, sub));
}

TEST_CASE("serial and parallel fits agree, fits are seeded") {
  const Problem p = signal_problem(500, 14, 7);
  GBTConfig c = quick();
  CHECK(gbt_fit(p.x, p.y, c, Exec::kSerial) == gbt_fit(p.x, p.y, c, Exec::kParallel));
  c.subsample = 0.7;
  c.seed = 1;
  const GBTModel a = gbt_fit(p.x, p.y, c);
  CHECK(gbt_fit(p.x, p.y, c) == a);
  c.seed = 2;
  CHECK_FALSE(gbt_fit(p.x, p.y, c) == a);
}

TEST_CASE("trees respect depth, leaf size, and feature width") {
  const Problem p = signal_problem(400, 6, 8);
  GBTConfig c = quick();
  c.min_samples_leaf = 25;
  const GBTModel m = gbt_fit(p.x, p.y, c);
  for (const auto& t : m.trees()) {
    REQUIRE_FALSE(t.nodes.empty());
    for (const auto& node : t.nodes) {
      if (node.feature >= 0) {
        CHECK(static_cast<std::size_t>(node.feature) < m.feature_width());
        CHECK(node.left > 0);
        CHECK(node.right > 0);
      }
    }
    std::vector<int> depth(t.nodes.size(), 0);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (t.nodes[k].feature >= 0) {
        depth[t.nodes[k].left] = depth[t.nodes[k].right] = depth[k] + 1;
      }
    }
    CHECK(*std::max_element(depth.begin(), depth.end()) <= c.max_depth);
  }
  std::vector<std::size_t> leaf_rows;
  for (const auto& t : m.trees()) {
    std::vector<std::size_t> count(t.nodes.size(), 0);
    for (std::size_t r = 0; r < p.x.rows(); ++r) {
      std::int32_t id = 0;
      while (t.nodes[id].feature >= 0) {
        id = p.x(r, t.nodes[id].feature) <= t.nodes[id].threshold ? t.nodes[id].left : t.nodes[id].right;
      }
      ++count[id];
    }
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (t.nodes[k].feature < 0 && t.nodes.size() > 1) CHECK(count[k] >= 25);
    }
  }
}

TEST_CASE("features independent of the labels revert predictions to the mean") {
  Rng rng(9);
  const std::size_t n = 6000, held = 2000;
  Matrix<double> x(n, 14), xh(held, 14);
  std::vector<double> y(n), yh(held);
  for (auto& v : x.data()) v = rng.uniform();
  for (auto& v : xh.data()) v = rng.uniform();
  for (auto& v : y) v = static_cast<double>(1 + rng.below(5));
  for (auto& v : yh) v = static_cast<double>(1 + rng.below(5));
  const GBTModel m = gbt_fit(x, y, {});
  const auto pred = gbt_predict(m, xh);
  const double se = std_of(y) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean_of(pred) - mean_of(y)) <= 3.0 * se + std::abs(mean_of(yh) - mean_of(y)));
  CHECK(std_of(pred) < 0.25 * std_of(y));
}

TEST_CASE("prediction errors and clamping") {
  const Problem p = signal_problem(80, 4, 10);
  const GBTModel m = gbt_fit(p.x, p.y, quick());
  Matrix<double> wrong(2, 5);
  CHECK_THROWS_AS(gbt_predict(m, wrong), DataError);
  Matrix<double> nan(1, 4, 0.0);
  nan(0, 2) = std::nan("");
  CHECK_THROWS_AS(gbt_predict(m, nan), DataError);
  for (double v : gbt_predict(m, p.x, true)) {
    CHECK(v >= 1.0);
    CHECK(v <= 5.0);
  }
}

TEST_CASE("fit input validation") {
  const Problem p = signal_problem(20, 3, 11);
  CHECK_THROWS_AS(gbt_fit(Matrix<double>(), {}, {}), DataError);
  CHECK_THROWS_AS(gbt_fit(p.x, std::span(p.y.data(), 19), {}), DataError);
  Matrix<double> bad = p.x;
  bad(3, 1) = INFINITY;
  CHECK_THROWS_AS(gbt_fit(bad, p.y, {}), DataError);
  GBTConfig c;
  c.subsample = 0.0;
  CHECK_THROWS_AS(gbt_fit(p.x, p.y, c), UsageError);
  c = {};
  c.max_depth = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.n_trees = -1;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("cascade files round-trip and damaged ones raise typed errors") {
  const Problem p = signal_problem(200, 6, 12);
  const GBTModel m = gbt_fit(p.x, p.y, quick());
  test::TempDir dir("gbt");
  save_gbt(m, dir.file("m.bin"));
  const GBTModel back = load_gbt(dir.file("m.bin"));
  CHECK(back == m);
  CHECK(gbt_predict(back, p.x) == gbt_predict(m, p.x));

  const auto bytes = serialize_gbt(m);
  auto bad = bytes;
  bad[0] = 'Z';
  try {
    deserialize_gbt(bad);
    FAIL("bad magic accepted");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatErrorKind::kBadMagic);
  }
  bad = bytes;
  bad[4] = 3;
  try {
    deserialize_gbt(bad);
    FAIL("wrong version accepted");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatErrorKind::kVersionMismatch);
  }
  for (std::size_t len = 6; len < bytes.size(); len += 97) {
    CHECK_THROWS_AS(deserialize_gbt(std::span(bytes.data(), len)), FormatError);
  }
  CHECK_THROWS_AS(deserialize_gbt(std::span(bytes.data(), bytes.size() - 1)), FormatError);
  Rng rng(13);
  for (int k = 0; k < 400; ++k) {
    auto fuzz = bytes;
    for (int f = 0; f < 3; ++f) fuzz[rng.below(fuzz.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      const GBTModel g = deserialize_gbt(fuzz);
      if (g.feature_width() <= 4096) {
        Matrix<double> probe(4, g.feature_width(), 0.5);
        (void)gbt_predict(g, probe);
      }
    } catch (const DataError&) {
    }
  }
}
