#include "rp/cpm.hpp"

#include <cstdio>
#include <numeric>

#include "rp/binary_io.hpp"

namespace rp {

namespace {

constexpr std::string_view kMagic = "RPCM";

std::string sci(double v) {
  char buf[32];
  int exp = 0;
  double mant = v;
  while (mant >= 10.0) {
    mant /= 10.0;
    ++exp;
  }
  while (mant > 0.0 && mant < 1.0) {
    mant *= 10.0;
    --exp;
  }
  std::snprintf(buf, sizeof buf, "%.1fe%d", mant, exp);
  return buf;
}

std::uint8_t tag_of(AlgorithmSpec a) {
  return static_cast<std::uint8_t>(static_cast<std::uint8_t>(a.id) |
                                   (a.orientation == Orientation::kItem ? 0x80 : 0x00));
}

}  // namespace

void check_cpm_budget(std::uint64_t n, std::uint64_t m, std::uint64_t budget_bytes) {
  const std::uint64_t bytes = projected_cpm_bytes(n, m);
  if (bytes > budget_bytes) {
    throw BudgetError("projected size " + sci(static_cast<double>(bytes)) + " bytes exceeds budget of " +
                          sci(static_cast<double>(budget_bytes)) + " bytes (" + std::to_string(n) + " x " +
                          std::to_string(m) + " cells at 4 B)",
                      bytes);
  }
}

Cpm generate_cpm(const Predictor& predictor, std::span<const std::uint32_t> users,
                 std::span<const std::uint32_t> items, std::uint64_t seed, const CpmOptions& opts) {
  if (users.empty() || items.empty()) throw UsageError("CPM needs at least one user and one item");
  check_cpm_budget(users.size(), items.size(), opts.budget_bytes);
  for (auto u : users) {
    if (u >= predictor.n_users()) throw UsageError("CPM user index out of range");
  }
  for (auto i : items) {
    if (i >= predictor.n_items()) throw UsageError("CPM item index out of range");
  }
  Cpm cpm;
  cpm.algorithm = predictor.algorithm();
  cpm.seed = seed;
  for (auto u : users) cpm.user_ids.push_back(predictor.user_ids()[u]);
  for (auto i : items) cpm.item_ids.push_back(predictor.item_ids()[i]);
  cpm.scores = Matrix<float>(users.size(), items.size());

  const auto fill_row = [&](std::size_t r) {
    auto out = cpm.scores.row(r);
    for (std::size_t c = 0; c < items.size(); ++c) out[c] = static_cast<float>(predictor.predict(users[r], items[c]));
  };
  const auto n_rows = static_cast<std::int64_t>(users.size());
  if (opts.exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t r = 0; r < n_rows; ++r) fill_row(static_cast<std::size_t>(r));
  } else {
    for (std::int64_t r = 0; r < n_rows; ++r) fill_row(static_cast<std::size_t>(r));
  }
  return cpm;
}

Cpm generate_cpm(const Predictor& predictor, std::uint64_t seed, const CpmOptions& opts) {
  check_cpm_budget(predictor.n_users(), predictor.n_items(), opts.budget_bytes);
  std::vector<std::uint32_t> users(predictor.n_users()), items(predictor.n_items());
  std::iota(users.begin(), users.end(), 0u);
  std::iota(items.begin(), items.end(), 0u);
  return generate_cpm(predictor, users, items, seed, opts);
}

std::vector<Cpm> generate_ensemble_cpms(const EnsembleModel& ensemble, std::uint64_t seed,
                                        const CpmOptions& opts) {
  const auto& comps = ensemble.components();
  const std::size_t n = ensemble.n_users(), m = ensemble.n_items();
  check_cpm_budget(n, m * (comps.size() + 1), opts.budget_bytes);
  std::vector<Cpm> out(comps.size() + 1);
  for (std::size_t k = 0; k <= comps.size(); ++k) {
    const Predictor& p = k < comps.size() ? *comps[k] : ensemble;
    out[k].algorithm = p.algorithm();
    out[k].seed = seed;
    out[k].user_ids = p.user_ids();
    out[k].item_ids = p.item_ids();
    out[k].scores = Matrix<float>(n, m);
  }
  const auto fill_row = [&](std::uint32_t u) {
    for (std::uint32_t i = 0; i < m; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < comps.size(); ++k) {
        const double v = comps[k]->predict(u, i);
        out[k].scores(u, i) = static_cast<float>(v);
        sum += v;
      }
      // same arithmetic as EnsembleModel::estimate followed by Predictor::predict
      double est = sum / static_cast<double>(comps.size());
      if (ensemble.clamped()) est = est < kMinRating ? kMinRating : (est > kMaxRating ? kMaxRating : est);
      out.back().scores(u, i) = static_cast<float>(est);
    }
  };
  const auto n_rows = static_cast<std::int64_t>(n);
  if (opts.exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t r = 0; r < n_rows; ++r) fill_row(static_cast<std::uint32_t>(r));
  } else {
    for (std::int64_t r = 0; r < n_rows; ++r) fill_row(static_cast<std::uint32_t>(r));
  }
  return out;
}

std::vector<float> slice_row(const Cpm& cpm, std::size_t u) {
  if (u >= cpm.n_users()) throw UsageError("CPM row index out of range");
  const auto row = cpm.scores.row(u);
  return {row.begin(), row.end()};
}

std::vector<float> slice_col(const Cpm& cpm, std::size_t i) {
  if (i >= cpm.n_items()) throw UsageError("CPM column index out of range");
  std::vector<float> col(cpm.n_users());
  for (std::size_t u = 0; u < cpm.n_users(); ++u) col[u] = cpm.scores(u, i);
  return col;
}

std::vector<std::uint8_t> serialize_cpm(const Cpm& cpm) {
  ByteWriter w;
  w.magic(kMagic);
  w.u16(kCpmVersion);
  w.u8(tag_of(cpm.algorithm));
  w.u64(cpm.seed);
  w.u64(cpm.n_users());
  w.u64(cpm.n_items());
  if (cpm.user_ids.size() != cpm.n_users() || cpm.item_ids.size() != cpm.n_items()) {
    throw UsageError("CPM id tables disagree with the score matrix");
  }
  for (const auto& s : cpm.user_ids) w.str(s);
  for (const auto& s : cpm.item_ids) w.str(s);
  w.bytes(cpm.scores.data().data(), cpm.scores.data().size() * sizeof(float));
  return w.take();
}

Cpm deserialize_cpm(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::uint16_t version = r.u16();
  if (version != kCpmVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch, "version mismatch: CPM file is v" +
                                                             std::to_string(version) + ", expected v" +
                                                             std::to_string(kCpmVersion));
  }
  const std::uint8_t tag = r.u8();
  const std::uint8_t id = tag & 0x7f;
  if (id > static_cast<std::uint8_t>(AlgorithmId::kEnsemble)) {
    throw FormatError(FormatErrorKind::kCorrupt, "unknown algorithm tag " + std::to_string(tag));
  }
  Cpm cpm;
  cpm.algorithm = {static_cast<AlgorithmId>(id), (tag & 0x80) ? Orientation::kItem : Orientation::kUser};
  cpm.seed = r.u64();
  const std::uint64_t n = r.u64(), m = r.u64();
  if (n > r.remaining() / 4 || m > r.remaining() / 4) {
    throw FormatError(FormatErrorKind::kTruncatedPayload, "truncated payload");
  }
  cpm.user_ids.resize(static_cast<std::size_t>(n));
  for (auto& s : cpm.user_ids) s = r.str();
  cpm.item_ids.resize(static_cast<std::size_t>(m));
  for (auto& s : cpm.item_ids) s = r.str();
  if (m != 0 && n > r.remaining() / 4 / m) throw FormatError(FormatErrorKind::kTruncatedPayload, "truncated payload");
  cpm.scores = Matrix<float>(static_cast<std::size_t>(n), static_cast<std::size_t>(m));
  r.bytes(cpm.scores.data().data(), cpm.scores.data().size() * sizeof(float));
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kCorrupt, "trailing bytes after CPM payload");
  return cpm;
}

void save_cpm(const Cpm& cpm, const std::string& path) { write_file_bytes(path, serialize_cpm(cpm)); }

Cpm load_cpm(const std::string& path) { return deserialize_cpm(read_file_bytes(path)); }

}  // namespace rp
