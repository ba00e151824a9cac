#include "rp/recsys.hpp"

namespace rp {

namespace {

constexpr std::string_view kMagic = "RPRS";

void write_ids(ByteWriter& w, const std::vector<std::string>& ids) {
  w.u64(ids.size());
  for (const auto& s : ids) w.str(s);
}

std::vector<std::string> read_ids(ByteReader& r) {
  const std::uint64_t n = r.u64();
  // each id costs at least its 4-byte length prefix
  if (n > r.remaining() / 4) throw FormatError(FormatErrorKind::kTruncatedPayload, "truncated payload");
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (auto& s : ids) s = r.str();
  return ids;
}

Biases read_biases(ByteReader& r) {
  Biases b;
  b.mu = r.f64();
  b.user = r.array<double>();
  b.item = r.array<double>();
  return b;
}

template <typename T>
Matrix<T> read_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  std::vector<T> data = r.array<T>();
  if (data.size() != rows * cols) throw FormatError(FormatErrorKind::kCorrupt, "matrix block has the wrong size");
  Matrix<T> m(rows, cols);
  m.data() = std::move(data);
  return m;
}

void check_sizes(const TrainingData& t, std::size_t n, std::size_t m) {
  if (t.n_users() != n || t.n_items() != m) {
    throw FormatError(FormatErrorKind::kCorrupt, "training block disagrees with the id tables");
  }
}

void check_vec(const std::vector<double>& v, std::size_t n) {
  if (v.size() != n) throw FormatError(FormatErrorKind::kCorrupt, "parameter vector has the wrong size");
}

PredictorPtr read_body(ByteReader& r) {
  r.expect_magic(kMagic);
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "version mismatch: model file is v" + std::to_string(version) + ", expected v" +
                          std::to_string(kModelVersion));
  }
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(AlgorithmId::kEnsemble)) {
    throw FormatError(FormatErrorKind::kCorrupt, "unknown algorithm tag " + std::to_string(tag));
  }
  const std::uint8_t orient = r.u8();
  if (orient > 1) throw FormatError(FormatErrorKind::kCorrupt, "bad orientation byte");
  const AlgorithmSpec spec{static_cast<AlgorithmId>(tag), static_cast<Orientation>(orient)};
  const bool clamp = r.u8() != 0;
  auto users = read_ids(r);
  auto items = read_ids(r);
  const std::size_t n = users.size(), m = items.size();

  switch (spec.id) {
    case AlgorithmId::kNegativeControl:
      return std::make_shared<NegativeControlModel>(clamp, std::move(users), std::move(items), r.u64());
    case AlgorithmId::kRandomNormal: {
      const double mean = r.f64(), sd = r.f64();
      return std::make_shared<RandomNormalModel>(clamp, std::move(users), std::move(items), mean, sd, r.u64());
    }
    case AlgorithmId::kBaseline: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      Biases b = read_biases(r);
      check_vec(b.user, n);
      check_vec(b.item, m);
      return std::make_shared<BaselineModel>(clamp, std::move(users), std::move(items), std::move(t), std::move(b));
    }
    case AlgorithmId::kKnnBasic:
    case AlgorithmId::kKnnMeans:
    case AlgorithmId::kKnnZscore:
    case AlgorithmId::kKnnBaseline: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      Biases b = read_biases(r);
      check_vec(b.user, n);
      check_vec(b.item, m);
      const std::size_t side = r.u64();
      if (side != (spec.orientation == Orientation::kUser ? n : m)) {
        throw FormatError(FormatErrorKind::kCorrupt, "similarity table has the wrong size");
      }
      Matrix<double> sim = read_matrix<double>(r, side, side);
      const int k = r.i32(), min_k = r.i32();
      if (k < 1 || min_k < 1) throw FormatError(FormatErrorKind::kCorrupt, "bad neighbourhood sizes");
      return std::make_shared<KnnModel>(spec, clamp, std::move(users), std::move(items), std::move(t), std::move(b),
                                        std::move(sim), k, min_k);
    }
    case AlgorithmId::kSvd:
    case AlgorithmId::kSvdpp: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      const double mu = r.f64();
      auto bu = r.array<double>();
      auto bi = r.array<double>();
      check_vec(bu, n);
      check_vec(bi, m);
      const std::size_t nf = r.u64();
      Matrix<double> p = read_matrix<double>(r, n, nf);
      Matrix<double> q = read_matrix<double>(r, m, nf);
      if (spec.id == AlgorithmId::kSvd) {
        return std::make_shared<SvdModel>(clamp, std::move(users), std::move(items), std::move(t), mu, std::move(bu),
                                          std::move(bi), std::move(p), std::move(q));
      }
      Matrix<double> y = read_matrix<double>(r, m, nf);
      return std::make_shared<SvdppModel>(clamp, std::move(users), std::move(items), std::move(t), mu, std::move(bu),
                                          std::move(bi), std::move(p), std::move(q), std::move(y));
    }
    case AlgorithmId::kNmf: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      Biases b = read_biases(r);
      check_vec(b.user, n);
      check_vec(b.item, m);
      const std::size_t nf = r.u64();
      Matrix<double> p = read_matrix<double>(r, n, nf);
      Matrix<double> q = read_matrix<double>(r, m, nf);
      return std::make_shared<NmfModel>(clamp, std::move(users), std::move(items), std::move(t), std::move(b),
                                        std::move(p), std::move(q));
    }
    case AlgorithmId::kSlopeOne: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      Biases b = read_biases(r);
      check_vec(b.user, n);
      check_vec(b.item, m);
      Matrix<double> dev = read_matrix<double>(r, m, m);
      Matrix<std::uint32_t> freq = read_matrix<std::uint32_t>(r, m, m);
      return std::make_shared<SlopeOneModel>(clamp, std::move(users), std::move(items), std::move(t), std::move(b),
                                             std::move(dev), std::move(freq));
    }
    case AlgorithmId::kCoClustering: {
      TrainingData t = TrainingData::load(r);
      check_sizes(t, n, m);
      CoClusteringModel::Clusters c;
      c.of_user = r.array<std::uint32_t>();
      c.of_item = r.array<std::uint32_t>();
      c.user_cluster_mean = r.array<double>();
      c.item_cluster_mean = r.array<double>();
      const std::size_t ku = r.u64(), ki = r.u64();
      c.cocluster_mean = read_matrix<double>(r, ku, ki);
      if (c.of_user.size() != n || c.of_item.size() != m || c.user_cluster_mean.size() != ku ||
          c.item_cluster_mean.size() != ki) {
        throw FormatError(FormatErrorKind::kCorrupt, "cluster block has the wrong size");
      }
      for (auto x : c.of_user) {
        if (x >= ku) throw FormatError(FormatErrorKind::kCorrupt, "user cluster out of range");
      }
      for (auto x : c.of_item) {
        if (x >= ki) throw FormatError(FormatErrorKind::kCorrupt, "item cluster out of range");
      }
      return std::make_shared<CoClusteringModel>(clamp, std::move(users), std::move(items), std::move(t), std::move(c));
    }
    case AlgorithmId::kEnsemble: {
      const std::uint64_t count = r.u64();
      if (count == 0 || count > 64) throw FormatError(FormatErrorKind::kCorrupt, "bad ensemble size");
      std::vector<PredictorPtr> comps;
      for (std::uint64_t k = 0; k < count; ++k) {
        const auto blob = r.array<std::uint8_t>();
        comps.push_back(deserialize_predictor(blob));
      }
      try {
        return std::make_shared<EnsembleModel>(clamp, std::move(comps));
      } catch (const UsageError& e) {
        throw FormatError(FormatErrorKind::kCorrupt, e.what());
      }
    }
  }
  throw FormatError(FormatErrorKind::kCorrupt, "unhandled algorithm tag");
}

}  // namespace

std::vector<std::uint8_t> serialize_predictor(const Predictor& p) {
  ByteWriter w;
  w.magic(kMagic);
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(p.algorithm().id));
  w.u8(static_cast<std::uint8_t>(p.algorithm().orientation));
  w.u8(p.clamped() ? 1 : 0);
  write_ids(w, p.user_ids());
  write_ids(w, p.item_ids());
  p.save_params(w);
  return w.take();
}

PredictorPtr deserialize_predictor(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  PredictorPtr p = read_body(r);
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kCorrupt, "trailing bytes after model payload");
  return p;
}

void save_predictor(const Predictor& p, const std::string& path) {
  write_file_bytes(path, serialize_predictor(p));
}

PredictorPtr load_predictor(const std::string& path) { return deserialize_predictor(read_file_bytes(path)); }

}  // namespace rp
