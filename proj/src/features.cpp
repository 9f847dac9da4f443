#include "botgraph/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "botgraph/errors.hpp"

namespace botgraph {

PoolingMode parse_pooling_mode(const std::string& s) {
  if (s == "max") return PoolingMode::kMax;
  if (s == "avg") return PoolingMode::kAvg;
  throw ConfigError("pooling must be 'max' or 'avg', got '" + s + "'");
}

std::string to_string(PoolingMode mode) { return mode == PoolingMode::kMax ? "max" : "avg"; }

AuxNormalize parse_aux_normalize(const std::string& s) {
  if (s == "log-z") return AuxNormalize::kLogZ;
  if (s == "none") return AuxNormalize::kNone;
  throw ConfigError("aux_normalize must be 'log-z' or 'none', got '" + s + "'");
}

std::string to_string(AuxNormalize mode) { return mode == AuxNormalize::kLogZ ? "log-z" : "none"; }

AuxVector extract_auxiliary(const UserRecord& u) {
  if (!u.aux) throw MissingMetadata("user " + u.user_id + " has no profile metadata");
  AuxVector a{};
  for (std::size_t i = 0; i < 4; ++i) a[i] = static_cast<double>((*u.aux)[i]);
  return a;
}

std::pair<RowMatrix, NormalizationStats> normalize_auxiliary(
    const RowMatrix& raw, const std::optional<NormalizationStats>& stats,
    std::span<const std::size_t> fit_rows) {
  const auto cols = static_cast<std::size_t>(raw.cols());
  RowMatrix logged = raw.unaryExpr([](double x) { return std::log1p(x); });

  NormalizationStats st;
  if (stats) {
    if (stats->mean.size() != cols || stats->std.size() != cols) {
      throw ModelMismatch("normalization stats cover " + std::to_string(stats->mean.size()) +
                          " columns, input has " + std::to_string(cols));
    }
    st = *stats;
  } else {
    std::vector<std::size_t> all;
    if (fit_rows.empty()) {
      all.resize(static_cast<std::size_t>(raw.rows()));
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      fit_rows = all;
    }
    const double n = static_cast<double>(fit_rows.size());
    st.mean.assign(cols, 0.0);
    st.std.assign(cols, 1.0);
    if (n > 0) {
      for (std::size_t c = 0; c < cols; ++c) {
        double sum = 0.0;
        for (auto r : fit_rows) sum += logged(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        const double mean = sum / n;
        double ss = 0.0;
        for (auto r : fit_rows) {
          const double d = logged(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - mean;
          ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        st.mean[c] = mean;
        st.std[c] = sd > 0.0 ? sd : 1.0;
      }
    }
  }
  for (Eigen::Index c = 0; c < logged.cols(); ++c) {
    const auto cu = static_cast<std::size_t>(c);
    logged.col(c) = (logged.col(c).array() - st.mean[cu]) / st.std[cu];
  }
  return {std::move(logged), std::move(st)};
}

Eigen::VectorXd pool_tweets(const EmbeddingMatrix& m, PoolingMode mode) {
  if (m.rows == 0) throw EmptyInput("cannot pool zero tweet embeddings");
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.cols));
  for (std::size_t c = 0; c < m.cols; ++c) out[static_cast<Eigen::Index>(c)] = m.values[c];
  for (std::size_t r = 1; r < m.rows; ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) {
      auto& o = out[static_cast<Eigen::Index>(c)];
      if (mode == PoolingMode::kMax) {
        o = std::max(o, static_cast<double>(row[c]));
      } else {
        o += row[c];
      }
    }
  }
  if (mode == PoolingMode::kAvg) out /= static_cast<double>(m.rows);
  return out;
}

Eigen::VectorXd fuse(const Eigen::VectorXd& v, std::span<const double> aux) {
  Eigen::VectorXd f(v.size() + static_cast<Eigen::Index>(aux.size()));
  f.head(v.size()) = v;
  for (std::size_t i = 0; i < aux.size(); ++i) f[v.size() + static_cast<Eigen::Index>(i)] = aux[i];
  return f;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t token_hash(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

bool is_token_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

EmbeddingMatrix fallback_featurize(std::span<const std::string> tweets, std::size_t dim,
                                   std::uint64_t seed) {
  if (dim == 0) throw DimensionError("fallback_featurize: dim must be >= 1");
  EmbeddingMatrix out;
  out.rows = tweets.size();
  out.cols = dim;
  out.values.assign(out.rows * dim, 0.0f);
  std::vector<double> acc(dim);
  std::string token;
  for (std::size_t t = 0; t < tweets.size(); ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    auto flush = [&] {
      if (token.empty()) return;
      const auto h = token_hash(token, seed);
      acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
      token.clear();
    };
    // Lowercasing plus splitting on non-alphanumerics subsumes whitespace collapse.
    for (unsigned char c : tweets[t]) {
      if (is_token_byte(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    if (norm == 0.0) continue;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < dim; ++c) {
      out.values[t * dim + c] = static_cast<float>(acc[c] / norm);
    }
  }
  return out;
}

EmbeddingStore fallback_embed_dataset(const Dataset& ds, std::size_t dim, std::uint64_t seed) {
  EmbeddingStore store(dim);
  for (const auto& u : ds.users) store.put(u.user_id, fallback_featurize(u.tweets, dim, seed));
  return store;
}

std::pair<FusedMatrix, NormalizationStats> build_fused_matrix(
    const Dataset& ds, const EmbeddingStore& es, const FusionOptions& opts,
    const std::optional<NormalizationStats>& stats, std::span<const std::size_t> fit_rows) {
  const std::size_t n = ds.size();
  const std::size_t d = es.dim();
  FusedMatrix fm;
  fm.embedding_dim = d;
  if (opts.use_aux && ds.has_aux) fm.aux_columns = opts.aux_columns;
  for (auto c : fm.aux_columns) {
    if (c >= 4) throw ConfigError("aux column index " + std::to_string(c) + " out of range");
  }
  const std::size_t m = fm.aux_columns.size();
  fm.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + m));
  fm.user_ids.reserve(n);

  RowMatrix raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < n; ++k) {
    const auto& u = ds.users[k];
    fm.user_ids.push_back(u.user_id);
    if (!es.contains(u.user_id)) {
      throw EmptyInput("user " + u.user_id + " has no entry in the embedding store");
    }
    Eigen::VectorXd pooled;
    try {
      pooled = pool_tweets(es.at(u.user_id), opts.pooling);
    } catch (const EmptyInput&) {
      throw EmptyInput("user " + u.user_id + " has zero tweet embeddings");
    }
    fm.data.row(static_cast<Eigen::Index>(k)).head(static_cast<Eigen::Index>(d)) = pooled.transpose();
    if (m > 0) {
      const auto a = extract_auxiliary(u);
      for (std::size_t j = 0; j < m; ++j) {
        raw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = a[fm.aux_columns[j]];
      }
    }
  }

  NormalizationStats st;
  if (m > 0) {
    RowMatrix aux = raw;
    if (opts.aux_normalize == AuxNormalize::kLogZ) {
      std::tie(aux, st) = normalize_auxiliary(raw, stats, fit_rows);
    }
    fm.data.rightCols(static_cast<Eigen::Index>(m)) = aux;
  }
  return {std::move(fm), std::move(st)};
}

namespace {
constexpr char kFusedMagic[4] = {'R', 'G', 'B', 'F'};
constexpr std::uint16_t kFusedVersion = 1;
}  // namespace

void write_fused(const FusedMatrix& fm, const NormalizationStats& stats,
                 const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kFusedMagic, 4);
  detail::put_le<std::uint16_t>(os, kFusedVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(fm.cols()));
  detail::put_le<std::uint64_t>(os, fm.rows());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(fm.embedding_dim));
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(fm.aux_columns.size()));
  for (auto c : fm.aux_columns) detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(c));
  detail::put_le<std::uint8_t>(os, stats.empty() ? 0 : 1);
  if (!stats.empty()) {
    for (double v : stats.mean) detail::put_f64(os, v);
    for (double v : stats.std) detail::put_f64(os, v);
  }
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    const auto& id = fm.user_ids[r];
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(id.size()));
    detail::put_bytes(os, id);
    for (Eigen::Index c = 0; c < fm.data.cols(); ++c) {
      detail::put_f64(os, fm.data(static_cast<Eigen::Index>(r), c));
    }
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

std::pair<FusedMatrix, NormalizationStats> read_fused(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  detail::LeReader r(is, path.string());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kFusedMagic, 4) != 0) throw FormatError(path.string() + ": bad magic");
  if (r.get<std::uint16_t>() != kFusedVersion) throw FormatError(path.string() + ": bad version");
  FusedMatrix fm;
  const auto cols = r.get<std::uint32_t>();
  const auto rows = r.get<std::uint64_t>();
  fm.embedding_dim = r.get<std::uint32_t>();
  const auto m = r.get<std::uint8_t>();
  for (std::uint8_t i = 0; i < m; ++i) fm.aux_columns.push_back(r.get<std::uint8_t>());
  if (fm.embedding_dim + m != cols) throw FormatError(path.string() + ": inconsistent widths");
  NormalizationStats st;
  if (r.get<std::uint8_t>() != 0) {
    st.mean.resize(m);
    st.std.resize(m);
    for (auto& v : st.mean) v = r.get_f64();
    for (auto& v : st.std) v = r.get_f64();
  }
  fm.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    fm.user_ids.push_back(r.get_bytes(r.get<std::uint16_t>()));
    for (std::uint32_t c = 0; c < cols; ++c) {
      fm.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = r.get_f64();
    }
  }
  return {std::move(fm), std::move(st)};
}

}  // namespace botgraph
