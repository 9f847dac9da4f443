#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "botgraph/ingest.hpp"

namespace botgraph {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Index of each profile count inside AuxCounts / the aux block of a fused row.
enum class AuxField : std::size_t { kFollowers = 0, kFriends = 1, kStatuses = 2, kFavorites = 3 };
inline constexpr std::array<const char*, 4> kAuxFieldNames = {"followers", "friends", "statuses",
                                                              "favorites"};

using AuxVector = std::array<double, 4>;

enum class PoolingMode { kMax, kAvg };
PoolingMode parse_pooling_mode(const std::string& s);
std::string to_string(PoolingMode mode);

enum class AuxNormalize { kLogZ, kNone };
AuxNormalize parse_aux_normalize(const std::string& s);
std::string to_string(AuxNormalize mode);

/// Per-column mean/std of log1p(count), fit on training rows.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
  bool operator==(const NormalizationStats&) const = default;
};

/// Throws MissingMetadata when the user has no profile counts.
AuxVector extract_auxiliary(const UserRecord& u);

/// Applies x -> (log(1+x) - mean) / std column-wise. With `stats` absent the
/// statistics are fit on `fit_rows` (all rows when empty); zero-variance
/// columns get std = 1.
std::pair<RowMatrix, NormalizationStats> normalize_auxiliary(
    const RowMatrix& raw, const std::optional<NormalizationStats>& stats,
    std::span<const std::size_t> fit_rows = {});

/// Elementwise max or mean over the rows of one user's tweet embeddings.
/// Throws EmptyInput when the matrix has no rows.
Eigen::VectorXd pool_tweets(const EmbeddingMatrix& m, PoolingMode mode);

/// [v ; a], or v unchanged when a is empty.
Eigen::VectorXd fuse(const Eigen::VectorXd& v, std::span<const double> aux);

/// Seeded hashed bag-of-tokens embedding, one L2-normalized row per tweet.
/// A stand-in for a language model so the pipeline can run without one.
EmbeddingMatrix fallback_featurize(std::span<const std::string> tweets, std::size_t dim,
                                   std::uint64_t seed);

/// Runs fallback_featurize over every user of a dataset.
EmbeddingStore fallback_embed_dataset(const Dataset& ds, std::size_t dim, std::uint64_t seed);

struct FusedMatrix {
  RowMatrix data;                     // N x (embedding_dim + aux_columns.size())
  std::size_t embedding_dim = 0;
  std::vector<std::size_t> aux_columns;  // retained AuxField indices, in order
  std::vector<std::string> user_ids;     // row k <-> dataset user k

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
  bool aux_present() const { return !aux_columns.empty(); }
};

struct FusionOptions {
  PoolingMode pooling = PoolingMode::kMax;
  AuxNormalize aux_normalize = AuxNormalize::kLogZ;
  bool use_aux = true;                      // ignored when the dataset has no aux
  std::vector<std::size_t> aux_columns = {0, 1, 2, 3};
};

/// Builds the N x (d+m) node feature matrix. Normalization statistics are
/// fit on `fit_rows` unless `stats` is given (inference). Errors carry the
/// offending user id.
std::pair<FusedMatrix, NormalizationStats> build_fused_matrix(
    const Dataset& ds, const EmbeddingStore& es, const FusionOptions& opts,
    const std::optional<NormalizationStats>& stats = std::nullopt,
    std::span<const std::size_t> fit_rows = {});

/// Binary "RGBF" cache of a fused matrix plus the stats used to build it.
void write_fused(const FusedMatrix& fm, const NormalizationStats& stats,
                 const std::filesystem::path& path);
std::pair<FusedMatrix, NormalizationStats> read_fused(const std::filesystem::path& path);

}  // namespace botgraph
