#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "botgraph/features.hpp"

namespace botgraph {

/// Cosine similarity with 64-bit accumulation, clamped to [-1, 1].
/// Returns 0 when either vector has zero norm. Throws DimensionError on
/// length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Undirected, self-loop-free graph in CSR form. Each edge is stored in both
/// endpoint lists; lists are sorted ascending. Immutable after construction.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;
  /// `edges` must hold pairs with i < j, no duplicates (any order).
  SimilarityGraph(std::size_t n, double tau, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges);

  std::size_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return neighbors_.size() / 2; }
  double tau() const { return tau_; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  bool has_edge(std::size_t i, std::size_t j) const;

  /// Every edge once as (i, j) with i < j, ascending.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_list() const;

  /// Dense 0/1 adjacency, for debugging and small-graph inspection.
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> dense() const;

  bool operator==(const SimilarityGraph&) const = default;

 private:
  std::size_t n_ = 0;
  double tau_ = 0.0;
  std::vector<std::size_t> offsets_ = {0};
  std::vector<std::uint32_t> neighbors_;
};

/// Connects i < j whenever sim(F_i, F_j) >= tau. Rows are split across
/// `threads` workers (0 = hardware concurrency); the result does not depend
/// on the thread count. Throws DataError on non-finite rows and ConfigError
/// on tau outside [-1, 1].
SimilarityGraph build_graph(const RowMatrix& features, double tau, unsigned threads = 0);
inline SimilarityGraph build_graph(const FusedMatrix& fm, double tau, unsigned threads = 0) {
  return build_graph(fm.data, tau, threads);
}

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edge_count = 0;
  double density = 0.0;
  std::size_t isolated_nodes = 0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> node count
  std::size_t components = 0;

  bool operator==(const GraphStats&) const = default;
};

GraphStats graph_stats(const SimilarityGraph& g);

struct SweepPoint {
  double tau = 0.0;
  GraphStats stats;
};

/// Graph statistics for each tau from a single pass over all pairs.
std::vector<SweepPoint> sweep_threshold(const RowMatrix& features, std::span<const double> taus,
                                        unsigned threads = 0);

/// Text edge list: first line N, second line tau, then "i j" per edge (i < j,
/// ascending).
void write_edge_list(const SimilarityGraph& g, const std::filesystem::path& path);
SimilarityGraph read_edge_list(const std::filesystem::path& path);

}  // namespace botgraph
