#include "botgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "botgraph/errors.hpp"

namespace botgraph {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

double similarity_from(double dot_ab, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(dot_ab / (norm_a * norm_b), -1.0, 1.0);
}

void check_tau(double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) {
    throw ConfigError("similarity threshold must lie in [-1, 1], got " + std::to_string(tau));
  }
}

unsigned resolve_threads(unsigned threads, std::size_t n) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
}

struct PairSim {
  std::uint32_t i, j;
  double sim;
};

/// Visits every pair i < j with its similarity, in (i, j) lexicographic order
/// per worker block; `keep` decides retention. Blocks are balanced by pair
/// count, and their outputs are concatenated in block order.
template <typename Keep>
std::vector<PairSim> all_pairs(const RowMatrix& f, unsigned threads, Keep keep) {
  const std::size_t n = static_cast<std::size_t>(f.rows());
  const std::size_t dim = static_cast<std::size_t>(f.cols());
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    if (!f.row(r).allFinite()) {
      throw DataError("feature row " + std::to_string(r) + " contains non-finite values");
    }
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = f.data() + i * dim;
    norms[i] = std::sqrt(dot(row, row, dim));
  }

  threads = resolve_threads(threads, n);
  // Row i owns n-1-i pairs; cut the row range so each block has ~equal work.
  std::vector<std::size_t> cuts = {0};
  const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n && cuts.size() < threads; ++i) {
    acc += static_cast<double>(n - 1 - i);
    if (acc >= total * static_cast<double>(cuts.size()) / threads) cuts.push_back(i + 1);
  }
  cuts.push_back(n);
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::vector<PairSim>> parts(cuts.size() - 1);
  auto work = [&](std::size_t part) {
    auto& out = parts[part];
    for (std::size_t i = cuts[part]; i < cuts[part + 1]; ++i) {
      const double* ri = f.data() + i * dim;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = similarity_from(dot(ri, f.data() + j * dim, dim), norms[i], norms[j]);
        if (keep(s)) out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), s});
      }
    }
  };
  if (parts.size() == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t p = 0; p < parts.size(); ++p) pool.emplace_back(work, p);
  }
  std::vector<PairSim> merged;
  std::size_t count = 0;
  for (const auto& p : parts) count += p.size();
  merged.reserve(count);
  for (auto& p : parts) merged.insert(merged.end(), p.begin(), p.end());
  return merged;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  const std::size_t n = a.size();
  return similarity_from(dot(a.data(), b.data(), n), std::sqrt(dot(a.data(), a.data(), n)),
                         std::sqrt(dot(b.data(), b.data(), n)));
}

SimilarityGraph::SimilarityGraph(std::size_t n, double tau,
                                 std::span<const std::pair<std::uint32_t, std::uint32_t>> edges)
    : n_(n), tau_(tau) {
  std::vector<std::size_t> deg(n, 0);
  for (auto [i, j] : edges) {
    if (i >= j || j >= n) throw DimensionError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") invalid");
    ++deg[i];
    ++deg[j];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
  neighbors_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (auto [i, j] : edges) {
    neighbors_[fill[i]++] = j;
    neighbors_[fill[j]++] = i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto b = neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
    auto e = neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
    std::sort(b, e);
    if (std::adjacent_find(b, e) != e) throw DimensionError("duplicate edge at node " + std::to_string(i));
  }
}

bool SimilarityGraph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) return false;
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), static_cast<std::uint32_t>(j));
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> SimilarityGraph::edge_list() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(num_edges());
  for (std::size_t i = 0; i < n_; ++i) {
    for (auto j : neighbors(i)) {
      if (j > i) out.emplace_back(static_cast<std::uint32_t>(i), j);
    }
  }
  return out;
}

Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> SimilarityGraph::dense() const {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> a =
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
          static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) {
    for (auto j : neighbors(i)) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
  }
  return a;
}

SimilarityGraph build_graph(const RowMatrix& features, double tau, unsigned threads) {
  check_tau(tau);
  if (features.rows() < 1) throw DimensionError("build_graph needs at least one row");
  auto pairs = all_pairs(features, threads, [tau](double s) { return s >= tau; });
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  edges.reserve(pairs.size());
  for (const auto& p : pairs) edges.emplace_back(p.i, p.j);
  return SimilarityGraph(static_cast<std::size_t>(features.rows()), tau, edges);
}

GraphStats graph_stats(const SimilarityGraph& g) {
  GraphStats s;
  const std::size_t n = g.num_nodes();
  s.nodes = n;
  s.edge_count = g.num_edges();
  s.density = n >= 2 ? 2.0 * static_cast<double>(s.edge_count) /
                           (static_cast<double>(n) * static_cast<double>(n - 1))
                     : 0.0;
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = g.degree(i);
    ++s.degree_histogram[d];
    if (d == 0) ++s.isolated_nodes;
    if (seen[i]) continue;
    ++s.components;
    seen[i] = 1;
    stack.push_back(i);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : g.neighbors(v)) {
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
  }
  return s;
}

std::vector<SweepPoint> sweep_threshold(const RowMatrix& features, std::span<const double> taus,
                                        unsigned threads) {
  if (taus.empty()) throw ConfigError("sweep_threshold needs at least one tau");
  for (double t : taus) check_tau(t);
  if (features.rows() < 1) throw DimensionError("sweep_threshold needs at least one row");
  const double lowest = *std::min_element(taus.begin(), taus.end());
  const auto pairs = all_pairs(features, threads, [lowest](double s) { return s >= lowest; });
  std::vector<SweepPoint> out;
  out.reserve(taus.size());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (double tau : taus) {
    edges.clear();
    for (const auto& p : pairs) {
      if (p.sim >= tau) edges.emplace_back(p.i, p.j);
    }
    SimilarityGraph g(static_cast<std::size_t>(features.rows()), tau, edges);
    out.push_back({tau, graph_stats(g)});
  }
  return out;
}

void write_edge_list(const SimilarityGraph& g, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", g.tau());
  os << g.num_nodes() << '\n' << buf << '\n';
  for (auto [i, j] : g.edge_list()) os << i << ' ' << j << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

SimilarityGraph read_edge_list(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::size_t n = 0;
  double tau = 0.0;
  if (!(is >> n >> tau)) throw FormatError(path.string() + ": expected node count and tau");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  long long i = 0, j = 0;
  while (is >> i >> j) {
    if (i < 0 || j < 0 || i >= j || static_cast<std::size_t>(j) >= n) {
      throw FormatError(path.string() + ": invalid edge " + std::to_string(i) + " " + std::to_string(j));
    }
    edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  }
  if (!is.eof()) throw FormatError(path.string() + ": trailing garbage");
  return SimilarityGraph(n, tau, edges);
}

}  // namespace botgraph
