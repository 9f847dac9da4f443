// Acceptance suite: one PASS/FAIL (or SKIP) line per criterion; exit status
// is nonzero iff any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "botgraph/errors.hpp"
#include "botgraph/eval.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace botgraph;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  enum { kPass, kFail, kSkip } status;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- graph

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Literal double loop: for i, for j > i, connect when cos(f_i, f_j) >= tau.
std::set<Edge> double_loop_oracle(const RowMatrix& f, double tau, std::vector<double>* sims) {
  std::set<Edge> out;
  const Eigen::Index n = f.rows(), d = f.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double ab = 0, aa = 0, bb = 0;
      for (Eigen::Index k = 0; k < d; ++k) ab += f(i, k) * f(j, k);
      for (Eigen::Index k = 0; k < d; ++k) aa += f(i, k) * f(i, k);
      for (Eigen::Index k = 0; k < d; ++k) bb += f(j, k) * f(j, k);
      const double na = std::sqrt(aa), nb = std::sqrt(bb);
      double s = (na == 0 || nb == 0) ? 0.0 : ab / (na * nb);
      s = std::min(1.0, std::max(-1.0, s));
      if (sims) sims->push_back(s);
      if (s >= tau) out.emplace(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  return out;
}

/// Clustered rows so that similarities spread over a useful range.
RowMatrix clustered_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const std::size_t k = 5;
  RowMatrix centers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = normal(rng);
  RowMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    f.row(i) = centers.row(static_cast<Eigen::Index>(rng() % k));
    for (Eigen::Index c = 0; c < f.cols(); ++c) f(i, c) += 0.6 * normal(rng);
  }
  return f;
}

Outcome graph_oracle() {
  double build_time = 0.0;
  std::size_t total_edges = 0;
  for (int m = 0; m < 20; ++m) {
    const std::size_t dim = m % 2 == 0 ? 8 : 772;
    const RowMatrix f = clustered_matrix(200, dim, 1000 + static_cast<std::uint64_t>(m));
    std::vector<double> sims;
    double_loop_oracle(f, 2.0, &sims);
    std::sort(sims.begin(), sims.end());
    // Thresholds sit exactly on an observed similarity so the >= tie matters.
    for (double q : {0.5, 0.9, 0.99}) {
      const double tau = sims[static_cast<std::size_t>(q * static_cast<double>(sims.size() - 1))];
      const auto expected = double_loop_oracle(f, tau, nullptr);
      const auto t0 = Clock::now();
      const SimilarityGraph g = build_graph(f, tau);
      build_time += seconds_since(t0);
      const auto el = g.edge_list();
      const std::set<Edge> got(el.begin(), el.end());
      if (got != expected) {
        return fail(fmt("matrix %d (dim %zu, tau %.17g): %zu edges vs oracle %zu", m, dim, tau,
                        got.size(), expected.size()));
      }
      total_edges += got.size();
    }
  }
  const std::string d = fmt("20 matrices x 3 thresholds, %zu edges matched, build time %.3f s", total_edges,
                            build_time);
  return build_time < 5.0 ? pass(d) : fail(d + " (limit 5 s)");
}

// ---------------------------------------------------------------- gradients

Outcome gradients() {
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = testing_support::make_grad_instance(seed);
    const auto r = testing_support::check_gradients(inst, 1e-4, 1e-4, 1e-8);
    checked += r.checked;
    worst = std::max(worst, r.worst_rel_error);
    if (r.failures > 0) {
      return fail(fmt("instance %llu: %zu coordinates exceed 1e-4 (worst %.3g at %s)",
                      static_cast<unsigned long long>(seed), r.failures, r.worst_rel_error,
                      r.worst_where.c_str()));
    }
  }
  return pass(fmt("5 instances, %zu coordinates, worst relative error %.3g", checked, worst));
}

// ---------------------------------------------------------------- learning

struct LearningRun {
  double accuracy;
  std::string history;
  double seconds;
};

LearningRun learn_once(std::uint64_t seed) {
  const auto t0 = Clock::now();
  // Centers 5 sigma along two orthogonal axes: separation 5*sqrt(2) ~ 7.07 sigma.
  const auto [x, y] = testing_support::two_clusters(500, 16, 5.0, seed);
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 200;
  cfg.graph_threads = 1;
  const PreparedData data = prepare_from_features(x, y, cfg);
  const Model m = fit(data, cfg);
  const double acc = evaluate_test_split(m, data).metrics.accuracy;
  return {acc, history_csv(m), seconds_since(t0)};
}

Outcome end_to_end() {
  const LearningRun a = learn_once(42);
  const LearningRun b = learn_once(42);
  const std::string d = fmt("test accuracy %.4f, %.2f s per run", a.accuracy, a.seconds);
  if (a.history != b.history || a.accuracy != b.accuracy) return fail(d + ", runs differ");
  if (a.accuracy < 0.98) return fail(d + " (need >= 0.98)");
  if (a.seconds >= 60.0) return fail(d + " (limit 60 s)");
  return pass(d + ", repeat run identical");
}

// ---------------------------------------------------------------- metrics

Outcome metric_identities() {
  const Metrics m = metrics({50, 5, 10, 35});
  const double want[4] = {0.85, 0.9091, 0.8333, 0.8696};
  const double got[4] = {m.accuracy, m.precision, m.recall, m.f1};
  for (int i = 0; i < 4; ++i) {
    if (std::abs(got[i] - want[i]) > 1e-4) {
      return fail(fmt("metric %d: %.6f vs %.4f", i, got[i], want[i]));
    }
  }
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties.
      s[i] = static_cast<double>(rng() % 25) / 25.0;
      y[i] = static_cast<Label>(rng() % 2);
    }
    y[0] = Label::kBot;
    y[1] = Label::kHuman;
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] != Label::kBot || y[j] != Label::kHuman) continue;
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    const double diff = std::abs(roc_auc(s, y).auc - wins / pairs);
    worst = std::max(worst, diff);
    if (diff > 1e-9) return fail(fmt("set %d (N=%zu): AUC differs from pair counting by %.3g", t, n, diff));
  }
  return pass(fmt("(%.4f, %.4f, %.4f, %.4f); 50 AUC sets, max deviation %.3g", m.accuracy, m.precision,
                  m.recall, m.f1, worst));
}

// ---------------------------------------------------------------- sweep

Outcome sweep_shape(const std::filesystem::path& dir) {
  const std::vector<double> taus = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99};
  const auto [x, y] = testing_support::two_clusters(500, 16, 5.0, 42);
  TrainConfig cfg;
  cfg.graph_threads = 1;
  const auto rows = sweep_accuracy(prepare_from_features(x, y, cfg), cfg, taus);
  const auto csv = dir / "sweep.csv";
  write_sweep_csv(rows, csv);

  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  if (line != "tau,edges,density,accuracy") return fail("unexpected header '" + line + "'");
  std::vector<std::pair<double, std::size_t>> parsed;
  std::string acc_list;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string tau, edges, density, acc;
    std::getline(ss, tau, ',');
    std::getline(ss, edges, ',');
    std::getline(ss, density, ',');
    std::getline(ss, acc, ',');
    if (acc.empty() || !std::isfinite(std::stod(acc))) return fail("row without accuracy: " + line);
    parsed.emplace_back(std::stod(tau), std::stoull(edges));
    acc_list += fmt("%s%.2f", acc_list.empty() ? "" : " ", std::stod(acc));
  }
  if (parsed.size() != taus.size()) return fail(fmt("%zu rows for %zu thresholds", parsed.size(), taus.size()));
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i].first != taus[i]) return fail(fmt("row %zu has tau %.17g", i, parsed[i].first));
    if (i > 0 && parsed[i].second > parsed[i - 1].second) {
      return fail(fmt("edges rise from %zu to %zu at tau %.2f", parsed[i - 1].second, parsed[i].second,
                      taus[i]));
    }
  }
  return pass(fmt("edges %zu -> %zu over 11 thresholds; accuracies %s", parsed.front().second,
                  parsed.back().second, acc_list.c_str()));
}

// ---------------------------------------------------------------- ablation

Outcome ablation_consistency() {
  const Dataset ds = testing_support::synthetic_users(200, 7);
  const EmbeddingStore es = fallback_embed_dataset(ds, 32, 0);
  TrainConfig cfg;
  cfg.graph_threads = 1;
  const auto rows = ablate(ds, es, cfg);
  const auto standalone = evaluate_test_split(train(ds, es, cfg), ds, es);
  const auto full = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.name == "full"; });
  const auto nosage =
      std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.name == "without_graphsage"; });
  if (full == rows.end() || nosage == rows.end()) return fail("missing full or without_graphsage row");
  if (!(full->metrics == standalone.metrics) || !(full->confusion == standalone.confusion)) {
    return fail(fmt("full row accuracy %.17g vs standalone %.17g", full->metrics.accuracy,
                    standalone.metrics.accuracy));
  }
  const auto& n = nosage->metrics;
  for (double v : {n.accuracy, n.precision, n.recall, n.f1}) {
    if (!std::isfinite(v)) return fail("without_graphsage row has non-finite metrics");
  }
  return pass(fmt("full row identical to standalone (accuracy %.4f); without_graphsage accuracy %.4f, f1 %.4f",
                  full->metrics.accuracy, n.accuracy, n.f1));
}

// ---------------------------------------------------------------- external data

Outcome external_data() {
  struct Target {
    const char* name;
    const char* data_env;
    const char* emb_env;
    double expected;
  };
  const Target targets[] = {{"cresci-17", "BOTGRAPH_CRESCI17_DIR", "BOTGRAPH_CRESCI17_EMB", 99.1},
                            {"cresci-15", "BOTGRAPH_CRESCI15_DIR", "BOTGRAPH_CRESCI15_EMB", 99.79}};
  std::string detail;
  bool any = false, ok = true;
  for (const auto& t : targets) {
    const char* data = std::getenv(t.data_env);
    const char* emb = std::getenv(t.emb_env);
    if (!data || !emb || !*data || !*emb) continue;
    any = true;
    const Dataset ds = load_dataset(data, DatasetFormat::kCresciCsv);
    const EmbeddingStore es = read_embeddings(emb);
    const double acc = 100.0 * evaluate_test_split(train(ds, es, TrainConfig{}), ds, es).metrics.accuracy;
    const bool within = std::abs(acc - t.expected) <= 2.0;
    ok = ok && within;
    detail += fmt("%s%s accuracy %.2f (target %.2f +/- 2.0)", detail.empty() ? "" : "; ", t.name, acc,
                  t.expected);
  }
  if (!any) {
    return skip("set BOTGRAPH_CRESCI17_DIR/_EMB or BOTGRAPH_CRESCI15_DIR/_EMB to run");
  }
  return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main() {
  testing_support::TempDir dir;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"graph-oracle-equivalence", graph_oracle},
      {"gradient-finite-differences", gradients},
      {"end-to-end-learning", end_to_end},
      {"metric-identities", metric_identities},
      {"threshold-sweep-shape", [&] { return sweep_shape(dir.path()); }},
      {"ablation-consistency", ablation_consistency},
      {"external-data-accuracy", external_data},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::kPass ? "PASS" : o.status == Outcome::kFail ? "FAIL" : "SKIP";
    failures += o.status == Outcome::kFail;
    std::printf("%s %s: %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
