#include "botgraph/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "botgraph/errors.hpp"

namespace botgraph {

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " labels");
  }
  if (predicted.empty()) throw EmptyInput("confusion: no predictions");
  ConfusionMatrix c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == Label::kBot;
    const bool t = truth[i] == Label::kBot;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics metrics(const ConfusionMatrix& c) {
  Metrics m;
  const auto total = static_cast<double>(c.total());
  if (total == 0) {
    m.degenerate = true;
    return m;
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / total;
  if (c.tp + c.fp > 0) {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    m.degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

namespace {

struct ThresholdCounts {
  double threshold;
  std::size_t tp, fp;  // cumulative at score >= threshold
};

/// Cumulative counts at every distinct score, descending.
std::vector<ThresholdCounts> sweep_counts(std::span<const double> scores, std::span<const Label> truth,
                                          std::size_t& positives, std::size_t& negatives) {
  if (scores.size() != truth.size()) throw DimensionError("scores and labels differ in length");
  positives = negatives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("non-finite score at index " + std::to_string(i));
    (truth[i] == Label::kBot ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0) {
    throw DegenerateLabels("curves need both bot and human examples");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<ThresholdCounts> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    while (k < order.size() && scores[order[k]] == t) {
      (truth[order[k]] == Label::kBot ? tp : fp) += 1;
      ++k;
    }
    out.push_back({t, tp, fp});
  }
  return out;
}

}  // namespace

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const Label> truth) {
  std::size_t pos = 0, neg = 0;
  const auto counts = sweep_counts(scores, truth, pos, neg);
  std::vector<CurvePoint> pts;
  pts.reserve(counts.size());
  for (const auto& c : counts) {
    pts.push_back({c.threshold, static_cast<double>(c.tp) / static_cast<double>(pos),
                   static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)});
  }
  return pts;
}

RocResult roc_auc(std::span<const double> scores, std::span<const Label> truth) {
  std::size_t pos = 0, neg = 0;
  const auto counts = sweep_counts(scores, truth, pos, neg);
  RocResult r;
  r.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double area = 0.0;
  std::size_t prev_tp = 0, prev_fp = 0;
  for (const auto& c : counts) {
    // Exact trapezoid in count units, normalized once at the end.
    area += static_cast<double>(c.fp - prev_fp) * static_cast<double>(c.tp + prev_tp) * 0.5;
    prev_tp = c.tp;
    prev_fp = c.fp;
    r.points.push_back({c.threshold, static_cast<double>(c.fp) / static_cast<double>(neg),
                        static_cast<double>(c.tp) / static_cast<double>(pos)});
  }
  r.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return r;
}

namespace {

TestEvaluation evaluate_rows(const Prediction& pred, const std::vector<std::string>& test_ids,
                             const std::unordered_map<std::string, Label>& truth_of) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < pred.user_ids.size(); ++i) row_of.emplace(pred.user_ids[i], i);
  TestEvaluation ev;
  for (const auto& id : test_ids) {
    auto r = row_of.find(id);
    auto t = truth_of.find(id);
    if (r == row_of.end() || t == truth_of.end()) {
      throw ModelMismatch("test user " + id + " is not in the evaluated dataset");
    }
    ev.user_ids.push_back(id);
    ev.scores.push_back(pred.bot_probability[r->second]);
    ev.predicted.push_back(pred.label[r->second]);
    ev.truth.push_back(t->second);
  }
  if (ev.user_ids.empty()) throw EmptyMask("model has an empty test split");
  ev.confusion = confusion(ev.predicted, ev.truth);
  ev.metrics = metrics(ev.confusion);
  return ev;
}

}  // namespace

TestEvaluation evaluate_test_split(const Model& m, const Dataset& ds, const EmbeddingStore& es) {
  std::unordered_map<std::string, Label> truth;
  for (const auto& u : ds.users) {
    if (u.label) truth.emplace(u.user_id, *u.label);
  }
  return evaluate_rows(predict(m, ds, es), m.test_ids, truth);
}

TestEvaluation evaluate_test_split(const Model& m, const PreparedData& data) {
  std::unordered_map<std::string, Label> truth;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    truth.emplace(data.features.user_ids[i], static_cast<Label>(data.labels[i]));
  }
  return evaluate_rows(predict_features(m, data.features), m.test_ids, truth);
}

std::vector<SweepRow> sweep_accuracy(const PreparedData& data, const TrainConfig& cfg,
                                     std::span<const double> taus) {
  if (taus.empty()) throw ConfigError("sweep needs at least one tau");
  std::vector<SweepRow> rows;
  for (double tau : taus) {
    TrainConfig c = cfg;
    c.tau = tau;
    const SimilarityGraph g = build_graph(data.features.data, tau, cfg.graph_threads);
    const Model m = fit(data, c, &g);
    rows.push_back({tau, evaluate_test_split(m, data).metrics.accuracy, graph_stats(g)});
    std::fprintf(stderr, "[sweep] tau=%.4f edges=%zu accuracy=%.4f\n", tau, rows.back().stats.edge_count,
                 rows.back().accuracy);
  }
  return rows;
}

std::vector<SweepRow> sweep_accuracy(const Dataset& ds, const EmbeddingStore& es,
                                     const TrainConfig& cfg, std::span<const double> taus) {
  if (taus.empty()) throw ConfigError("sweep needs at least one tau");
  return sweep_accuracy(prepare_training_data(ds, es, cfg), cfg, taus);
}

std::vector<AblationRow> ablate(const Dataset& ds, const EmbeddingStore& es, const TrainConfig& cfg) {
  if (!ds.has_aux) throw MissingMetadata("ablation needs profile metadata; dataset " + ds.name + " has none");
  if (!cfg.use_aux) throw ConfigError("ablation needs use_aux = true");
  std::vector<std::pair<std::string, TrainConfig>> variants;
  variants.emplace_back("full", cfg);
  for (std::size_t drop = 0; drop < 4; ++drop) {
    TrainConfig c = cfg;
    c.aux_columns.clear();
    for (auto col : cfg.aux_columns) {
      if (col != drop) c.aux_columns.push_back(col);
    }
    variants.emplace_back(std::string("without_") + kAuxFieldNames[drop], c);
  }
  TrainConfig no_sage = cfg;
  no_sage.use_sage = false;
  variants.emplace_back("without_graphsage", no_sage);

  std::vector<AblationRow> rows;
  for (const auto& [name, c] : variants) {
    const Model m = train(ds, es, c);
    const auto ev = evaluate_test_split(m, ds, es);
    rows.push_back({name, ev.metrics, ev.confusion});
    std::fprintf(stderr, "[ablate] %s accuracy=%.4f\n", name.c_str(), ev.metrics.accuracy);
  }
  return rows;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

void export_node_embeddings(const Model& m, const Dataset& ds, const EmbeddingStore& es,
                            const std::filesystem::path& path) {
  const Prediction p = predict(m, ds, es);
  auto os = open_out(path);
  os << "user_id,label";
  for (Eigen::Index c = 0; c < p.last_hidden.cols(); ++c) os << ",h" << c;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& u = ds.users[i];
    os << u.user_id << ',';
    if (u.label) os << static_cast<int>(*u.label);
    for (Eigen::Index c = 0; c < p.last_hidden.cols(); ++c) {
      os << ',' << num(p.last_hidden(static_cast<Eigen::Index>(i), c));
    }
    os << '\n';
  }
  finish(os, path);
}

void write_pr_csv(std::span<const CurvePoint> pts, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "threshold,recall,precision\n";
  for (const auto& p : pts) os << num(p.threshold) << ',' << num(p.x) << ',' << num(p.y) << '\n';
  finish(os, path);
}

void write_roc_csv(std::span<const CurvePoint> pts, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "threshold,fpr,tpr\n";
  for (const auto& p : pts) os << num(p.threshold) << ',' << num(p.x) << ',' << num(p.y) << '\n';
  finish(os, path);
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "tau,edges,density,accuracy\n";
  for (const auto& r : rows) {
    os << num(r.tau) << ',' << r.stats.edge_count << ',' << num(r.stats.density) << ','
       << num(r.accuracy) << '\n';
  }
  finish(os, path);
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "row,accuracy,precision,recall,f1\n";
  for (const auto& r : rows) {
    os << r.name << ',' << num(r.metrics.accuracy) << ',' << num(r.metrics.precision) << ','
       << num(r.metrics.recall) << ',' << num(r.metrics.f1) << '\n';
  }
  finish(os, path);
}

}  // namespace botgraph
