#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "botgraph/train.hpp"

namespace botgraph {

/// Bot is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> truth);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was zero and its metric reported as 0
  bool operator==(const Metrics&) const = default;
};

Metrics metrics(const ConfusionMatrix& c);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// One (threshold, recall, precision) point per distinct score, thresholds
/// descending; a user is flagged when score >= threshold.
/// Throws DegenerateLabels unless both classes are present.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const Label> truth);

struct RocResult {
  std::vector<CurvePoint> points;  // (threshold, fpr, tpr), starting at (+inf, 0, 0)
  double auc = 0.0;
};

/// Trapezoidal AUC; tied scores move FPR and TPR in one step.
RocResult roc_auc(std::span<const double> scores, std::span<const Label> truth);

/// Predictions and ground truth restricted to a model's held-out test users.
struct TestEvaluation {
  std::vector<std::string> user_ids;
  std::vector<double> scores;
  std::vector<Label> predicted;
  std::vector<Label> truth;
  ConfusionMatrix confusion;
  Metrics metrics;
};

TestEvaluation evaluate_test_split(const Model& m, const Dataset& ds, const EmbeddingStore& es);
TestEvaluation evaluate_test_split(const Model& m, const PreparedData& data);

struct SweepRow {
  double tau = 0.0;
  double accuracy = 0.0;
  GraphStats stats;
};

/// Retrains once per tau with an otherwise identical configuration and
/// reports test accuracy alongside the graph statistics.
std::vector<SweepRow> sweep_accuracy(const PreparedData& data, const TrainConfig& cfg,
                                     std::span<const double> taus);
std::vector<SweepRow> sweep_accuracy(const Dataset& ds, const EmbeddingStore& es,
                                     const TrainConfig& cfg, std::span<const double> taus);

struct AblationRow {
  std::string name;
  Metrics metrics;
  ConfusionMatrix confusion;
};

/// Full model, each of the four metadata counts removed in turn, and the
/// network without its aggregation layer (features go straight to the MLP).
/// Throws MissingMetadata when the dataset has no profile counts.
std::vector<AblationRow> ablate(const Dataset& ds, const EmbeddingStore& es, const TrainConfig& cfg);

/// CSV of final-hidden-layer activations: user_id,label,h0..h{k-1}.
void export_node_embeddings(const Model& m, const Dataset& ds, const EmbeddingStore& es,
                            const std::filesystem::path& path);

void write_pr_csv(std::span<const CurvePoint> pts, const std::filesystem::path& path);
void write_roc_csv(std::span<const CurvePoint> pts, const std::filesystem::path& path);
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);

}  // namespace botgraph
