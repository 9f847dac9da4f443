#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "botgraph/features.hpp"
#include "botgraph/graph.hpp"
#include "botgraph/sage.hpp"

namespace botgraph {

struct TrainConfig {
  double tau = 0.90;
  PoolingMode pooling = PoolingMode::kMax;
  AuxNormalize aux_normalize = AuxNormalize::kLogZ;
  bool use_aux = true;
  std::vector<std::size_t> aux_columns = {0, 1, 2, 3};
  IsolatedPolicy isolated = IsolatedPolicy::kZero;
  bool use_sage = true;
  std::size_t sage_hidden = 128;
  std::vector<std::size_t> mlp_hidden = {64, 32};
  double dropout = 0.5;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  std::uint64_t seed = 42;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::size_t num_classes = 2;
  unsigned graph_threads = 0;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Per-class shuffle (seeded) then round(train_fraction * n_c) to train,
/// round(val_fraction * n_c) to val, the rest to test. Index lists are sorted.
Split stratified_split(std::span<const int> labels, const TrainConfig& cfg);

/// Everything the optimizer needs: node features, labels and split.
struct PreparedData {
  FusedMatrix features;
  NormalizationStats norm;
  std::vector<int> labels;
  Split split;
};

/// Split first, then fuse with aux statistics fit on the training rows.
/// Throws MissingMetadata/ConfigError when the dataset is unlabeled.
PreparedData prepare_training_data(const Dataset& ds, const EmbeddingStore& es,
                                   const TrainConfig& cfg);

/// Wraps a raw feature matrix (no aux block) with a stratified split.
PreparedData prepare_from_features(const RowMatrix& features, std::span<const int> labels,
                                   const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;  // inference-mode loss on the selection rows
};

struct Model {
  TrainConfig config;
  NetworkParams params;
  NormalizationStats norm;
  std::size_t embedding_dim = 0;
  std::vector<std::size_t> aux_columns;  // empty when trained without metadata
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::vector<std::string> train_ids, val_ids, test_ids;

  std::size_t input_dim() const { return embedding_dim + aux_columns.size(); }
};

/// Full-batch Adam over cfg.epochs; keeps the parameters of the epoch with
/// the best validation accuracy, ties broken by lower validation loss. Builds the graph at cfg.tau unless one is
/// supplied. Throws TrainingDiverged on a non-finite loss.
Model fit(const PreparedData& data, const TrainConfig& cfg,
          const SimilarityGraph* graph = nullptr);

/// prepare_training_data + fit.
Model train(const Dataset& ds, const EmbeddingStore& es, const TrainConfig& cfg);

struct Prediction {
  std::vector<std::string> user_ids;
  std::vector<double> bot_probability;
  std::vector<Label> label;
  Matrix last_hidden;  // N x last FC width, inference mode
};

/// Inference over an arbitrary node set: the graph is rebuilt at the model's
/// tau over exactly these rows. Ties in the logits go to human.
Prediction predict_features(const Model& m, const FusedMatrix& features);

/// Fuses with the model's stored normalization, then predict_features.
/// Throws ModelMismatch when embedding width or metadata layout differ.
Prediction predict(const Model& m, const Dataset& ds, const EmbeddingStore& es);

/// Fused matrix as the model expects it for this dataset.
FusedMatrix features_for_model(const Model& m, const Dataset& ds, const EmbeddingStore& es);

void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// One CSV line per epoch: epoch,loss,train_accuracy,val_accuracy,val_loss.
std::string history_csv(const Model& m);

}  // namespace botgraph
