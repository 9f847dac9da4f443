#pragma once

// GraphSAGE mean-aggregation layer, batch-normalized MLP head, softmax and
// cross-entropy, with hand-derived gradients for all trainable parameters.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "botgraph/graph.hpp"

namespace botgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// What an isolated node (no neighbours) aggregates to.
enum class IsolatedPolicy { kZero, kSelf };
IsolatedPolicy parse_isolated_policy(const std::string& s);
std::string to_string(IsolatedPolicy p);

enum class Mode { kTrain, kInfer };

struct SageLayerParams {
  Matrix weight;  // h x 2F, acts on [self ; neighbour mean]
  Vector bias;    // h
};

struct DenseLayerParams {
  Matrix weight;  // out x in
  Vector bias;
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

struct MlpParams {
  std::vector<DenseLayerParams> hidden;
  Matrix out_weight;  // C x last
  Vector out_bias;
};

struct NetworkParams {
  bool use_sage = true;
  SageLayerParams sage;
  MlpParams mlp;
};

/// Gradients mirror the trainable part of NetworkParams.
struct DenseLayerGrads {
  Matrix weight;
  Vector bias, gamma, beta;
};
struct NetworkGrads {
  Matrix sage_weight;
  Vector sage_bias;
  std::vector<DenseLayerGrads> hidden;
  Matrix out_weight;
  Vector out_bias;
};

struct NetworkShape {
  std::size_t input_dim = 0;
  bool use_sage = true;
  std::size_t sage_hidden = 128;
  std::vector<std::size_t> mlp_hidden = {64, 32};
  std::size_t num_classes = 2;
};

/// He-uniform hidden weights, Xavier-uniform output weights, zero biases,
/// identity batch-norm.
NetworkParams init_network(const NetworkShape& shape, std::mt19937_64& rng);

/// Trainable blocks in a fixed order (sage W, b, then per hidden layer
/// W, b, gamma, beta, then output W, b). Gradient blocks line up one-to-one.
std::vector<std::span<double>> trainable_blocks(NetworkParams& p);
std::vector<std::span<double>> gradient_blocks(NetworkGrads& g);
/// Trainable blocks plus running statistics; used for serialization.
std::vector<std::span<double>> all_blocks(NetworkParams& p);
std::vector<std::span<const double>> all_blocks(const NetworkParams& p);

/// Row i = mean of feature rows over N(i).
Matrix aggregate_neighbors(const SimilarityGraph& g, const Matrix& features,
                           IsolatedPolicy isolated = IsolatedPolicy::kZero);

/// ReLU(W [f_i ; mean_{N(i)} f] + b) for every node.
Matrix sage_forward(const SimilarityGraph& g, const Matrix& features, const SageLayerParams& p,
                    IsolatedPolicy isolated = IsolatedPolicy::kZero);

struct MlpOptions {
  double dropout = 0.5;
  double bn_eps = 1e-5;
};

/// Intermediates of one hidden layer, kept for the backward pass.
struct DenseLayerCache {
  Matrix input;
  Matrix normalized;   // x-hat
  Matrix activated;    // BN output before ReLU
  Matrix mask;         // dropout multipliers (empty when dropout inactive)
  Matrix output;
  Vector batch_mean;
  Vector batch_var;    // biased
  Vector inv_std;
};

struct MlpCache {
  std::vector<DenseLayerCache> layers;
  Matrix last_hidden;
};

/// Linear -> batch norm -> ReLU -> dropout per hidden layer, then a linear
/// output layer. Train mode uses batch statistics and a dropout mask drawn
/// from `dropout_seed`; infer mode uses running statistics and no dropout.
/// Throws BatchTooSmall for a single-row batch in train mode.
Matrix mlp_forward(const Matrix& h, const MlpParams& params, Mode mode, const MlpOptions& opts,
                   std::uint64_t dropout_seed, MlpCache* cache = nullptr);

/// Max-subtracted row softmax.
Matrix softmax_rows(const Matrix& logits);

/// Mean categorical cross-entropy over `mask`; labels are class indices.
/// Throws EmptyMask.
double cross_entropy_loss(const Matrix& probs, std::span<const int> labels,
                          std::span<const std::size_t> mask);

struct ForwardPass {
  Mode mode = Mode::kInfer;
  Matrix aggregated;   // N x F (empty without sage)
  Matrix concat;       // N x 2F
  Matrix sage_pre;     // pre-ReLU
  Matrix sage_out;
  MlpCache mlp;
  Matrix logits;
  Matrix probs;
};

struct ForwardOptions {
  IsolatedPolicy isolated = IsolatedPolicy::kZero;
  MlpOptions mlp;
};

/// Full network forward over every node.
ForwardPass network_forward(const SimilarityGraph& g, const Matrix& features,
                            const NetworkParams& params, Mode mode, const ForwardOptions& opts,
                            std::uint64_t dropout_seed);

/// Gradients of cross_entropy_loss(pass.probs, labels, mask) with respect to
/// every trainable parameter, using the intermediates cached in `pass`.
NetworkGrads network_backward(const ForwardPass& pass, const NetworkParams& params,
                              std::span<const int> labels, std::span<const std::size_t> mask);

/// Exponential running-statistic update from the batch statistics of a
/// train-mode pass (unbiased variance).
void update_running_stats(NetworkParams& params, const ForwardPass& pass, double momentum);

/// Adam over flattened parameter blocks.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<const std::span<double>> params,
            std::span<const std::span<double>> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace botgraph
