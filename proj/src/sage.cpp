#include "botgraph/sage.hpp"

#include <algorithm>
#include <cmath>

#include "botgraph/errors.hpp"

namespace botgraph {

IsolatedPolicy parse_isolated_policy(const std::string& s) {
  if (s == "zero") return IsolatedPolicy::kZero;
  if (s == "self") return IsolatedPolicy::kSelf;
  throw ConfigError("isolated must be 'zero' or 'self', got '" + s + "'");
}

std::string to_string(IsolatedPolicy p) { return p == IsolatedPolicy::kZero ? "zero" : "self"; }

namespace {

template <typename Derived>
std::span<double> span_of(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename Derived>
std::span<const double> span_of(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  // Fill row by row so the draw order is independent of storage order.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Matrix add_bias(Matrix z, const Vector& b) {
  z.rowwise() += b.transpose();
  return z;
}

}  // namespace

NetworkParams init_network(const NetworkShape& shape, std::mt19937_64& rng) {
  if (shape.input_dim == 0) throw DimensionError("network input dim must be positive");
  if (shape.mlp_hidden.empty()) throw ConfigError("at least one hidden FC layer is required");
  NetworkParams p;
  p.use_sage = shape.use_sage;
  std::size_t width = shape.input_dim;
  if (shape.use_sage) {
    const auto fan_in = static_cast<Eigen::Index>(2 * shape.input_dim);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    p.sage.weight = uniform_matrix(static_cast<Eigen::Index>(shape.sage_hidden), fan_in, limit, rng);
    p.sage.bias = Vector::Zero(static_cast<Eigen::Index>(shape.sage_hidden));
    width = shape.sage_hidden;
  }
  for (auto out : shape.mlp_hidden) {
    DenseLayerParams l;
    const double limit = std::sqrt(6.0 / static_cast<double>(width));
    const auto o = static_cast<Eigen::Index>(out);
    l.weight = uniform_matrix(o, static_cast<Eigen::Index>(width), limit, rng);
    l.bias = Vector::Zero(o);
    l.gamma = Vector::Ones(o);
    l.beta = Vector::Zero(o);
    l.running_mean = Vector::Zero(o);
    l.running_var = Vector::Ones(o);
    p.mlp.hidden.push_back(std::move(l));
    width = out;
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(width + shape.num_classes));
  p.mlp.out_weight = uniform_matrix(static_cast<Eigen::Index>(shape.num_classes),
                                    static_cast<Eigen::Index>(width), limit, rng);
  p.mlp.out_bias = Vector::Zero(static_cast<Eigen::Index>(shape.num_classes));
  return p;
}

std::vector<std::span<double>> trainable_blocks(NetworkParams& p) {
  std::vector<std::span<double>> out;
  if (p.use_sage) {
    out.push_back(span_of(p.sage.weight));
    out.push_back(span_of(p.sage.bias));
  }
  for (auto& l : p.mlp.hidden) {
    out.push_back(span_of(l.weight));
    out.push_back(span_of(l.bias));
    out.push_back(span_of(l.gamma));
    out.push_back(span_of(l.beta));
  }
  out.push_back(span_of(p.mlp.out_weight));
  out.push_back(span_of(p.mlp.out_bias));
  return out;
}

std::vector<std::span<double>> gradient_blocks(NetworkGrads& g) {
  std::vector<std::span<double>> out;
  if (g.sage_weight.size() > 0) {
    out.push_back(span_of(g.sage_weight));
    out.push_back(span_of(g.sage_bias));
  }
  for (auto& l : g.hidden) {
    out.push_back(span_of(l.weight));
    out.push_back(span_of(l.bias));
    out.push_back(span_of(l.gamma));
    out.push_back(span_of(l.beta));
  }
  out.push_back(span_of(g.out_weight));
  out.push_back(span_of(g.out_bias));
  return out;
}

std::vector<std::span<double>> all_blocks(NetworkParams& p) {
  auto out = trainable_blocks(p);
  for (auto& l : p.mlp.hidden) {
    out.push_back(span_of(l.running_mean));
    out.push_back(span_of(l.running_var));
  }
  return out;
}

std::vector<std::span<const double>> all_blocks(const NetworkParams& p) {
  auto mutable_blocks = all_blocks(const_cast<NetworkParams&>(p));
  return {mutable_blocks.begin(), mutable_blocks.end()};
}

Matrix aggregate_neighbors(const SimilarityGraph& g, const Matrix& features, IsolatedPolicy isolated) {
  if (g.num_nodes() != static_cast<std::size_t>(features.rows())) {
    throw DimensionError("graph has " + std::to_string(g.num_nodes()) + " nodes, features have " +
                         std::to_string(features.rows()) + " rows");
  }
  Matrix agg = Matrix::Zero(features.rows(), features.cols());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto nb = g.neighbors(i);
    if (nb.empty()) {
      if (isolated == IsolatedPolicy::kSelf) agg.row(ii) = features.row(ii);
      continue;
    }
    for (auto j : nb) agg.row(ii) += features.row(static_cast<Eigen::Index>(j));
    agg.row(ii) /= static_cast<double>(nb.size());
  }
  return agg;
}

Matrix sage_forward(const SimilarityGraph& g, const Matrix& features, const SageLayerParams& p,
                    IsolatedPolicy isolated) {
  if (p.weight.cols() != 2 * features.cols() || p.bias.size() != p.weight.rows()) {
    throw DimensionError("sage weight is " + std::to_string(p.weight.rows()) + "x" +
                         std::to_string(p.weight.cols()) + ", expected ?x" +
                         std::to_string(2 * features.cols()));
  }
  Matrix concat(features.rows(), 2 * features.cols());
  concat << features, aggregate_neighbors(g, features, isolated);
  return add_bias(concat * p.weight.transpose(), p.bias).cwiseMax(0.0);
}

Matrix mlp_forward(const Matrix& h, const MlpParams& params, Mode mode, const MlpOptions& opts,
                   std::uint64_t dropout_seed, MlpCache* cache) {
  const Eigen::Index n = h.rows();
  if (mode == Mode::kTrain && n < 2) {
    throw BatchTooSmall("batch normalization needs at least 2 rows in train mode");
  }
  const bool use_dropout = mode == Mode::kTrain && opts.dropout > 0.0;
  std::mt19937_64 rng(dropout_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = use_dropout ? 1.0 / (1.0 - opts.dropout) : 1.0;

  if (cache) cache->layers.clear();
  Matrix x = h;
  for (const auto& layer : params.hidden) {
    if (layer.weight.cols() != x.cols()) {
      throw DimensionError("MLP layer expects width " + std::to_string(layer.weight.cols()) +
                           ", got " + std::to_string(x.cols()));
    }
    DenseLayerCache lc;
    Matrix z = add_bias(x * layer.weight.transpose(), layer.bias);
    Vector mean, var;
    if (mode == Mode::kTrain) {
      mean = z.colwise().mean().transpose();
      var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
    } else {
      mean = layer.running_mean;
      var = layer.running_var;
    }
    const Vector inv_std = (var.array() + opts.bn_eps).rsqrt().matrix();
    Matrix xhat = (z.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
    Matrix y = (xhat.array().rowwise() * layer.gamma.transpose().array()).rowwise() +
               layer.beta.transpose().array();
    Matrix out = y.cwiseMax(0.0);
    Matrix mask;
    if (use_dropout) {
      mask.resize(out.rows(), out.cols());
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < mask.cols(); ++c) {
          mask(r, c) = unif(rng) >= opts.dropout ? keep_scale : 0.0;
        }
      }
      out = out.cwiseProduct(mask);
    }
    if (cache) {
      lc.input = std::move(x);
      lc.normalized = std::move(xhat);
      lc.activated = std::move(y);
      lc.mask = std::move(mask);
      lc.batch_mean = std::move(mean);
      lc.batch_var = std::move(var);
      lc.inv_std = inv_std;
      lc.output = out;
      cache->layers.push_back(std::move(lc));
    }
    x = std::move(out);
  }
  if (params.out_weight.cols() != x.cols()) {
    throw DimensionError("output layer expects width " + std::to_string(params.out_weight.cols()));
  }
  Matrix logits = add_bias(x * params.out_weight.transpose(), params.out_bias);
  if (cache) cache->last_hidden = std::move(x);
  return logits;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(r, c) = std::exp(logits(r, c) - mx);
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  return p;
}

double cross_entropy_loss(const Matrix& probs, std::span<const int> labels,
                          std::span<const std::size_t> mask) {
  if (mask.empty()) throw EmptyMask("loss over an empty node mask");
  constexpr double kFloor = 1e-15;
  double total = 0.0;
  for (auto i : mask) {
    const auto c = labels[i];
    if (c < 0 || c >= probs.cols()) throw DimensionError("label out of range at node " + std::to_string(i));
    total -= std::log(std::max(probs(static_cast<Eigen::Index>(i), c), kFloor));
  }
  return total / static_cast<double>(mask.size());
}

ForwardPass network_forward(const SimilarityGraph& g, const Matrix& features,
                            const NetworkParams& params, Mode mode, const ForwardOptions& opts,
                            std::uint64_t dropout_seed) {
  ForwardPass pass;
  pass.mode = mode;
  const Matrix* mlp_input = &features;
  if (params.use_sage) {
    if (params.sage.weight.cols() != 2 * features.cols()) {
      throw DimensionError("sage layer expects " + std::to_string(params.sage.weight.cols() / 2) +
                           " input features, got " + std::to_string(features.cols()));
    }
    pass.aggregated = aggregate_neighbors(g, features, opts.isolated);
    pass.concat.resize(features.rows(), 2 * features.cols());
    pass.concat << features, pass.aggregated;
    pass.sage_pre = add_bias(pass.concat * params.sage.weight.transpose(), params.sage.bias);
    pass.sage_out = pass.sage_pre.cwiseMax(0.0);
    mlp_input = &pass.sage_out;
  }
  pass.logits = mlp_forward(*mlp_input, params.mlp, mode, opts.mlp, dropout_seed, &pass.mlp);
  pass.probs = softmax_rows(pass.logits);
  return pass;
}

NetworkGrads network_backward(const ForwardPass& pass, const NetworkParams& params,
                              std::span<const int> labels, std::span<const std::size_t> mask) {
  if (mask.empty()) throw EmptyMask("backward over an empty node mask");
  const Eigen::Index n = pass.probs.rows();
  const double inv_m = 1.0 / static_cast<double>(mask.size());

  Matrix dlogits = Matrix::Zero(n, pass.probs.cols());
  for (auto i : mask) {
    const auto r = static_cast<Eigen::Index>(i);
    dlogits.row(r) = pass.probs.row(r) * inv_m;
    dlogits(r, labels[i]) -= inv_m;
  }

  NetworkGrads g;
  const Matrix& last = pass.mlp.last_hidden;
  g.out_weight = dlogits.transpose() * last;
  g.out_bias = dlogits.colwise().sum().transpose();
  Matrix dx = dlogits * params.mlp.out_weight;

  g.hidden.resize(params.mlp.hidden.size());
  for (std::size_t li = params.mlp.hidden.size(); li-- > 0;) {
    const auto& layer = params.mlp.hidden[li];
    const auto& c = pass.mlp.layers[li];
    Matrix dy = dx;
    if (c.mask.size() > 0) dy = dy.cwiseProduct(c.mask);
    dy = (c.activated.array() > 0.0).select(dy.array(), 0.0).matrix();

    auto& lg = g.hidden[li];
    lg.gamma = dy.cwiseProduct(c.normalized).colwise().sum().transpose();
    lg.beta = dy.colwise().sum().transpose();
    const Matrix dxhat = dy.array().rowwise() * layer.gamma.transpose().array();

    Matrix dz;
    if (pass.mode == Mode::kTrain) {
      const double nn = static_cast<double>(n);
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(c.normalized).colwise().sum();
      dz = ((nn * dxhat).rowwise() - sum_dxhat) -
           Matrix(c.normalized.array().rowwise() * sum_dxhat_xhat.array());
      dz = (dz.array().rowwise() * (c.inv_std.transpose().array() / nn)).matrix();
    } else {
      dz = dxhat.array().rowwise() * c.inv_std.transpose().array();
    }
    lg.weight = dz.transpose() * c.input;
    lg.bias = dz.colwise().sum().transpose();
    dx = dz * layer.weight;
  }

  if (params.use_sage) {
    const Matrix dpre = (pass.sage_pre.array() > 0.0).select(dx.array(), 0.0).matrix();
    g.sage_weight = dpre.transpose() * pass.concat;
    g.sage_bias = dpre.colwise().sum().transpose();
  }
  return g;
}

void update_running_stats(NetworkParams& params, const ForwardPass& pass, double momentum) {
  const double n = static_cast<double>(pass.probs.rows());
  const double unbias = n > 1 ? n / (n - 1.0) : 1.0;
  for (std::size_t li = 0; li < params.mlp.hidden.size(); ++li) {
    auto& l = params.mlp.hidden[li];
    const auto& c = pass.mlp.layers[li];
    l.running_mean = (1.0 - momentum) * l.running_mean + momentum * c.batch_mean;
    l.running_var = (1.0 - momentum) * l.running_var + momentum * unbias * c.batch_var;
  }
}

void AdamOptimizer::step(std::span<const std::span<double>> params,
                         std::span<const std::span<double>> grads) {
  if (params.size() != grads.size()) throw DimensionError("Adam: parameter/gradient block mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto gr = grads[b];
    if (p.size() != gr.size() || p.size() != m_[b].size()) {
      throw DimensionError("Adam: block " + std::to_string(b) + " size mismatch");
    }
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gr[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gr[k] * gr[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

}  // namespace botgraph
