#include "botgraph/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "botgraph/errors.hpp"

namespace botgraph {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(tau >= -1.0 && tau <= 1.0)) fail("tau must lie in [-1, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (epochs < 1) fail("epochs must be >= 1");
  if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0) {
    fail("split fractions must be non-negative (train > 0)");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    fail("split fractions must sum to 1");
  }
  if (mlp_hidden.empty()) fail("mlp_hidden needs at least one layer");
  for (auto w : mlp_hidden) {
    if (w == 0) fail("mlp_hidden widths must be positive");
  }
  if (use_sage && sage_hidden == 0) fail("sage_hidden must be positive");
  if (num_classes != 2) fail("only binary classification (num_classes = 2) is supported");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must lie in [0, 1]");
  for (auto c : aux_columns) {
    if (c >= 4) fail("aux column index out of range");
  }
}

json to_json(const TrainConfig& c) {
  return json{{"tau", c.tau},
              {"pooling", to_string(c.pooling)},
              {"aux_normalize", to_string(c.aux_normalize)},
              {"use_aux", c.use_aux},
              {"aux_columns", c.aux_columns},
              {"isolated", to_string(c.isolated)},
              {"use_sage", c.use_sage},
              {"sage_hidden", c.sage_hidden},
              {"mlp_hidden", c.mlp_hidden},
              {"dropout", c.dropout},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"train_fraction", c.train_fraction},
              {"val_fraction", c.val_fraction},
              {"test_fraction", c.test_fraction},
              {"bn_eps", c.bn_eps},
              {"bn_momentum", c.bn_momentum},
              {"num_classes", c.num_classes}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.tau = j.at("tau").get<double>();
  c.pooling = parse_pooling_mode(j.at("pooling").get<std::string>());
  c.aux_normalize = parse_aux_normalize(j.at("aux_normalize").get<std::string>());
  c.use_aux = j.at("use_aux").get<bool>();
  c.aux_columns = j.at("aux_columns").get<std::vector<std::size_t>>();
  c.isolated = parse_isolated_policy(j.at("isolated").get<std::string>());
  c.use_sage = j.at("use_sage").get<bool>();
  c.sage_hidden = j.at("sage_hidden").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.test_fraction = j.at("test_fraction").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  return c;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<int> dataset_labels(const Dataset& ds) {
  if (!ds.has_labels) throw DataError("dataset " + ds.name + " is not fully labeled");
  std::vector<int> y;
  y.reserve(ds.size());
  for (const auto& u : ds.users) y.push_back(static_cast<int>(*u.label));
  return y;
}

int argmax_row(const Matrix& logits, Eigen::Index r) {
  // ties go to class 0 (human)
  int best = 0;
  for (Eigen::Index c = 1; c < logits.cols(); ++c) {
    if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
  }
  return best;
}

double accuracy_on(const Matrix& logits, std::span<const int> labels,
                   std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto i : rows) hit += argmax_row(logits, static_cast<Eigen::Index>(i)) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

std::vector<std::string> ids_of(const FusedMatrix& fm, std::span<const std::size_t> rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(fm.user_ids[r]);
  return out;
}

}  // namespace

Split stratified_split(std::span<const int> labels, const TrainConfig& cfg) {
  int max_label = -1;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("negative label at node " + std::to_string(i));
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::mt19937_64 rng(cfg.seed);
  Split s;
  for (auto& members : by_class) {
    // Fisher-Yates with an explicit draw so the order is library independent.
    for (std::size_t k = members.size(); k > 1; --k) {
      const std::size_t j = rng() % k;
      std::swap(members[k - 1], members[j]);
    }
    const auto n = static_cast<double>(members.size());
    const auto n_train = std::min(members.size(), static_cast<std::size_t>(std::llround(cfg.train_fraction * n)));
    const auto n_val =
        std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(cfg.val_fraction * n)));
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                 members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                  members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

PreparedData prepare_training_data(const Dataset& ds, const EmbeddingStore& es,
                                   const TrainConfig& cfg) {
  cfg.validate();
  PreparedData d;
  d.labels = dataset_labels(ds);
  d.split = stratified_split(d.labels, cfg);
  FusionOptions fo;
  fo.pooling = cfg.pooling;
  fo.aux_normalize = cfg.aux_normalize;
  fo.use_aux = cfg.use_aux;
  fo.aux_columns = cfg.aux_columns;
  std::tie(d.features, d.norm) = build_fused_matrix(ds, es, fo, std::nullopt, d.split.train);
  return d;
}

PreparedData prepare_from_features(const RowMatrix& features, std::span<const int> labels,
                                   const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionError("feature rows and label count differ");
  }
  PreparedData d;
  d.features.data = features;
  d.features.embedding_dim = static_cast<std::size_t>(features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    d.features.user_ids.push_back("node" + std::to_string(r));
  }
  d.labels.assign(labels.begin(), labels.end());
  d.split = stratified_split(d.labels, cfg);
  return d;
}

Model fit(const PreparedData& data, const TrainConfig& cfg, const SimilarityGraph* graph) {
  cfg.validate();
  if (data.split.train.empty()) throw EmptyMask("training split is empty");
  SimilarityGraph built;
  if (!graph) {
    built = build_graph(data.features.data, cfg.tau, cfg.graph_threads);
    graph = &built;
  }
  const Matrix features = data.features.data;

  Model model;
  model.config = cfg;
  model.norm = data.norm;
  model.embedding_dim = data.features.embedding_dim;
  model.aux_columns = data.features.aux_columns;
  model.train_ids = ids_of(data.features, data.split.train);
  model.val_ids = ids_of(data.features, data.split.val);
  model.test_ids = ids_of(data.features, data.split.test);

  NetworkShape shape;
  shape.input_dim = static_cast<std::size_t>(features.cols());
  shape.use_sage = cfg.use_sage;
  shape.sage_hidden = cfg.sage_hidden;
  shape.mlp_hidden = cfg.mlp_hidden;
  shape.num_classes = cfg.num_classes;
  std::mt19937_64 init_rng(cfg.seed);
  NetworkParams params = init_network(shape, init_rng);

  ForwardOptions fopts;
  fopts.isolated = cfg.isolated;
  fopts.mlp.dropout = cfg.dropout;
  fopts.mlp.bn_eps = cfg.bn_eps;

  AdamOptimizer adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const auto& select_rows = data.split.val.empty() ? data.split.train : data.split.val;
  double best_val = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  NetworkParams best = params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t dropout_seed = mix(cfg.seed ^ mix(static_cast<std::uint64_t>(epoch)));
    const ForwardPass pass =
        network_forward(*graph, features, params, Mode::kTrain, fopts, dropout_seed);
    const double loss = cross_entropy_loss(pass.probs, data.labels, data.split.train);
    if (!std::isfinite(loss)) {
      throw TrainingDiverged(epoch, "loss became non-finite at epoch " + std::to_string(epoch));
    }
    NetworkGrads grads = network_backward(pass, params, data.labels, data.split.train);
    update_running_stats(params, pass, cfg.bn_momentum);
    adam.step(trainable_blocks(params), gradient_blocks(grads));

    const ForwardPass eval = network_forward(*graph, features, params, Mode::kInfer, fopts, 0);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.train_accuracy = accuracy_on(eval.logits, data.labels, data.split.train);
    rec.val_accuracy = accuracy_on(eval.logits, data.labels, select_rows);
    rec.val_loss = cross_entropy_loss(eval.probs, data.labels, select_rows);
    model.history.push_back(rec);
    if (rec.val_accuracy > best_val ||
        (rec.val_accuracy == best_val && rec.val_loss < best_val_loss)) {
      best_val = rec.val_accuracy;
      best_val_loss = rec.val_loss;
      best = params;
      model.best_epoch = epoch;
    }
  }
  model.params = std::move(best);
  return model;
}

Model train(const Dataset& ds, const EmbeddingStore& es, const TrainConfig& cfg) {
  return fit(prepare_training_data(ds, es, cfg), cfg);
}

Prediction predict_features(const Model& m, const FusedMatrix& fm) {
  if (fm.cols() != m.input_dim()) {
    throw ModelMismatch("model expects " + std::to_string(m.input_dim()) +
                        " input features, got " + std::to_string(fm.cols()));
  }
  const SimilarityGraph g = build_graph(fm.data, m.config.tau, m.config.graph_threads);
  ForwardOptions fopts;
  fopts.isolated = m.config.isolated;
  fopts.mlp.bn_eps = m.config.bn_eps;
  const Matrix features = fm.data;
  ForwardPass pass = network_forward(g, features, m.params, Mode::kInfer, fopts, 0);
  Prediction p;
  p.user_ids = fm.user_ids;
  p.bot_probability.reserve(fm.rows());
  p.label.reserve(fm.rows());
  for (Eigen::Index r = 0; r < pass.probs.rows(); ++r) {
    p.bot_probability.push_back(pass.probs(r, 1));
    p.label.push_back(argmax_row(pass.logits, r) == 1 ? Label::kBot : Label::kHuman);
  }
  p.last_hidden = std::move(pass.mlp.last_hidden);
  return p;
}

FusedMatrix features_for_model(const Model& m, const Dataset& ds, const EmbeddingStore& es) {
  if (es.dim() != m.embedding_dim) {
    throw ModelMismatch("model was trained on " + std::to_string(m.embedding_dim) +
                        "-d embeddings, store has dim " + std::to_string(es.dim()));
  }
  if (!m.aux_columns.empty() && !ds.has_aux) {
    throw ModelMismatch("model uses profile metadata but dataset " + ds.name + " has none");
  }
  FusionOptions fo;
  fo.pooling = m.config.pooling;
  fo.aux_normalize = m.config.aux_normalize;
  fo.use_aux = !m.aux_columns.empty();
  fo.aux_columns = m.aux_columns;
  std::optional<NormalizationStats> stats;
  if (!m.norm.empty()) stats = m.norm;
  return build_fused_matrix(ds, es, fo, stats).first;
}

Prediction predict(const Model& m, const Dataset& ds, const EmbeddingStore& es) {
  return predict_features(m, features_for_model(m, ds, es));
}

std::string history_csv(const Model& m) {
  std::ostringstream os;
  os << "epoch,loss,train_accuracy,val_accuracy,val_loss\n";
  char buf[128];
  for (const auto& r : m.history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss,
                  r.train_accuracy, r.val_accuracy, r.val_loss);
    os << buf;
  }
  return os.str();
}

}  // namespace botgraph
