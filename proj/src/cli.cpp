#include "botgraph/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "botgraph/errors.hpp"
#include "botgraph/eval.hpp"

namespace botgraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutputEnv = "BOTGRAPH_OUT";

/// Raised for missing/invalid command-line input (exit code 2).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("cli", what) {}
};

class ValidationFailed : public Error {
 public:
  explicit ValidationFailed(const std::string& what) : Error("validate", what) {}
};

void log(const std::string& msg) { std::cerr << "[botgraph] " << msg << '\n'; }

// ------------------------------------------------------------ hashing

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // length separator keeps concatenations distinct
    h ^= s.size();
    h *= 0x100000001b3ULL;
  }
  void file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open " + p.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    bytes(buf.str());
  }
  void path(const fs::path& p) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        bytes(fs::relative(f, p).generic_string());
        file(f);
      }
    } else {
      file(p);
    }
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

// ------------------------------------------------------------ stage helpers

struct Inputs {
  Dataset ds;
  EmbeddingStore es;
  std::string embeddings_key;  // identifies the embedding source for caching
};

fs::path output_dir(const RunConfig& cfg) { return fs::path(cfg.output_dir); }

fs::path model_path(const RunConfig& cfg) {
  return cfg.model.empty() ? output_dir(cfg) / "model.bin" : fs::path(cfg.model);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

Dataset load_inputs_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw UsageError("--dataset is required (or set 'dataset' in --config)");
  return load_dataset(cfg.dataset, parse_dataset_format(cfg.format));
}

Inputs load_inputs(const RunConfig& cfg, bool require_valid = true) {
  Inputs in{load_inputs_dataset(cfg), EmbeddingStore(1), {}};
  if (cfg.embeddings.empty()) {
    log("no --embeddings given; using the hashed fallback featurizer (dim " +
        std::to_string(cfg.fallback_dim) + ")");
    in.es = fallback_embed_dataset(in.ds, cfg.fallback_dim, cfg.fallback_seed);
    in.embeddings_key = "fallback:" + std::to_string(cfg.fallback_dim) + ":" +
                        std::to_string(cfg.fallback_seed);
  } else {
    in.es = read_embeddings(cfg.embeddings);
    Fnv h;
    h.file(cfg.embeddings);
    in.embeddings_key = "rgbe:" + h.hex();
  }
  if (require_valid) {
    const auto rep = validate_dataset(in.ds, in.es);
    if (!rep.ok) throw ValidationFailed("dataset/embedding validation " + rep.describe());
  }
  return in;
}

/// Same as prepare_training_data, but the fused matrix is cached on disk
/// keyed by a content hash of everything it depends on.
PreparedData prepare_cached(const RunConfig& cfg, const Inputs& in, std::string* key_out) {
  const TrainConfig& t = cfg.train;
  Fnv h;
  h.path(cfg.dataset);
  h.bytes(cfg.format);
  h.bytes(in.embeddings_key);
  h.bytes(to_string(t.pooling));
  h.bytes(to_string(t.aux_normalize));
  h.bytes(t.use_aux ? "aux" : "noaux");
  for (auto c : t.aux_columns) h.bytes(std::to_string(c));
  h.bytes(std::to_string(t.seed));
  char fr[96];
  std::snprintf(fr, sizeof fr, "%.17g/%.17g/%.17g", t.train_fraction, t.val_fraction, t.test_fraction);
  h.bytes(fr);
  if (key_out) *key_out = h.hex();

  fs::path cache_file;
  if (!cfg.fused_cache.empty()) {
    cache_file = cfg.fused_cache;
  } else if (cfg.cache) {
    cache_file = output_dir(cfg) / "cache" / ("fused-" + h.hex() + ".rgbf");
  }

  if (cfg.cache && !cache_file.empty() && fs::exists(cache_file)) {
    auto [fm, norm] = read_fused(cache_file);
    if (fm.embedding_dim != in.es.dim()) {
      throw ModelMismatch("cached fused matrix " + cache_file.string() + " was built from " +
                          std::to_string(fm.embedding_dim) + "-d embeddings, current store has dim " +
                          std::to_string(in.es.dim()));
    }
    std::vector<std::string> ids;
    for (const auto& u : in.ds.users) ids.push_back(u.user_id);
    if (fm.user_ids != ids) {
      throw ModelMismatch("cached fused matrix " + cache_file.string() +
                          " covers a different user list than the dataset");
    }
    log("using cached fused matrix " + cache_file.string());
    PreparedData d;
    for (const auto& u : in.ds.users) {
      if (!u.label) throw DataError("dataset " + in.ds.name + " is not fully labeled");
      d.labels.push_back(static_cast<int>(*u.label));
    }
    d.split = stratified_split(d.labels, t);
    d.features = std::move(fm);
    d.norm = std::move(norm);
    return d;
  }
  PreparedData d = prepare_training_data(in.ds, in.es, t);
  if (!cache_file.empty()) {
    fs::create_directories(cache_file.parent_path().empty() ? fs::path(".") : cache_file.parent_path());
    write_fused(d.features, d.norm, cache_file);
  }
  return d;
}

SimilarityGraph graph_cached(const RunConfig& cfg, const PreparedData& d, const std::string& key) {
  char tau[64];
  std::snprintf(tau, sizeof tau, "%.17g", cfg.train.tau);
  Fnv h;
  h.bytes(key);
  h.bytes(tau);
  const fs::path file = output_dir(cfg) / "cache" / ("graph-" + h.hex() + ".txt");
  if (cfg.cache && fs::exists(file)) {
    auto g = read_edge_list(file);
    if (g.num_nodes() == d.features.rows() && g.tau() == cfg.train.tau) {
      log("using cached graph " + file.string());
      return g;
    }
  }
  auto g = build_graph(d.features.data, cfg.train.tau, cfg.train.graph_threads);
  if (cfg.cache) {
    fs::create_directories(file.parent_path());
    write_edge_list(g, file);
  }
  return g;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

json metrics_json(const TestEvaluation& ev) {
  json j = {{"accuracy", ev.metrics.accuracy},
            {"precision", ev.metrics.precision},
            {"recall", ev.metrics.recall},
            {"f1", ev.metrics.f1},
            {"degenerate", ev.metrics.degenerate},
            {"test_users", ev.user_ids.size()},
            {"tp", ev.confusion.tp},
            {"fp", ev.confusion.fp},
            {"fn", ev.confusion.fn},
            {"tn", ev.confusion.tn}};
  try {
    j["auc"] = roc_auc(ev.scores, ev.truth).auc;
  } catch (const DegenerateLabels&) {
    j["auc"] = nullptr;
  }
  return j;
}

json stats_json(const GraphStats& s, double tau) {
  json hist = json::object();
  for (auto [deg, count] : s.degree_histogram) hist[std::to_string(deg)] = count;
  return {{"tau", tau},
          {"nodes", s.nodes},
          {"edges", s.edge_count},
          {"density", s.density},
          {"isolated_nodes", s.isolated_nodes},
          {"components", s.components},
          {"degree_histogram", hist}};
}

// ------------------------------------------------------------ commands

int cmd_validate(const RunConfig& cfg) {
  const auto in = load_inputs(cfg, false);
  const auto rep = validate_dataset(in.ds, in.es);
  std::cout << "dataset " << in.ds.name << ": " << in.ds.size() << " users, metadata "
            << (in.ds.has_aux ? "present" : "absent") << ", labels "
            << (in.ds.has_labels ? "present" : "absent") << '\n'
            << rep.describe() << '\n';
  return rep.ok ? exit_code::kOk : exit_code::kValidationFailed;
}

int cmd_embed_fallback(const RunConfig& cfg) {
  const Dataset ds = load_inputs_dataset(cfg);
  const EmbeddingStore es = fallback_embed_dataset(ds, cfg.fallback_dim, cfg.fallback_seed);
  const fs::path out = cfg.embeddings.empty() ? output_dir(cfg) / "embeddings.rgbe" : fs::path(cfg.embeddings);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_embeddings(es, out);
  const auto rep = validate_dataset(ds, es);
  if (!rep.ok) log("warning: " + rep.describe());
  std::cout << "wrote " << out.string() << " (" << es.size() << " users, dim " << es.dim() << ")\n";
  return exit_code::kOk;
}

int cmd_build_graph(const RunConfig& cfg) {
  const auto in = load_inputs(cfg);
  std::string key;
  const PreparedData d = prepare_cached(cfg, in, &key);
  const SimilarityGraph g = graph_cached(cfg, d, key);
  write_edge_list(g, output_dir(cfg) / "graph.txt");
  write_fused(d.features, d.norm, output_dir(cfg) / "fused.rgbf");
  const json s = stats_json(graph_stats(g), g.tau());
  write_text(output_dir(cfg) / "graph_stats.json", s.dump(2) + "\n");
  std::cout << s.dump() << '\n';
  return exit_code::kOk;
}

int cmd_train(const RunConfig& cfg) {
  const auto in = load_inputs(cfg);
  std::string key;
  const PreparedData d = prepare_cached(cfg, in, &key);
  const SimilarityGraph g = graph_cached(cfg, d, key);
  log("graph: " + std::to_string(g.num_nodes()) + " nodes, " + std::to_string(g.num_edges()) +
      " edges at tau " + num(g.tau()));
  const Model m = fit(d, cfg.train, &g);
  save_model(m, model_path(cfg));
  write_text(output_dir(cfg) / "history.csv", history_csv(m));
  const auto ev = evaluate_test_split(m, d);
  json j = metrics_json(ev);
  j["best_epoch"] = m.best_epoch;
  write_text(output_dir(cfg) / "metrics.json", j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return exit_code::kOk;
}

int cmd_evaluate(const RunConfig& cfg) {
  const auto in = load_inputs(cfg);
  const Model m = load_model(model_path(cfg));
  const Prediction all = predict(m, in.ds, in.es);
  const auto ev = evaluate_test_split(m, in.ds, in.es);
  const auto pr = pr_curve(ev.scores, ev.truth);
  const auto roc = roc_auc(ev.scores, ev.truth);
  write_pr_csv(pr, output_dir(cfg) / "pr_curve.csv");
  write_roc_csv(roc.points, output_dir(cfg) / "roc_curve.csv");
  std::ostringstream preds;
  preds << "user_id,bot_probability,predicted\n";
  for (std::size_t i = 0; i < all.user_ids.size(); ++i) {
    preds << all.user_ids[i] << ',' << num(all.bot_probability[i]) << ','
          << static_cast<int>(all.label[i]) << '\n';
  }
  write_text(output_dir(cfg) / "predictions.csv", preds.str());
  const json j = metrics_json(ev);
  write_text(output_dir(cfg) / "evaluation.json", j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return exit_code::kOk;
}

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.taus.empty()) throw UsageError("--taus must list at least one threshold");
  const auto in = load_inputs(cfg);
  const PreparedData d = prepare_cached(cfg, in, nullptr);
  const auto rows = sweep_accuracy(d, cfg.train, cfg.taus);
  write_sweep_csv(rows, output_dir(cfg) / "sweep.csv");
  std::cout << "wrote " << (output_dir(cfg) / "sweep.csv").string() << " (" << rows.size()
            << " thresholds)\n";
  return exit_code::kOk;
}

int cmd_ablate(const RunConfig& cfg) {
  const auto in = load_inputs(cfg);
  const auto rows = ablate(in.ds, in.es, cfg.train);
  write_ablation_csv(rows, output_dir(cfg) / "ablation.csv");
  std::cout << "wrote " << (output_dir(cfg) / "ablation.csv").string() << '\n';
  return exit_code::kOk;
}

int cmd_export(const RunConfig& cfg) {
  const auto in = load_inputs(cfg);
  const Model m = load_model(model_path(cfg));
  const fs::path out = output_dir(cfg) / "node_embeddings.csv";
  export_node_embeddings(m, in.ds, in.es, out);
  std::cout << "wrote " << out.string() << '\n';
  return exit_code::kOk;
}

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--dataset", "dataset", "dataset path (file or directory)"},
    {"--format", "format", "dataset format: jsonl | cresci-csv | pan-xml-dir"},
    {"--embeddings", "embeddings", "RGBE embedding file (omit to use the fallback featurizer)"},
    {"--fallback-dim", "fallback_dim", "fallback featurizer width"},
    {"--fallback-seed", "fallback_seed", "fallback featurizer hash seed"},
    {"--model", "model", "model file (default <out>/model.bin)"},
    {"--tau", "tau", "cosine similarity threshold"},
    {"--taus", "taus", "comma-separated thresholds for sweep"},
    {"--pooling", "pooling", "tweet pooling: max | avg"},
    {"--aux-normalize", "aux_normalize", "metadata scaling: log-z | none"},
    {"--isolated", "isolated", "isolated-node aggregation: zero | self"},
    {"--epochs", "epochs", "training epochs"},
    {"--seed", "seed", "random seed"},
    {"--lr", "learning_rate", "Adam learning rate"},
    {"--dropout", "dropout", "dropout rate"},
    {"--threads", "threads", "graph construction threads (0 = all cores)"},
    {"--fused-cache", "fused_cache", "explicit fused-matrix cache file"},
};

int dispatch(const std::string& name, const RunConfig& cfg) {
  if (name == "validate") return cmd_validate(cfg);
  if (name == "embed-fallback") return cmd_embed_fallback(cfg);
  if (name == "build-graph") return cmd_build_graph(cfg);
  if (name == "train") return cmd_train(cfg);
  if (name == "evaluate") return cmd_evaluate(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  if (name == "ablate") return cmd_ablate(cfg);
  if (name == "export-embeddings") return cmd_export(cfg);
  throw UsageError("unknown command " + name);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Similarity-graph bot detection: feature fusion, cosine graph, GraphSAGE classifier"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
  };
  constexpr Sub kSubs[] = {
      {"embed-fallback", "write an RGBE file with the hashed fallback featurizer"},
      {"build-graph", "build fused features and the similarity graph"},
      {"train", "train a model and report test metrics as one JSON line"},
      {"evaluate", "evaluate a trained model; write PR/ROC curves"},
      {"sweep", "retrain across similarity thresholds; write sweep.csv"},
      {"ablate", "leave-one-out ablation; write ablation.csv"},
      {"export-embeddings", "write final hidden-layer activations as CSV"},
      {"validate", "check a dataset against its embedding file"},
  };

  std::string config_file, out_dir;
  std::vector<std::string> sets;
  bool no_cache = false;
  std::vector<std::pair<std::string, std::string>> flag_values(std::size(kFlags));
  std::vector<std::vector<CLI::Option*>> flag_opts(std::size(kFlags));
  std::vector<CLI::Option*> out_opts;

  for (const auto& s : kSubs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config_file, "run configuration file (key = value)");
    out_opts.push_back(sub->add_option("-o,--out", out_dir, std::string("output directory (default $") +
                                                                kOutputEnv + " or ./botgraph-out)"));
    sub->add_option("--set", sets, "override any config key: --set key=value");
    sub->add_flag("--no-cache", no_cache, "ignore and do not write intermediate caches");
    for (std::size_t f = 0; f < std::size(kFlags); ++f) {
      flag_values[f].first = kFlags[f].key;
      flag_opts[f].push_back(sub->add_option(kFlags[f].flag, flag_values[f].second, kFlags[f].help)
                                 ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg = parse_config_text(read_text(config_file));
    for (std::size_t f = 0; f < std::size(kFlags); ++f) {
      const bool given = std::any_of(flag_opts[f].begin(), flag_opts[f].end(),
                                     [](const CLI::Option* o) { return o->count() > 0; });
      if (given) apply_config_value(cfg, flag_values[f].first, flag_values[f].second);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      apply_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (no_cache) cfg.cache = false;
    const bool out_given = std::any_of(out_opts.begin(), out_opts.end(),
                                       [](const CLI::Option* o) { return o->count() > 0; });
    if (out_given) {
      cfg.output_dir = out_dir;
    } else if (cfg.output_dir.empty()) {
      const char* env = std::getenv(kOutputEnv);
      cfg.output_dir = env && *env ? env : "botgraph-out";
    }
    cfg.train.validate();
    fs::create_directories(cfg.output_dir);
    write_text(output_dir(cfg) / (name + ".resolved.conf"), to_config_text(cfg));
    return dispatch(name, cfg);
  } catch (const UsageError& e) {
    std::cerr << "error [" << name << "]: " << e.what() << '\n';
    return exit_code::kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error [" << name << "/config]: " << e.what() << '\n';
    return exit_code::kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error [" << name << "/train]: training diverged at epoch " << e.epoch() << ": "
              << e.what() << '\n';
    return exit_code::kDiverged;
  } catch (const ModelMismatch& e) {
    std::cerr << "error [" << name << "/model]: ModelMismatch: " << e.what() << '\n';
    return exit_code::kModelMismatch;
  } catch (const MissingMetadata& e) {
    std::cerr << "error [" << name << "/features]: MissingMetadata: " << e.what() << '\n';
    return exit_code::kMissingMetadata;
  } catch (const ValidationFailed& e) {
    std::cerr << "error [" << name << "/validate]: " << e.what() << '\n';
    return exit_code::kValidationFailed;
  } catch (const DegenerateLabels& e) {
    std::cerr << "error [" << name << "/eval]: " << e.what() << '\n';
    return exit_code::kDegenerateLabels;
  } catch (const Error& e) {
    std::cerr << "error [" << name << "/" << e.stage() << "]: " << e.what() << '\n';
    return exit_code::kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error [" << name << "]: " << e.what() << '\n';
    return exit_code::kUnexpected;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("botgraph");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace botgraph
