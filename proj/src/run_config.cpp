#include <charconv>
#include <cstdio>
#include <sstream>

#include "botgraph/cli.hpp"
#include "botgraph/errors.hpp"

namespace botgraph {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
      }
      out.push_back(v[i]);
    }
    return out;
  }
  return v;
}

std::string quote(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string s = trim(v);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += num(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::size_t aux_index(const std::string& key, const std::string& name) {
  for (std::size_t i = 0; i < kAuxFieldNames.size(); ++i) {
    if (name == kAuxFieldNames[i]) return i;
  }
  throw ConfigError(key + ": unknown metadata field '" + name +
                    "' (followers, friends, statuses, favorites)");
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  return to_config_text(*this) == to_config_text(o);
}

void apply_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = unquote(trim(raw));
  auto& t = c.train;
  if (key == "dataset") c.dataset = v;
  else if (key == "format") { parse_dataset_format(v); c.format = v; }
  else if (key == "embeddings") c.embeddings = v;
  else if (key == "fallback_dim") {
    c.fallback_dim = to_uint(key, v);
    if (c.fallback_dim == 0) throw ConfigError("fallback_dim must be >= 1");
  }
  else if (key == "fallback_seed") c.fallback_seed = to_uint(key, v);
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "model") c.model = v;
  else if (key == "taus") {
    c.taus.clear();
    for (const auto& s : split_list(v)) c.taus.push_back(to_double(key, s));
  }
  else if (key == "cache") c.cache = to_bool(key, v);
  else if (key == "fused_cache") c.fused_cache = v;
  else if (key == "tau") t.tau = to_double(key, v);
  else if (key == "pooling") t.pooling = parse_pooling_mode(v);
  else if (key == "aux_normalize") t.aux_normalize = parse_aux_normalize(v);
  else if (key == "use_aux") t.use_aux = to_bool(key, v);
  else if (key == "aux_columns") {
    t.aux_columns.clear();
    for (const auto& s : split_list(v)) t.aux_columns.push_back(aux_index(key, s));
  }
  else if (key == "isolated") t.isolated = parse_isolated_policy(v);
  else if (key == "use_sage") t.use_sage = to_bool(key, v);
  else if (key == "sage_hidden") t.sage_hidden = to_uint(key, v);
  else if (key == "mlp_hidden") {
    t.mlp_hidden.clear();
    for (const auto& s : split_list(v)) t.mlp_hidden.push_back(to_uint(key, s));
  }
  else if (key == "dropout") t.dropout = to_double(key, v);
  else if (key == "learning_rate") t.learning_rate = to_double(key, v);
  else if (key == "adam_beta1") t.adam_beta1 = to_double(key, v);
  else if (key == "adam_beta2") t.adam_beta2 = to_double(key, v);
  else if (key == "adam_eps") t.adam_eps = to_double(key, v);
  else if (key == "epochs") t.epochs = static_cast<int>(to_uint(key, v));
  else if (key == "seed") t.seed = to_uint(key, v);
  else if (key == "train_fraction") t.train_fraction = to_double(key, v);
  else if (key == "val_fraction") t.val_fraction = to_double(key, v);
  else if (key == "test_fraction") t.test_fraction = to_double(key, v);
  else if (key == "bn_eps") t.bn_eps = to_double(key, v);
  else if (key == "bn_momentum") t.bn_momentum = to_double(key, v);
  else if (key == "threads") t.graph_threads = static_cast<unsigned>(to_uint(key, v));
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == '[') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_config_value(base, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

std::string to_config_text(const RunConfig& c) {
  const auto& t = c.train;
  std::string aux;
  for (std::size_t i = 0; i < t.aux_columns.size(); ++i) {
    if (i) aux += ", ";
    aux += kAuxFieldNames.at(t.aux_columns[i]);
  }
  std::ostringstream os;
  os << "# botgraph run configuration\n"
     << "dataset = " << quote(c.dataset) << '\n'
     << "format = " << c.format << '\n'
     << "embeddings = " << quote(c.embeddings) << '\n'
     << "fallback_dim = " << c.fallback_dim << '\n'
     << "fallback_seed = " << c.fallback_seed << '\n'
     << "output_dir = " << quote(c.output_dir) << '\n'
     << "model = " << quote(c.model) << '\n'
     << "taus = " << join(c.taus) << '\n'
     << "cache = " << (c.cache ? "true" : "false") << '\n'
     << "fused_cache = " << quote(c.fused_cache) << '\n'
     << "tau = " << num(t.tau) << '\n'
     << "pooling = " << to_string(t.pooling) << '\n'
     << "aux_normalize = " << to_string(t.aux_normalize) << '\n'
     << "use_aux = " << (t.use_aux ? "true" : "false") << '\n'
     << "aux_columns = " << aux << '\n'
     << "isolated = " << to_string(t.isolated) << '\n'
     << "use_sage = " << (t.use_sage ? "true" : "false") << '\n'
     << "sage_hidden = " << t.sage_hidden << '\n'
     << "mlp_hidden = " << join(t.mlp_hidden) << '\n'
     << "dropout = " << num(t.dropout) << '\n'
     << "learning_rate = " << num(t.learning_rate) << '\n'
     << "adam_beta1 = " << num(t.adam_beta1) << '\n'
     << "adam_beta2 = " << num(t.adam_beta2) << '\n'
     << "adam_eps = " << num(t.adam_eps) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "seed = " << t.seed << '\n'
     << "train_fraction = " << num(t.train_fraction) << '\n'
     << "val_fraction = " << num(t.val_fraction) << '\n'
     << "test_fraction = " << num(t.test_fraction) << '\n'
     << "bn_eps = " << num(t.bn_eps) << '\n'
     << "bn_momentum = " << num(t.bn_momentum) << '\n'
     << "threads = " << t.graph_threads << '\n';
  return os.str();
}

}  // namespace botgraph
