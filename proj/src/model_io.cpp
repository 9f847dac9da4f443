// Model file: "RGBM" | u16 version | u64 header length | JSON header |
// f64 normalization means, f64 stds | every parameter block (all_blocks
// order) as raw little-endian f64.

#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "botgraph/errors.hpp"
#include "botgraph/train.hpp"

namespace botgraph {

using nlohmann::json;

namespace {
constexpr char kModelMagic[4] = {'R', 'G', 'B', 'M'};
constexpr std::uint16_t kModelVersion = 1;
}  // namespace

void save_model(const Model& m, const std::filesystem::path& path) {
  json history = json::array();
  for (const auto& r : m.history) {
    history.push_back({r.epoch, r.loss, r.train_accuracy, r.val_accuracy, r.val_loss});
  }
  std::vector<std::size_t> block_sizes;
  for (auto b : all_blocks(m.params)) block_sizes.push_back(b.size());
  const json header = {{"config", to_json(m.config)},
                       {"embedding_dim", m.embedding_dim},
                       {"aux_columns", m.aux_columns},
                       {"norm_columns", m.norm.mean.size()},
                       {"best_epoch", m.best_epoch},
                       {"history", history},
                       {"split", {{"train", m.train_ids}, {"val", m.val_ids}, {"test", m.test_ids}}},
                       {"block_sizes", block_sizes}};
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kModelMagic, 4);
  detail::put_le<std::uint16_t>(os, kModelVersion);
  detail::put_le<std::uint64_t>(os, text.size());
  detail::put_bytes(os, text);
  for (double v : m.norm.mean) detail::put_f64(os, v);
  for (double v : m.norm.std) detail::put_f64(os, v);
  for (auto block : all_blocks(m.params)) {
    for (double v : block) detail::put_f64(os, v);
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  detail::LeReader r(is, path.string());
  char magic[4];
  r.read_raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError(path.string() + ": not a model file");
  if (r.get<std::uint16_t>() != kModelVersion) throw FormatError(path.string() + ": unsupported model version");
  const auto len = r.get<std::uint64_t>();
  json header;
  try {
    header = json::parse(r.get_bytes(len));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": corrupt header (" + e.what() + ")");
  }

  Model m;
  try {
    m.config = train_config_from_json(header.at("config"));
    m.embedding_dim = header.at("embedding_dim").get<std::size_t>();
    m.aux_columns = header.at("aux_columns").get<std::vector<std::size_t>>();
    m.best_epoch = header.at("best_epoch").get<int>();
    for (const auto& h : header.at("history")) {
      m.history.push_back({h.at(0).get<int>(), h.at(1).get<double>(), h.at(2).get<double>(),
                           h.at(3).get<double>(), h.at(4).get<double>()});
    }
    const auto& split = header.at("split");
    m.train_ids = split.at("train").get<std::vector<std::string>>();
    m.val_ids = split.at("val").get<std::vector<std::string>>();
    m.test_ids = split.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header field (" + e.what() + ")");
  }

  const auto norm_cols = header.at("norm_columns").get<std::size_t>();
  m.norm.mean.resize(norm_cols);
  m.norm.std.resize(norm_cols);
  for (auto& v : m.norm.mean) v = r.get_f64();
  for (auto& v : m.norm.std) v = r.get_f64();

  NetworkShape shape;
  shape.input_dim = m.input_dim();
  shape.use_sage = m.config.use_sage;
  shape.sage_hidden = m.config.sage_hidden;
  shape.mlp_hidden = m.config.mlp_hidden;
  shape.num_classes = m.config.num_classes;
  std::mt19937_64 rng(0);
  m.params = init_network(shape, rng);
  const auto expected = header.at("block_sizes").get<std::vector<std::size_t>>();
  auto blocks = all_blocks(m.params);
  if (expected.size() != blocks.size()) throw FormatError(path.string() + ": parameter layout mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (expected[b] != blocks[b].size()) throw FormatError(path.string() + ": parameter block size mismatch");
    for (auto& v : blocks[b]) v = r.get_f64();
  }
  if (!r.at_eof()) throw FormatError(path.string() + ": trailing bytes");
  return m;
}

}  // namespace botgraph
