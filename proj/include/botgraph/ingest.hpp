#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace botgraph {

enum class Label : std::uint8_t { kHuman = 0, kBot = 1 };

/// Profile counts in fixed order: followers, friends, statuses, favorites.
using AuxCounts = std::array<std::uint64_t, 4>;

struct UserRecord {
  std::string user_id;
  std::vector<std::string> tweets;
  std::optional<AuxCounts> aux;
  std::optional<Label> label;
};

struct Dataset {
  std::string name;
  std::vector<UserRecord> users;  // node index k == position in this vector
  bool has_aux = false;
  bool has_labels = false;

  std::size_t size() const { return users.size(); }
};

enum class DatasetFormat { kJsonl, kCresciCsv, kPanXmlDir };

DatasetFormat parse_dataset_format(const std::string& name);
std::string to_string(DatasetFormat format);

/// Loads a dataset; user order follows the input. Throws ParseError,
/// DuplicateUser, MixedMetadata or IoError.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Checks the dataset invariants and recomputes has_aux/has_labels.
/// Used by every loader and available for programmatically built datasets.
void finalize_dataset(Dataset& ds);

/// Row-major n x dim block of 32-bit tweet embeddings for one user.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
  bool operator==(const EmbeddingMatrix&) const = default;
};

/// Per-user embedding matrices, kept in insertion order so that writes are
/// deterministic.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 768);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Inserts or replaces. Throws DimensionError when cols != dim and
  /// DataError on non-finite values.
  void put(const std::string& user_id, EmbeddingMatrix m);
  bool contains(const std::string& user_id) const;
  /// Throws std::out_of_range if absent.
  const EmbeddingMatrix& at(const std::string& user_id) const;

  /// Bit-exact equality (ids, order, dims and raw value bits).
  bool bit_equal(const EmbeddingStore& other) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<EmbeddingMatrix> mats_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binary "RGBE" embedding file, little-endian. See docs/formats.md.
EmbeddingStore read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

struct ValidationReport {
  bool ok = false;
  std::size_t dim = 0;
  std::vector<std::string> missing;     // dataset users absent from the store
  std::vector<std::string> zero_tweet;  // present with n_k == 0

  std::string describe() const;
};

ValidationReport validate_dataset(const Dataset& ds, const EmbeddingStore& es);

}  // namespace botgraph
