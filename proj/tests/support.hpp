#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "botgraph/features.hpp"
#include "botgraph/ingest.hpp"

namespace testing_support {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("botgraph-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Two Gaussian clusters (unit sigma) centered at +mu*e0 and +mu*e1.
/// Labels alternate so both classes have n/2 members.
inline std::pair<botgraph::RowMatrix, std::vector<int>> two_clusters(std::size_t n, std::size_t d,
                                                                     double mu,
                                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  botgraph::RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    labels[i] = y;
    for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = noise(rng);
    x(static_cast<Eigen::Index>(i), y) += mu;
  }
  return {x, labels};
}

/// Labeled users with profile counts. Bots tweet from one vocabulary and
/// humans from another; bots follow many accounts and have few followers.
inline botgraph::Dataset synthetic_users(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> bot_words = {"free", "win", "click", "prize", "crypto",
                                                     "deal", "offer", "bonus"};
  static const std::vector<std::string> human_words = {"coffee", "morning", "friends", "walk",
                                                       "book", "music", "garden", "dinner"};
  std::mt19937_64 rng(seed);
  botgraph::Dataset ds;
  ds.name = "synthetic";
  for (std::size_t i = 0; i < n; ++i) {
    const bool bot = i % 2 == 1;
    const auto& words = bot ? bot_words : human_words;
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    botgraph::UserRecord u;
    u.user_id = "u" + std::to_string(i);
    for (int t = 0; t < 3; ++t) {
      std::string text;
      for (int w = 0; w < 5; ++w) text += words[pick(rng)] + " ";
      u.tweets.push_back(text);
    }
    std::uniform_int_distribution<std::uint64_t> small(5, 50), large(500, 5000);
    u.aux = bot ? botgraph::AuxCounts{small(rng), large(rng), large(rng), small(rng)}
                : botgraph::AuxCounts{large(rng), small(rng), small(rng), large(rng)};
    u.label = bot ? botgraph::Label::kBot : botgraph::Label::kHuman;
    ds.users.push_back(std::move(u));
  }
  botgraph::finalize_dataset(ds);
  return ds;
}

/// Writes a dataset as JSONL.
inline void write_jsonl(const botgraph::Dataset& ds, const std::filesystem::path& p) {
  std::ofstream os(p);
  for (const auto& u : ds.users) {
    os << "{\"user_id\": \"" << u.user_id << "\", \"tweets\": [";
    for (std::size_t t = 0; t < u.tweets.size(); ++t) {
      os << (t ? ", " : "") << '"' << u.tweets[t] << '"';
    }
    os << "]";
    if (u.aux) {
      os << ", \"aux\": {\"followers\": " << (*u.aux)[0] << ", \"friends\": " << (*u.aux)[1]
         << ", \"statuses\": " << (*u.aux)[2] << ", \"favorites\": " << (*u.aux)[3] << "}";
    }
    if (u.label) os << ", \"label\": " << static_cast<int>(*u.label);
    os << "}\n";
  }
}

}  // namespace testing_support
