#include "botgraph/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "botgraph/errors.hpp"
#include "csv.hpp"

namespace botgraph {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "jsonl") return DatasetFormat::kJsonl;
  if (name == "cresci-csv") return DatasetFormat::kCresciCsv;
  if (name == "pan-xml-dir") return DatasetFormat::kPanXmlDir;
  throw ConfigError("unknown dataset format '" + name +
                    "' (expected jsonl, cresci-csv or pan-xml-dir)");
}

std::string to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::kJsonl: return "jsonl";
    case DatasetFormat::kCresciCsv: return "cresci-csv";
    case DatasetFormat::kPanXmlDir: return "pan-xml-dir";
  }
  return "?";
}

namespace {

std::optional<Label> parse_label_text(std::string s, const std::string& where) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s.empty()) return std::nullopt;
  if (s == "1" || s == "bot") return Label::kBot;
  if (s == "0" || s == "human" || s == "genuine") return Label::kHuman;
  throw ParseError(where + ": unrecognised label '" + s + "'");
}

std::uint64_t parse_count(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError(where + ": count '" + s + "' is not a non-negative integer");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ParseError(where + ": count '" + s + "' out of range");
  }
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

// ---------------------------------------------------------------- JSONL

std::uint64_t json_count(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
  }
  throw ParseError(where + ": aux count must be a non-negative integer");
}

UserRecord parse_jsonl_user(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  UserRecord u;
  auto id = j.find("user_id");
  if (id == j.end()) throw ParseError(where + ": missing user_id");
  if (id->is_string()) {
    u.user_id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    u.user_id = std::to_string(id->get<std::int64_t>());
  } else {
    throw ParseError(where + ": user_id must be a string or integer");
  }
  const std::string uw = where + " (user " + u.user_id + ")";
  if (auto t = j.find("tweets"); t != j.end() && !t->is_null()) {
    if (!t->is_array()) throw ParseError(uw + ": tweets must be an array");
    for (const auto& tw : *t) {
      if (!tw.is_string()) throw ParseError(uw + ": tweet must be a string");
      u.tweets.push_back(tw.get<std::string>());
    }
  }
  if (auto a = j.find("aux"); a != j.end() && !a->is_null()) {
    AuxCounts c{};
    if (a->is_array()) {
      if (a->size() != 4) throw ParseError(uw + ": aux array must have 4 entries");
      for (std::size_t i = 0; i < 4; ++i) c[i] = json_count((*a)[i], uw);
    } else if (a->is_object()) {
      static constexpr const char* kKeys[4] = {"followers", "friends", "statuses", "favorites"};
      for (std::size_t i = 0; i < 4; ++i) {
        auto f = a->find(kKeys[i]);
        if (f == a->end()) throw ParseError(uw + ": aux missing '" + kKeys[i] + "'");
        c[i] = json_count(*f, uw);
      }
    } else {
      throw ParseError(uw + ": aux must be an object or array");
    }
    u.aux = c;
  }
  if (auto l = j.find("label"); l != j.end() && !l->is_null()) {
    if (l->is_number_integer()) {
      u.label = parse_label_text(std::to_string(l->get<std::int64_t>()), uw);
    } else if (l->is_string()) {
      u.label = parse_label_text(l->get<std::string>(), uw);
    } else {
      throw ParseError(uw + ": label must be 0/1 or bot/human");
    }
  }
  return u;
}

Dataset load_jsonl(const fs::path& path) {
  auto is = open_in(path);
  Dataset ds;
  ds.name = path.stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed JSON (" + e.what() + ")");
    }
    ds.users.push_back(parse_jsonl_user(j, where));
  }
  return ds;
}

// ------------------------------------------------------------ Cresci CSV

struct HeaderIndex {
  std::map<std::string, std::size_t> cols;

  explicit HeaderIndex(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = header[i];
      std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
      // strip a UTF-8 BOM on the first column
      if (i == 0 && h.rfind("\xef\xbb\xbf", 0) == 0) h = h.substr(3);
      cols.emplace(h, i);
    }
  }
  std::optional<std::size_t> find(std::initializer_list<const char*> names) const {
    for (const char* n : names) {
      if (auto it = cols.find(n); it != cols.end()) return it->second;
    }
    return std::nullopt;
  }
};

const std::string& field_at(const detail::CsvRow& row, std::size_t col, const std::string& where) {
  if (col >= row.fields.size()) throw ParseError(where + ": row has too few columns");
  return row.fields[col];
}

Dataset load_cresci(const fs::path& dir) {
  const fs::path users_path = dir / "users.csv";
  const fs::path tweets_path = dir / "tweets.csv";
  Dataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();

  auto uis = open_in(users_path);
  auto urows = detail::read_csv(uis, users_path.string());
  if (urows.empty()) throw ParseError(users_path.string() + ": missing header");
  HeaderIndex uh(urows.front().fields);
  const auto id_col = uh.find({"user_id", "id"});
  if (!id_col) throw ParseError(users_path.string() + ": no user_id/id column");
  const std::optional<std::size_t> count_cols[4] = {
      uh.find({"followers_count"}), uh.find({"friends_count"}), uh.find({"statuses_count"}),
      uh.find({"favourites_count", "favorites_count"})};
  const bool any_count = std::any_of(std::begin(count_cols), std::end(count_cols),
                                     [](const auto& c) { return c.has_value(); });
  const bool all_count = std::all_of(std::begin(count_cols), std::end(count_cols),
                                     [](const auto& c) { return c.has_value(); });
  if (any_count && !all_count) {
    throw ParseError(users_path.string() + ": metadata columns must be all present or all absent");
  }
  const auto label_col = uh.find({"label"});

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t r = 1; r < urows.size(); ++r) {
    const auto& row = urows[r];
    const std::string where = users_path.string() + ":" + std::to_string(row.line);
    UserRecord u;
    u.user_id = field_at(row, *id_col, where);
    if (u.user_id.empty()) throw ParseError(where + ": empty user id");
    const std::string uw = where + " (user " + u.user_id + ")";
    if (all_count) {
      bool blank = true, filled = true;
      for (const auto& c : count_cols) {
        const bool e = field_at(row, *c, uw).empty();
        blank = blank && e;
        filled = filled && !e;
      }
      if (filled) {
        AuxCounts a{};
        for (std::size_t i = 0; i < 4; ++i) a[i] = parse_count(row.fields[*count_cols[i]], uw);
        u.aux = a;
      } else if (!blank) {
        throw ParseError(uw + ": partially filled metadata");
      }
    }
    if (label_col) u.label = parse_label_text(field_at(row, *label_col, uw), uw);
    pos.emplace(u.user_id, ds.users.size());
    ds.users.push_back(std::move(u));
  }

  if (fs::exists(tweets_path)) {
    auto tis = open_in(tweets_path);
    auto trows = detail::read_csv(tis, tweets_path.string());
    if (trows.empty()) throw ParseError(tweets_path.string() + ": missing header");
    HeaderIndex th(trows.front().fields);
    const auto tid = th.find({"user_id"});
    const auto ttext = th.find({"text"});
    if (!tid || !ttext) throw ParseError(tweets_path.string() + ": needs user_id and text columns");
    std::size_t orphans = 0;
    for (std::size_t r = 1; r < trows.size(); ++r) {
      const std::string where = tweets_path.string() + ":" + std::to_string(trows[r].line);
      const auto& id = field_at(trows[r], *tid, where);
      auto it = pos.find(id);
      if (it == pos.end()) {
        ++orphans;
        continue;
      }
      ds.users[it->second].tweets.push_back(field_at(trows[r], *ttext, where));
    }
    if (orphans > 0) {
      std::fprintf(stderr, "[ingest] warning: %zu tweets reference users absent from %s\n",
                   orphans, users_path.string().c_str());
    }
  }
  return ds;
}

// ------------------------------------------------------------- PAN XML

std::string decode_entities(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string ent = s.substr(i + 1, semi - i - 1);
    std::uint32_t cp = 0;
    bool known = true;
    if (ent == "amp") cp = '&';
    else if (ent == "lt") cp = '<';
    else if (ent == "gt") cp = '>';
    else if (ent == "quot") cp = '"';
    else if (ent == "apos") cp = '\'';
    else if (ent.size() > 1 && ent[0] == '#') {
      try {
        cp = (ent[1] == 'x' || ent[1] == 'X') ? std::stoul(ent.substr(2), nullptr, 16)
                                              : std::stoul(ent.substr(1), nullptr, 10);
      } catch (const std::exception&) {
        known = false;
      }
    } else {
      known = false;
    }
    if (!known || cp > 0x10FFFF) {
      out.push_back('&');
      continue;
    }
    // UTF-8 encode
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    i = semi;
  }
  return out;
}

std::vector<std::string> read_pan_documents(const fs::path& file) {
  auto is = open_in(file, std::ios::binary);
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string xml = buf.str();
  std::vector<std::string> docs;
  std::size_t p = 0;
  while (true) {
    auto open = xml.find("<document", p);
    if (open == std::string::npos) break;
    // skip <documents>
    const char after = open + 9 < xml.size() ? xml[open + 9] : '\0';
    if (after != '>' && after != ' ' && after != '/') {
      p = open + 9;
      continue;
    }
    auto gt = xml.find('>', open);
    if (gt == std::string::npos) throw ParseError(file.string() + ": unterminated <document> tag");
    if (xml[gt - 1] == '/') {  // <document/>
      docs.emplace_back();
      p = gt + 1;
      continue;
    }
    auto close = xml.find("</document>", gt);
    if (close == std::string::npos) throw ParseError(file.string() + ": missing </document>");
    std::string body = xml.substr(gt + 1, close - gt - 1);
    std::string text;
    std::size_t q = 0;
    while (q < body.size()) {
      auto cd = body.find("<![CDATA[", q);
      if (cd == std::string::npos) {
        text += decode_entities(body.substr(q));
        break;
      }
      text += decode_entities(body.substr(q, cd - q));
      auto cde = body.find("]]>", cd + 9);
      if (cde == std::string::npos) throw ParseError(file.string() + ": unterminated CDATA");
      text += body.substr(cd + 9, cde - cd - 9);
      q = cde + 3;
    }
    docs.push_back(std::move(text));
    p = close + 11;
  }
  return docs;
}

Dataset load_pan(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  Dataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();

  std::vector<std::string> xml_ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      xml_ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(xml_ids.begin(), xml_ids.end());
  std::unordered_set<std::string> xml_set(xml_ids.begin(), xml_ids.end());

  std::vector<std::pair<std::string, std::optional<Label>>> order;
  std::unordered_set<std::string> listed;
  const fs::path truth = dir / "truth.txt";
  if (fs::exists(truth)) {
    auto is = open_in(truth);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string where = truth.string() + ":" + std::to_string(lineno);
      const auto sep = line.find(":::");
      if (sep == std::string::npos) throw ParseError(where + ": expected id:::label[:::extra]");
      std::string id = line.substr(0, sep);
      std::string rest = line.substr(sep + 3);
      std::string label = rest.substr(0, rest.find(":::"));
      if (!xml_set.contains(id)) throw ParseError(where + ": no XML file for user " + id);
      order.emplace_back(id, parse_label_text(label, where));
      listed.insert(id);
    }
  }
  for (const auto& id : xml_ids) {
    if (!listed.contains(id)) order.emplace_back(id, std::nullopt);
  }
  for (auto& [id, label] : order) {
    UserRecord u;
    u.user_id = id;
    u.tweets = read_pan_documents(dir / (id + ".xml"));
    u.label = label;
    ds.users.push_back(std::move(u));
  }
  return ds;
}

}  // namespace

void finalize_dataset(Dataset& ds) {
  std::unordered_set<std::string> seen;
  std::size_t with_aux = 0, with_label = 0;
  for (const auto& u : ds.users) {
    if (u.user_id.empty()) throw ParseError("dataset " + ds.name + ": empty user_id");
    if (!seen.insert(u.user_id).second) {
      throw DuplicateUser("dataset " + ds.name + ": duplicate user_id " + u.user_id);
    }
    with_aux += u.aux.has_value();
    with_label += u.label.has_value();
  }
  if (with_aux != 0 && with_aux != ds.users.size()) {
    const auto it = std::find_if(ds.users.begin(), ds.users.end(),
                                 [&](const UserRecord& u) { return !u.aux.has_value(); });
    throw MixedMetadata("dataset " + ds.name + ": metadata present for " +
                        std::to_string(with_aux) + " of " + std::to_string(ds.users.size()) +
                        " users (first without: " + it->user_id + ")");
  }
  ds.has_aux = !ds.users.empty() && with_aux == ds.users.size();
  ds.has_labels = !ds.users.empty() && with_label == ds.users.size();
}

Dataset load_dataset(const fs::path& path, DatasetFormat format) {
  if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path.string());
  Dataset ds;
  switch (format) {
    case DatasetFormat::kJsonl: ds = load_jsonl(path); break;
    case DatasetFormat::kCresciCsv: ds = load_cresci(path); break;
    case DatasetFormat::kPanXmlDir: ds = load_pan(path); break;
  }
  finalize_dataset(ds);
  return ds;
}

// --------------------------------------------------------- EmbeddingStore

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DimensionError("embedding dim must be positive");
}

void EmbeddingStore::put(const std::string& user_id, EmbeddingMatrix m) {
  if (m.cols != dim_) {
    throw DimensionError("embedding for " + user_id + " has " + std::to_string(m.cols) +
                         " columns, store dim is " + std::to_string(dim_));
  }
  if (m.values.size() != m.rows * m.cols) {
    throw DimensionError("embedding for " + user_id + " has inconsistent value count");
  }
  for (float v : m.values) {
    if (!std::isfinite(v)) throw DataError("non-finite embedding value for user " + user_id);
  }
  if (auto it = index_.find(user_id); it != index_.end()) {
    mats_[it->second] = std::move(m);
    return;
  }
  index_.emplace(user_id, ids_.size());
  ids_.push_back(user_id);
  mats_.push_back(std::move(m));
}

bool EmbeddingStore::contains(const std::string& user_id) const { return index_.contains(user_id); }

const EmbeddingMatrix& EmbeddingStore::at(const std::string& user_id) const {
  return mats_.at(index_.at(user_id));
}

bool EmbeddingStore::bit_equal(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || ids_ != other.ids_) return false;
  for (std::size_t i = 0; i < mats_.size(); ++i) {
    const auto& a = mats_[i];
    const auto& b = other.mats_[i];
    if (a.rows != b.rows || a.cols != b.cols) return false;
    if (!a.values.empty() &&
        std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

namespace {
constexpr char kEmbeddingMagic[4] = {'R', 'G', 'B', 'E'};
constexpr std::uint16_t kEmbeddingVersion = 1;
}  // namespace

EmbeddingStore read_embeddings(const fs::path& path) {
  auto is = open_in(path, std::ios::binary);
  const std::string what = path.string();
  detail::LeReader r(is, what);
  char magic[4];
  try {
    r.read_raw(magic, 4);
  } catch (const FormatError&) {
    throw FormatError(what + ": bad magic (file too short)");
  }
  if (std::memcmp(magic, kEmbeddingMagic, 4) != 0) throw FormatError(what + ": bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kEmbeddingVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dim == 0) throw FormatError(what + ": dim is zero");
  EmbeddingStore store(dim);
  for (std::uint64_t u = 0; u < count; ++u) {
    const auto id_len = r.get<std::uint16_t>();
    std::string id = r.get_bytes(id_len);
    const auto n = r.get<std::uint32_t>();
    EmbeddingMatrix m;
    m.rows = n;
    m.cols = dim;
    m.values.resize(static_cast<std::size_t>(n) * dim);
    for (auto& v : m.values) {
      v = r.get_f32();
      if (!std::isfinite(v)) throw DataError(what + ": non-finite value for user " + id);
    }
    if (store.contains(id)) throw FormatError(what + ": duplicate user " + id);
    store.put(id, std::move(m));
  }
  if (!r.at_eof()) throw FormatError(what + ": trailing bytes after last user");
  return store;
}

void write_embeddings(const EmbeddingStore& store, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kEmbeddingMagic, 4);
  detail::put_le<std::uint16_t>(os, kEmbeddingVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.dim()));
  detail::put_le<std::uint64_t>(os, store.size());
  for (const auto& id : store.ids()) {
    if (id.size() > 0xffff) throw FormatError("user id too long for RGBE: " + id.substr(0, 32));
    const auto& m = store.at(id);
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(id.size()));
    detail::put_bytes(os, id);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows));
    for (float v : m.values) detail::put_f32(os, v);
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

// -------------------------------------------------------------- validation

ValidationReport validate_dataset(const Dataset& ds, const EmbeddingStore& es) {
  ValidationReport rep;
  rep.dim = es.dim();
  for (const auto& u : ds.users) {
    if (!es.contains(u.user_id)) {
      rep.missing.push_back(u.user_id);
    } else if (es.at(u.user_id).rows == 0) {
      rep.zero_tweet.push_back(u.user_id);
    }
  }
  rep.ok = rep.missing.empty() && rep.zero_tweet.empty();
  return rep;
}

std::string ValidationReport::describe() const {
  std::ostringstream os;
  os << (ok ? "ok" : "FAILED") << ": dim=" << dim << ", missing=" << missing.size()
     << ", zero_tweet=" << zero_tweet.size();
  auto list = [&](const char* label, const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    os << "\n  " << label << ":";
    for (std::size_t i = 0; i < ids.size() && i < 20; ++i) os << ' ' << ids[i];
    if (ids.size() > 20) os << " ... (" << ids.size() - 20 << " more)";
  };
  list("missing from embeddings", missing);
  list("zero tweets", zero_tweet);
  return os.str();
}

}  // namespace botgraph
