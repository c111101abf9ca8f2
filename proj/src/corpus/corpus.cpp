#include "corpus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "corpus/text.hpp"

namespace cantm::corpus {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// RFC 4180-style CSV reader: quoted fields may contain commas, quotes
// (doubled) and newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& is) : is_(is) {}

  bool next_record(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int ch;
    while ((ch = is_.get()) != EOF) {
      any = true;
      char c = static_cast<char>(ch);
      if (in_quotes) {
        if (c == '"') {
          if (is_.peek() == '"') {
            field.push_back('"');
            is_.get();
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(c);
        }
      } else if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(field);
        field.clear();
      } else if (c == '\r') {
        // swallow; handled with the following \n or end of record
      } else if (c == '\n') {
        fields.push_back(field);
        return true;
      } else {
        field.push_back(c);
      }
    }
    if (!any) return false;
    fields.push_back(field);
    return true;
  }

 private:
  std::istream& is_;
};

// Accepts "yyyy-mm-dd" and "dd Month yyyy" (the two common ACLED export
// forms); returns a comparable yyyymmdd integer.
std::optional<int> parse_date(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (s.size() >= 10 && s[4] == '-' && s[7] == '-') {
    y = std::atoi(s.substr(0, 4).c_str());
    m = std::atoi(s.substr(5, 2).c_str());
    d = std::atoi(s.substr(8, 2).c_str());
  } else {
    static const std::map<std::string, int> kMonths = {
        {"january", 1}, {"february", 2}, {"march", 3},     {"april", 4},
        {"may", 5},     {"june", 6},     {"july", 7},      {"august", 8},
        {"september", 9}, {"october", 10}, {"november", 11}, {"december", 12}};
    std::istringstream iss(s);
    std::string ds, ms, ys;
    iss >> ds >> ms >> ys;
    auto it = kMonths.find(to_lower(ms));
    if (it == kMonths.end()) return std::nullopt;
    d = std::atoi(ds.c_str());
    m = it->second;
    y = std::atoi(ys.c_str());
  }
  if (y < 1900 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  return y * 10000 + m * 100 + d;
}

}  // namespace

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> kNames = {
      "Battles",
      "Explosions/Remote violence",
      "Protests",
      "Riots",
      "Strategic developments",
      "Violence against civilians",
      "Out of domain"};
  return kNames;
}

std::optional<int> class_from_event_type(const std::string& event_type) {
  const std::string key = to_lower(trim(event_type));
  static const std::map<std::string, int> kMap = {
      {"battles", kBattles},
      {"explosions/remote violence", kExplosions},
      {"protests", kProtests},
      {"riots", kRiots},
      {"strategic developments", kStrategic},
      {"violence against civilians", kViolence}};
  auto it = kMap.find(key);
  if (it == kMap.end()) return std::nullopt;
  return it->second;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    default: return "unassigned";
  }
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  if (name == "unassigned") return Split::unassigned;
  throw std::runtime_error("unknown split name: " + name);
}

DocumentSet::DocumentSet(std::vector<Document> docs) : docs_(std::move(docs)) {
  validate();
}

void DocumentSet::validate() const {
  std::set<std::string> ids;
  for (const Document& d : docs_) {
    if (trim(d.text).empty())
      throw std::runtime_error("document '" + d.id + "' has empty text");
    if (d.label < 0 || d.label >= kNumClasses)
      throw std::runtime_error("document '" + d.id + "' has label out of range");
    if (!ids.insert(d.id).second)
      throw std::runtime_error("duplicate document id '" + d.id + "'");
  }
}

std::vector<int> DocumentSet::class_counts() const {
  std::vector<int> counts(kNumClasses, 0);
  for (const Document& d : docs_) counts[d.label]++;
  return counts;
}

std::vector<std::array<int, 3>> DocumentSet::split_counts() const {
  std::vector<std::array<int, 3>> counts(kNumClasses, {0, 0, 0});
  for (const Document& d : docs_) {
    if (d.split != Split::unassigned)
      counts[d.label][static_cast<int>(d.split)]++;
  }
  return counts;
}

void DocumentSet::append(const DocumentSet& other) {
  docs_.insert(docs_.end(), other.docs_.begin(), other.docs_.end());
  validate();
}

SplitSizes split_sizes(int n, const SplitSpec& spec) {
  const double total = spec.train_ratio + spec.valid_ratio + spec.test_ratio;
  if (total <= 0.0) throw std::runtime_error("split ratios must sum > 0");
  SplitSizes s;
  s.valid = static_cast<int>(std::ceil(n * spec.valid_ratio / total));
  s.test = static_cast<int>(std::floor(n * spec.test_ratio / total));
  s.train = n - s.valid - s.test;
  if (s.train < 0)
    throw std::runtime_error("split ratios leave no room for train split");
  return s;
}

Vocabulary::Vocabulary(std::vector<std::string> words)
    : words_(std::move(words)) {
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) {
    if (!index_.emplace(words_[i], i).second)
      throw std::runtime_error("vocabulary contains duplicate word '" +
                               words_[i] + "'");
  }
}

int Vocabulary::lookup(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write vocabulary: " + path);
  for (const auto& w : words_) os << w << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read vocabulary: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

DocumentSet ingest_acled(const std::string& path, const IngestOptions& opts,
                         IngestStats* stats) {
  if (opts.protests_fraction <= 0.0 || opts.protests_fraction > 1.0)
    throw std::runtime_error("protests_fraction must be in (0, 1]");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open ACLED export: " + path);

  CsvReader reader(is);
  std::vector<std::string> header;
  if (!reader.next_record(header) || header.empty())
    throw std::runtime_error("ACLED export is empty: " + path);

  auto column = [&](const std::string& name) -> int {
    for (int i = 0; i < static_cast<int>(header.size()); ++i)
      if (trim(header[i]) == name) return i;
    return -1;
  };
  const int type_col = column(opts.event_type_column);
  const int notes_col = column(opts.notes_column);
  if (type_col < 0)
    throw std::runtime_error("ACLED export missing column '" +
                             opts.event_type_column + "'");
  if (notes_col < 0)
    throw std::runtime_error("ACLED export missing column '" +
                             opts.notes_column + "'");
  int date_col = -1;
  std::optional<int> lo, hi;
  if (!opts.date_start.empty()) lo = parse_date(opts.date_start);
  if (!opts.date_end.empty()) hi = parse_date(opts.date_end);
  if (lo || hi) {
    date_col = column(opts.date_column);
    if (date_col < 0)
      throw std::runtime_error("ACLED export missing column '" +
                               opts.date_column + "' needed for date filter");
  }

  IngestStats local;
  std::vector<Document> docs;
  std::vector<std::string> fields;
  int row = 0;
  while (reader.next_record(fields)) {
    ++row;
    local.rows_read++;
    const int needed = std::max({type_col, notes_col, date_col});
    if (static_cast<int>(fields.size()) <= needed) {
      local.rows_skipped++;
      continue;
    }
    auto label = class_from_event_type(fields[type_col]);
    std::string text = trim(fields[notes_col]);
    if (!label || text.empty()) {
      local.rows_skipped++;
      continue;
    }
    if (date_col >= 0) {
      auto d = parse_date(fields[date_col]);
      if (!d) {
        local.rows_skipped++;
        continue;
      }
      if ((lo && *d < *lo) || (hi && *d > *hi)) continue;
    }
    Document doc;
    doc.id = "acled-" + std::to_string(row);
    doc.text = std::move(text);
    doc.label = *label;
    docs.push_back(std::move(doc));
  }

  // Seeded subsampling of the Protests class to round(fraction * count).
  std::vector<int> protests;
  for (int i = 0; i < static_cast<int>(docs.size()); ++i)
    if (docs[i].label == kProtests) protests.push_back(i);
  local.protests_before_subsample = static_cast<int>(protests.size());
  if (opts.protests_fraction < 1.0 && !protests.empty()) {
    const int keep = static_cast<int>(
        std::llround(opts.protests_fraction * protests.size()));
    core::Rng rng(opts.seed);
    rng.shuffle(protests);
    protests.resize(std::max(keep, 0));
    std::set<int> kept(protests.begin(), protests.end());
    std::vector<Document> filtered;
    filtered.reserve(docs.size());
    for (int i = 0; i < static_cast<int>(docs.size()); ++i) {
      if (docs[i].label != kProtests || kept.count(i))
        filtered.push_back(std::move(docs[i]));
    }
    docs = std::move(filtered);
  }

  if (stats) *stats = local;
  if (docs.empty())
    throw std::runtime_error("ACLED ingestion produced no documents from " +
                             path);
  return DocumentSet(std::move(docs));
}

DocumentSet ingest_out_of_domain(const std::string& path, int count,
                                 std::uint64_t seed) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open out-of-domain input: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  if (count > static_cast<int>(lines.size()))
    throw std::runtime_error(
        "requested " + std::to_string(count) + " out-of-domain texts but only " +
        std::to_string(lines.size()) + " are available in " + path);
  std::vector<int> idx(lines.size());
  for (int i = 0; i < static_cast<int>(idx.size()); ++i) idx[i] = i;
  core::Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::max(count, 0));
  std::sort(idx.begin(), idx.end());
  std::vector<Document> docs;
  docs.reserve(idx.size());
  for (int i : idx) {
    Document d;
    d.id = "ood-" + std::to_string(i + 1);
    d.text = lines[i];
    d.label = kOutOfDomain;
    docs.push_back(std::move(d));
  }
  return DocumentSet(std::move(docs));
}

void assign_splits(DocumentSet& set, const SplitSpec& spec) {
  auto& docs = set.mutable_docs();
  for (const Document& d : docs)
    if (d.split != Split::unassigned)
      throw std::runtime_error("document '" + d.id + "' already has a split");

  std::vector<std::vector<int>> by_class(kNumClasses);
  for (int i = 0; i < static_cast<int>(docs.size()); ++i)
    by_class[docs[i].label].push_back(i);

  core::Rng base(spec.seed);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 3)
      throw std::runtime_error("class '" + class_names()[c] + "' has only " +
                               std::to_string(members.size()) +
                               " documents; cannot stratify");
    SplitSizes sizes = split_sizes(static_cast<int>(members.size()), spec);
    core::Rng rng = base.fork(static_cast<std::uint64_t>(c) + 1);
    rng.shuffle(members);
    int pos = 0;
    for (int k = 0; k < sizes.train; ++k) docs[members[pos++]].split = Split::train;
    for (int k = 0; k < sizes.valid; ++k) docs[members[pos++]].split = Split::valid;
    for (int k = 0; k < sizes.test; ++k) docs[members[pos++]].split = Split::test;
  }
}

Vocabulary build_vocabulary(const DocumentSet& docs, int size,
                            bool* truncated_warning) {
  if (size <= 0) throw std::runtime_error("vocabulary size must be positive");
  std::map<std::string, long long> freq;
  bool any_train = false;
  for (const Document& d : docs.docs()) {
    if (d.split != Split::train) continue;
    any_train = true;
    for (const auto& tok : bow_tokens(d.text)) freq[tok]++;
  }
  if (!any_train)
    throw std::runtime_error("build_vocabulary: no documents in train split");

  std::vector<std::pair<std::string, long long>> ranked(freq.begin(),
                                                        freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (truncated_warning)
    *truncated_warning = static_cast<int>(ranked.size()) < size;
  std::vector<std::string> words;
  words.reserve(std::min<std::size_t>(ranked.size(), size));
  for (const auto& [w, n] : ranked) {
    if (static_cast<int>(words.size()) >= size) break;
    words.push_back(w);
  }
  return Vocabulary(std::move(words));
}

BowVector to_bow(const Document& doc, const Vocabulary& vocab) {
  BowVector bow;
  bow.counts.assign(vocab.size(), 0.0);
  for (const auto& tok : bow_tokens(doc.text)) {
    int idx = vocab.lookup(tok);
    if (idx >= 0) bow.counts[idx] += 1.0;
  }
  return bow;
}

void save_manifest(const CorpusManifest& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string corpus_path = dir + "/corpus.jsonl";
  std::ofstream os(corpus_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write corpus manifest: " + corpus_path);

  json header;
  header["seed"] = m.seed;
  json counts = json::object();
  auto sc = m.docs.split_counts();
  auto cc = m.docs.class_counts();
  for (int c = 0; c < kNumClasses; ++c) {
    counts[class_names()[c]] = {{"train", sc[c][0]},
                                {"valid", sc[c][1]},
                                {"test", sc[c][2]},
                                {"total", cc[c]}};
  }
  header["counts"] = counts;
  header["vocab"] = {{"size", m.vocab.size()}, {"file", "vocab.txt"}};
  os << header.dump() << '\n';
  for (const Document& d : m.docs.docs()) {
    json rec = {{"id", d.id},
                {"label", d.label},
                {"split", split_name(d.split)},
                {"text", d.text}};
    os << rec.dump() << '\n';
  }
  m.vocab.save(dir + "/vocab.txt");
}

CorpusManifest load_manifest(const std::string& dir) {
  const std::string corpus_path = dir + "/corpus.jsonl";
  std::ifstream is(corpus_path);
  if (!is) throw std::runtime_error("cannot read corpus manifest: " + corpus_path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("corpus manifest is empty: " + corpus_path);
  json header = json::parse(line);
  CorpusManifest m;
  m.seed = header.value("seed", 0ULL);
  std::vector<Document> docs;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    json rec = json::parse(line);
    Document d;
    d.id = rec.at("id").get<std::string>();
    d.label = rec.at("label").get<int>();
    d.split = split_from_name(rec.at("split").get<std::string>());
    d.text = rec.at("text").get<std::string>();
    docs.push_back(std::move(d));
  }
  m.docs = DocumentSet(std::move(docs));
  m.vocab = Vocabulary::load(dir + "/vocab.txt");
  return m;
}

}  // namespace cantm::corpus
