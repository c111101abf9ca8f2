#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"

namespace cantm::corpus {

// Class indices. The six ACLED conflict types in Table-1 order, plus the
// out-of-domain class.
enum ClassId : int {
  kBattles = 0,
  kExplosions = 1,
  kProtests = 2,
  kRiots = 3,
  kStrategic = 4,
  kViolence = 5,
  kOutOfDomain = 6,
  kNumClasses = 7,
};

const std::vector<std::string>& class_names();
// Maps an ACLED event-type string to a class index; nullopt if unknown.
std::optional<int> class_from_event_type(const std::string& event_type);

enum class Split : int { unassigned = -1, train = 0, valid = 1, test = 2 };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Document {
  std::string id;
  std::string text;
  int label = -1;
  Split split = Split::unassigned;
};

// Immutable after construction. Ids are unique; texts are non-empty after
// trimming; labels are in range.
class DocumentSet {
 public:
  DocumentSet() = default;
  explicit DocumentSet(std::vector<Document> docs);

  const std::vector<Document>& docs() const { return docs_; }
  std::vector<Document>& mutable_docs() { return docs_; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }

  // Per-class document counts, length kNumClasses.
  std::vector<int> class_counts() const;
  // counts[label][split] with split in {train, valid, test}.
  std::vector<std::array<int, 3>> split_counts() const;

  void append(const DocumentSet& other);

 private:
  void validate() const;
  std::vector<Document> docs_;
};

struct SplitSpec {
  double train_ratio = 7.0;
  double valid_ratio = 1.0;
  double test_ratio = 2.0;
  std::uint64_t seed = 0;
};

// Per-class split sizes under the documented rounding: valid takes the
// ceiling of its quota, test the floor, and train the remainder
// (108,861 -> 76,202 / 10,887 / 21,772 at 7:1:2).
struct SplitSizes {
  int train = 0;
  int valid = 0;
  int test = 0;
};
SplitSizes split_sizes(int n, const SplitSpec& spec);

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(int index) const { return words_.at(index); }
  // Returns -1 when the word is out of vocabulary.
  int lookup(const std::string& word) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct BowVector {
  std::vector<double> counts;
  bool is_empty() const {
    for (double c : counts)
      if (c != 0.0) return false;
    return true;
  }
  double total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
  }
};

struct IngestOptions {
  std::string event_type_column = "event_type";
  std::string notes_column = "notes";
  std::string date_column = "event_date";
  std::string date_start;  // inclusive, ISO yyyy-mm-dd; empty = no bound
  std::string date_end;    // inclusive
  double protests_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct IngestStats {
  int rows_read = 0;
  int rows_skipped = 0;
  int protests_before_subsample = 0;
};

// Reads a delimited ACLED export and returns one labeled document per
// retained record. Protests rows are subsampled to round(fraction * count)
// via a seeded shuffle; other classes are kept in full.
DocumentSet ingest_acled(const std::string& path, const IngestOptions& opts,
                         IngestStats* stats = nullptr);

// Reads one text per line and returns `count` out-of-domain documents chosen
// by seeded sampling without replacement (original order preserved).
DocumentSet ingest_out_of_domain(const std::string& path, int count,
                                 std::uint64_t seed);

// Assigns splits stratified per class. All documents must be unassigned and
// every class present must have at least 3 documents.
void assign_splits(DocumentSet& docs, const SplitSpec& spec);

// Builds the vocabulary from the train split only: bow-normalized tokens,
// the `size` most frequent kept, ties broken lexicographically. Returns a
// smaller vocabulary (and sets *truncated_warning) when fewer distinct words
// exist.
Vocabulary build_vocabulary(const DocumentSet& docs, int size,
                            bool* truncated_warning = nullptr);

BowVector to_bow(const Document& doc, const Vocabulary& vocab);

// Corpus manifest on disk: <dir>/corpus.jsonl (JSON header line followed by
// one record per document) and <dir>/vocab.txt.
struct CorpusManifest {
  DocumentSet docs;
  Vocabulary vocab;
  std::uint64_t seed = 0;
};
void save_manifest(const CorpusManifest& m, const std::string& dir);
CorpusManifest load_manifest(const std::string& dir);

}  // namespace cantm::corpus
