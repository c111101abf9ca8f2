#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cantm::backbone {

// A tokenized input: piece ids with the classification piece prepended and
// the terminator appended, plus an alignment from piece position to source
// word index (-1 for the two special positions).
struct TokenSequence {
  std::vector<int> piece_ids;
  std::vector<int> word_index;
  int word_count = 0;  // source words covered after truncation
  bool truncated = false;

  int length() const { return static_cast<int>(piece_ids.size()); }
};

// Greedy longest-match wordpiece tokenizer. Continuation pieces carry the
// "##" prefix. Source words are whitespace-separated and lowercased before
// matching; a word with no matching prefix piece becomes a single [UNK].
class WordPieceTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  // `pieces` is the full lexicon including the four specials at indices 0-3.
  explicit WordPieceTokenizer(std::vector<std::string> pieces);

  // Specials plus single characters a-z, 0-9 and their "##" continuations.
  // Every word tokenizes without [UNK] fallbacks as long as it is
  // alphanumeric; extra whole-word pieces can be appended for tests.
  static WordPieceTokenizer char_fallback(
      const std::vector<std::string>& extra_words = {});

  TokenSequence tokenize(const std::string& text, int limit) const;

  int piece_count() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }

  // Newline-joined lexicon, for embedding into weight archives.
  std::string serialize() const;
  static WordPieceTokenizer deserialize(const std::string& blob);

  // Cumulative count of tokenize() calls that hit the truncation limit.
  long long truncation_count() const { return truncations_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_piece_len_ = 0;
  mutable long long truncations_ = 0;
};

}  // namespace cantm::backbone
