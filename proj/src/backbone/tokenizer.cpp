#include "backbone/tokenizer.hpp"

#include <sstream>
#include <stdexcept>

#include "corpus/text.hpp"

namespace cantm::backbone {

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> pieces)
    : pieces_(std::move(pieces)) {
  if (pieces_.size() < 4 || pieces_[kPad] != "[PAD]" ||
      pieces_[kCls] != "[CLS]" || pieces_[kSep] != "[SEP]" ||
      pieces_[kUnk] != "[UNK]")
    throw std::runtime_error(
        "tokenizer lexicon must start with [PAD] [CLS] [SEP] [UNK]");
  for (int i = 0; i < static_cast<int>(pieces_.size()); ++i) {
    if (!index_.emplace(pieces_[i], i).second)
      throw std::runtime_error("duplicate piece '" + pieces_[i] + "'");
    max_piece_len_ = std::max(max_piece_len_, pieces_[i].size());
  }
}

WordPieceTokenizer WordPieceTokenizer::char_fallback(
    const std::vector<std::string>& extra_words) {
  std::vector<std::string> pieces = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
  for (char c = 'a'; c <= 'z'; ++c) pieces.push_back(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) pieces.push_back(std::string(1, c));
  for (char c = 'a'; c <= 'z'; ++c) pieces.push_back("##" + std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) pieces.push_back("##" + std::string(1, c));
  for (const auto& w : extra_words) pieces.push_back(w);
  return WordPieceTokenizer(std::move(pieces));
}

TokenSequence WordPieceTokenizer::tokenize(const std::string& text,
                                           int limit) const {
  if (limit < 3) throw std::runtime_error("tokenize: limit must be >= 3");
  const auto words = corpus::whitespace_words(text);
  if (words.empty()) throw std::runtime_error("tokenize: empty text");

  TokenSequence seq;
  seq.piece_ids.push_back(kCls);
  seq.word_index.push_back(-1);
  const int body_limit = limit - 1;  // room for the trailing [SEP]

  for (int w = 0; w < static_cast<int>(words.size()); ++w) {
    if (seq.length() >= body_limit) {
      seq.truncated = true;
      break;
    }
    const std::string word = corpus::to_lower(words[w]);
    std::vector<int> word_pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < word.size()) {
      std::size_t best_len = 0;
      int best_id = -1;
      const std::string prefix = start == 0 ? "" : "##";
      std::size_t cap = std::min(word.size() - start,
                                 max_piece_len_ > prefix.size()
                                     ? max_piece_len_ - prefix.size()
                                     : std::size_t{1});
      for (std::size_t len = cap; len >= 1; --len) {
        auto it = index_.find(prefix + word.substr(start, len));
        if (it != index_.end()) {
          best_len = len;
          best_id = it->second;
          break;
        }
      }
      if (best_id < 0) {
        bad = true;
        break;
      }
      word_pieces.push_back(best_id);
      start += best_len;
    }
    if (bad) word_pieces = {kUnk};
    bool any = false;
    for (int id : word_pieces) {
      if (seq.length() >= body_limit) {
        seq.truncated = true;
        break;
      }
      seq.piece_ids.push_back(id);
      seq.word_index.push_back(w);
      any = true;
    }
    if (any) seq.word_count = w + 1;
  }

  seq.piece_ids.push_back(kSep);
  seq.word_index.push_back(-1);
  if (seq.truncated) ++truncations_;
  return seq;
}

std::string WordPieceTokenizer::serialize() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p;
    out += '\n';
  }
  return out;
}

WordPieceTokenizer WordPieceTokenizer::deserialize(const std::string& blob) {
  std::vector<std::string> pieces;
  std::istringstream is(blob);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) pieces.push_back(line);
  }
  return WordPieceTokenizer(std::move(pieces));
}

}  // namespace cantm::backbone
