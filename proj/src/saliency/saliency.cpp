#include "saliency/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "corpus/text.hpp"

namespace cantm::saliency {

bool RationaleSet::contains(int pos) const {
  return std::binary_search(positions.begin(), positions.end(), pos);
}

SaliencyScores saliency_from_attention(
    const std::vector<core::Tensor>& attention,
    const backbone::TokenSequence& tokens) {
  if (attention.empty()) throw std::runtime_error("saliency: no attention");
  const int S = tokens.length();
  for (const auto& head : attention) {
    if (head.rows != S || head.cols != S)
      throw std::runtime_error("saliency: attention shape mismatch");
  }
  if (tokens.word_count == 0)
    throw std::runtime_error("saliency: sequence has no non-special pieces");

  // Head-averaged classification-row attention per piece.
  std::vector<double> piece_scores(S, 0.0);
  for (const auto& head : attention)
    for (int j = 0; j < S; ++j) piece_scores[j] += head.at(0, j);
  for (double& s : piece_scores) s /= static_cast<double>(attention.size());

  SaliencyScores out;
  out.scores.assign(tokens.word_count, 0.0);
  std::vector<int> pieces_per_word(tokens.word_count, 0);
  for (int j = 0; j < S; ++j) {
    const int w = tokens.word_index[j];
    if (w < 0) continue;
    out.scores[w] += piece_scores[j];
    pieces_per_word[w]++;
  }
  for (int w = 0; w < tokens.word_count; ++w) {
    if (pieces_per_word[w] == 0)
      throw std::runtime_error("saliency: word with no pieces");
    out.scores[w] /= pieces_per_word[w];
  }
  return out;
}

RationaleSet select_rationales(const SaliencyScores& scores, double ratio) {
  if (ratio <= 0.0 || ratio > 1.0)
    throw std::runtime_error("rationale ratio must be in (0, 1]");
  const int n = scores.word_count();
  if (n == 0) throw std::runtime_error("select_rationales: empty scores");
  const int k = std::max(1, static_cast<int>(std::ceil(ratio * n)));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores.scores[a] > scores.scores[b];
  });
  RationaleSet r;
  r.ratio = ratio;
  r.k = std::min(k, n);
  r.positions.assign(order.begin(), order.begin() + r.k);
  std::sort(r.positions.begin(), r.positions.end());
  return r;
}

TargetVector rationale_target(const corpus::Document& doc,
                              const RationaleSet& rset,
                              const SaliencyScores& scores,
                              const corpus::Vocabulary& vocab) {
  const auto words = corpus::whitespace_words(doc.text);
  TargetVector t;
  t.weights.assign(vocab.size(), 0.0);
  double total = 0.0;
  for (int pos : rset.positions) {
    if (pos < 0 || pos >= static_cast<int>(words.size()))
      throw std::runtime_error("rationale position out of range");
    const double s = scores.scores.at(pos);
    for (const auto& tok : corpus::bow_tokens(words[pos])) {
      int idx = vocab.lookup(tok);
      if (idx >= 0) {
        t.weights[idx] += s;
        total += s;
      }
    }
  }
  if (total <= 0.0) {
    t.is_empty = true;
    return t;
  }
  for (double& w : t.weights) w /= total;
  return t;
}

std::string highlight(const corpus::Document& doc, const RationaleSet& rset,
                      HighlightFormat format) {
  const auto words = corpus::whitespace_words(doc.text);
  const char* open = format == HighlightFormat::html ? "<mark>" : "\x1b[31m";
  const char* close = format == HighlightFormat::html ? "</mark>" : "\x1b[0m";
  std::string out;
  for (int w = 0; w < static_cast<int>(words.size()); ++w) {
    if (w > 0) out += ' ';
    if (rset.contains(w)) {
      out += open;
      out += words[w];
      out += close;
    } else {
      out += words[w];
    }
  }
  return out;
}

}  // namespace cantm::saliency
