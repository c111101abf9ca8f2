#pragma once

#include <string>
#include <vector>

#include "backbone/tokenizer.hpp"
#include "core/tensor.hpp"
#include "corpus/corpus.hpp"

namespace cantm::saliency {

// One non-negative score per covered source word.
struct SaliencyScores {
  std::vector<double> scores;
  int word_count() const { return static_cast<int>(scores.size()); }
};

struct RationaleSet {
  std::vector<int> positions;  // selected word indices, ascending
  double ratio = 0.0;
  int k = 0;

  bool contains(int pos) const;
};

// Vocabulary-space reconstruction target built from rationale saliency.
struct TargetVector {
  std::vector<double> weights;  // length V; sums to 1 unless is_empty
  bool is_empty = false;
};

// Classification-position attention averaged over heads, special positions
// dropped, then averaged over each word's pieces.
SaliencyScores saliency_from_attention(
    const std::vector<core::Tensor>& attention,
    const backbone::TokenSequence& tokens);

// Top k = max(1, ceil(ratio * word_count)) positions; ties broken by the
// earlier position.
RationaleSet select_rationales(const SaliencyScores& scores, double ratio);

// Adds each in-vocabulary rationale word's saliency to its vocabulary entry
// and renormalizes. All-OOV rationales yield is_empty; the caller falls back
// to the full bag-of-words distribution.
TargetVector rationale_target(const corpus::Document& doc,
                              const RationaleSet& rset,
                              const SaliencyScores& scores,
                              const corpus::Vocabulary& vocab);

enum class HighlightFormat { ansi, html };

// Document text with rationale words wrapped in markup, everything else
// verbatim (whitespace normalized to single spaces).
std::string highlight(const corpus::Document& doc, const RationaleSet& rset,
                      HighlightFormat format);

}  // namespace cantm::saliency
