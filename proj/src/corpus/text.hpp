#pragma once

#include <string>
#include <vector>

namespace cantm::corpus {

// Splits on whitespace, keeping each word verbatim. These are the "source
// words" that saliency scores and rationale highlighting operate on.
std::vector<std::string> whitespace_words(const std::string& text);

// Normalizes a word or a full text for bag-of-words purposes: lowercase,
// split on non-alphanumeric characters, strip digits, drop empty tokens and
// stopwords.
std::vector<std::string> bow_tokens(const std::string& text);

bool is_stopword(const std::string& lowercase_word);

std::string to_lower(const std::string& s);

}  // namespace cantm::corpus
