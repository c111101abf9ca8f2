#include "corpus/text.hpp"

#include <cctype>
#include <unordered_set>

namespace cantm::corpus {

namespace {

// Standard English stopword list (the common NLTK set).
const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kSet = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you",
      "your", "yours", "yourself", "yourselves", "he", "him", "his",
      "himself", "she", "her", "hers", "herself", "it", "its", "itself",
      "they", "them", "their", "theirs", "themselves", "what", "which",
      "who", "whom", "this", "that", "these", "those", "am", "is", "are",
      "was", "were", "be", "been", "being", "have", "has", "had", "having",
      "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if",
      "or", "because", "as", "until", "while", "of", "at", "by", "for",
      "with", "about", "against", "between", "into", "through", "during",
      "before", "after", "above", "below", "to", "from", "up", "down", "in",
      "out", "on", "off", "over", "under", "again", "further", "then",
      "once", "here", "there", "when", "where", "why", "how", "all", "any",
      "both", "each", "few", "more", "most", "other", "some", "such", "no",
      "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s",
      "t", "can", "will", "just", "don", "should", "now", "d", "ll", "m",
      "o", "re", "ve", "y", "ain", "aren", "couldn", "didn", "doesn",
      "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn", "needn",
      "shan", "shouldn", "wasn", "weren", "won", "wouldn"};
  return kSet;
}

}  // namespace

std::string to_lower(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

bool is_stopword(const std::string& lowercase_word) {
  return stopwords().count(lowercase_word) > 0;
}

std::vector<std::string> whitespace_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> bow_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty() && !is_stopword(cur)) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isdigit(c)) {
      // Numerals are stripped; they neither extend nor break a token, so
      // "covid19" normalizes to "covid" while "2022" vanishes.
      continue;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace cantm::corpus
