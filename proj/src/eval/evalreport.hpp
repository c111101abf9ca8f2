#pragma once

#include <string>
#include <utility>
#include <vector>

#include "corpus/corpus.hpp"
#include "model/model.hpp"
#include "saliency/saliency.hpp"

namespace cantm::eval {

struct Metrics {
  double accuracy = 0.0;
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::vector<long long>> confusion;  // [true][predicted]
  long long total = 0;
};

// Accuracy and F1 derived purely from a confusion matrix.
Metrics metrics_from_confusion(
    const std::vector<std::vector<long long>>& confusion);

// Runs the model over the given split (argmax of the M1 classifier) and
// builds the confusion matrix. Errors on an empty document selection.
Metrics evaluate(const model::Model& m, const corpus::DocumentSet& docs,
                 corpus::Split split);

int predict(const model::Model& m, const corpus::Document& doc,
            core::Tensor* probs_out = nullptr);

struct TopicTable {
  // One ranked (word, score) list per class; empty when the class had no
  // validation documents.
  std::vector<std::vector<std::pair<std::string, double>>> rows;
};

// Class-conditional topics: mean latent z_s over validation documents
// predicted as each class, projected through the M2 decoder. The
// alternative extraction composes the M2 classifier weights with the
// decoder instead of using validation documents.
TopicTable extract_topics(const model::Model& m,
                          const corpus::DocumentSet& docs, int top_n,
                          bool classifier_weight_method = false);

struct ExplanationRecord {
  std::string doc_id;
  int predicted = -1;
  std::vector<double> class_probs;
  saliency::SaliencyScores scores;
  saliency::RationaleSet rationales;
  std::string html;
  std::string ansi;
};

ExplanationRecord explain(const model::Model& m, const corpus::Document& doc,
                          double ratio);

std::string metrics_to_json(const Metrics& m);
std::string topics_to_json(const TopicTable& t);
std::string explanation_to_json(const ExplanationRecord& r);

// Self-contained report with the metric table, per-class F1 table, topic
// table, and highlighted examples; HTML and markdown twins.
std::string report_html(const Metrics& metrics, const TopicTable& topics,
                        const std::vector<ExplanationRecord>& examples);
std::string report_markdown(const Metrics& metrics, const TopicTable& topics,
                            const std::vector<ExplanationRecord>& examples);

}  // namespace cantm::eval
