#include "eval/evalreport.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cantm::eval {

using core::Tape;
using core::Tensor;
using nlohmann::json;

Metrics metrics_from_confusion(
    const std::vector<std::vector<long long>>& confusion) {
  const int C = static_cast<int>(confusion.size());
  Metrics m;
  m.confusion = confusion;
  m.per_class_f1.assign(C, 0.0);
  long long correct = 0;
  for (int c = 0; c < C; ++c) {
    if (static_cast<int>(confusion[c].size()) != C)
      throw std::runtime_error("confusion matrix is not square");
    correct += confusion[c][c];
    for (long long n : confusion[c]) m.total += n;
  }
  if (m.total == 0) throw std::runtime_error("confusion matrix is empty");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);

  double weighted = 0.0;
  double macro = 0.0;
  for (int c = 0; c < C; ++c) {
    long long tp = confusion[c][c];
    long long support = 0;
    long long predicted = 0;
    for (int j = 0; j < C; ++j) {
      support += confusion[c][j];
      predicted += confusion[j][c];
    }
    double precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    double recall = support > 0 ? static_cast<double>(tp) / support : 0.0;
    double f1 = (precision + recall) > 0.0
                    ? 2.0 * precision * recall / (precision + recall)
                    : 0.0;
    m.per_class_f1[c] = f1;
    weighted += f1 * static_cast<double>(support) / m.total;
    macro += f1;
  }
  m.f1_weighted = weighted;
  m.f1_macro = macro / C;
  return m;
}

int predict(const model::Model& m, const corpus::Document& doc,
            Tensor* probs_out) {
  Tape tape;
  model::ForwardOptions opts;
  auto out = m.forward(tape, doc, opts);
  int argmax = 0;
  for (int c = 1; c < out.yhat_m1.cols; ++c)
    if (out.yhat_m1.at(0, c) > out.yhat_m1.at(0, argmax)) argmax = c;
  if (probs_out) *probs_out = out.yhat_m1;
  return argmax;
}

Metrics evaluate(const model::Model& m, const corpus::DocumentSet& docs,
                 corpus::Split split) {
  const int C = m.config().classes;
  std::vector<std::vector<long long>> confusion(
      C, std::vector<long long>(C, 0));
  long long seen = 0;
  for (const auto& d : docs.docs()) {
    if (d.split != split) continue;
    confusion[d.label][predict(m, d)]++;
    ++seen;
  }
  if (seen == 0) throw std::runtime_error("evaluate: no documents in split");
  return metrics_from_confusion(confusion);
}

TopicTable extract_topics(const model::Model& m,
                          const corpus::DocumentSet& docs, int top_n,
                          bool classifier_weight_method) {
  const int C = m.config().classes;
  const int K = m.config().latent;
  const int V = m.config().vocab;
  if (m.config().mode == model::Mode::bert)
    throw std::runtime_error(
        "topic extraction needs a topic model (cantm or cantm_ia)");
  const bool compat = m.config().mode == model::Mode::cantm;
  TopicTable table;
  table.rows.resize(C);
  if (top_n <= 0) return table;

  std::vector<Tensor> directions(C);
  std::vector<bool> has_direction(C, false);

  if (classifier_weight_method) {
    // Compose the M2 classifier weights with the decoder: class c's latent
    // direction is column c of the classifier weight matrix.
    const Tensor& w = m.params().get("m2.cls.w");  // K x C
    for (int c = 0; c < C; ++c) {
      Tensor dir(1, K, 0.0);
      for (int k = 0; k < K; ++k) dir.at(0, k) = w.at(k, c);
      directions[c] = std::move(dir);
      has_direction[c] = true;
    }
  } else {
    const int dim = compat ? K + C : K;
    std::vector<Tensor> sums(C, Tensor(1, dim, 0.0));
    std::vector<long long> counts(C, 0);
    for (const auto& d : docs.docs()) {
      if (d.split != corpus::Split::valid) continue;
      Tape tape;
      model::ForwardOptions opts;
      auto out = m.forward(tape, d, opts);
      int pred = 0;
      for (int c = 1; c < out.yhat_m1.cols; ++c)
        if (out.yhat_m1.at(0, c) > out.yhat_m1.at(0, pred)) pred = c;
      for (int k = 0; k < K; ++k) sums[pred].at(0, k) += out.zs.at(0, k);
      if (compat) {
        for (int c = 0; c < C; ++c)
          sums[pred].at(0, K + c) += out.yhat_m1.at(0, c);
      }
      counts[pred]++;
    }
    for (int c = 0; c < C; ++c) {
      if (counts[c] == 0) continue;  // empty row, reported by the caller
      for (double& x : sums[c].v) x /= static_cast<double>(counts[c]);
      directions[c] = std::move(sums[c]);
      has_direction[c] = true;
    }
  }

  const Tensor& dec_w = m.params().get("m2.dec.w");
  const Tensor& dec_b = m.params().get("m2.dec.b");
  for (int c = 0; c < C; ++c) {
    if (!has_direction[c]) continue;
    const Tensor& dir = directions[c];
    Tensor logits(1, V, 0.0);
    const int dim = dir.cols;
    for (int k = 0; k < dim && k < dec_w.rows; ++k) {
      const double dk = dir.at(0, k);
      if (dk == 0.0) continue;
      for (int w = 0; w < V; ++w) logits.at(0, w) += dk * dec_w.at(k, w);
    }
    for (int w = 0; w < V; ++w) logits.at(0, w) += dec_b.at(0, w);
    std::vector<int> order(V);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return logits.at(0, a) > logits.at(0, b);
    });
    // Softmax over logits for reported scores (ranking is unchanged).
    double mx = logits.at(0, order[0]);
    double denom = 0.0;
    for (int w = 0; w < V; ++w) denom += std::exp(logits.at(0, w) - mx);
    const int take = std::min(top_n, V);
    for (int i = 0; i < take; ++i) {
      int w = order[i];
      table.rows[c].emplace_back(m.vocab().word(w),
                                 std::exp(logits.at(0, w) - mx) / denom);
    }
  }
  return table;
}

ExplanationRecord explain(const model::Model& m, const corpus::Document& doc,
                          double ratio) {
  Tape tape;
  model::ForwardOptions opts;
  opts.ratio_override = ratio;
  auto out = m.forward(tape, doc, opts);
  ExplanationRecord rec;
  rec.doc_id = doc.id;
  rec.predicted = 0;
  for (int c = 1; c < out.yhat_m1.cols; ++c)
    if (out.yhat_m1.at(0, c) > out.yhat_m1.at(0, rec.predicted))
      rec.predicted = c;
  rec.class_probs.assign(out.yhat_m1.v.begin(), out.yhat_m1.v.end());
  rec.scores = out.scores;
  rec.rationales = out.rationales;
  rec.html = saliency::highlight(doc, out.rationales,
                                 saliency::HighlightFormat::html);
  rec.ansi = saliency::highlight(doc, out.rationales,
                                 saliency::HighlightFormat::ansi);
  return rec;
}

std::string metrics_to_json(const Metrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["f1_weighted"] = m.f1_weighted;
  j["f1_macro"] = m.f1_macro;
  j["per_class_f1"] = m.per_class_f1;
  j["confusion"] = m.confusion;
  j["total"] = m.total;
  json per_class = json::object();
  for (std::size_t c = 0; c < m.per_class_f1.size() &&
                          c < corpus::class_names().size();
       ++c)
    per_class[corpus::class_names()[c]] = m.per_class_f1[c];
  j["per_class_f1_named"] = per_class;
  return j.dump(2);
}

std::string topics_to_json(const TopicTable& t) {
  json j = json::array();
  for (std::size_t c = 0; c < t.rows.size(); ++c) {
    json row;
    row["class"] = c < corpus::class_names().size()
                       ? corpus::class_names()[c]
                       : std::to_string(c);
    json words = json::array();
    for (const auto& [w, s] : t.rows[c]) words.push_back({{"word", w}, {"score", s}});
    row["topic_words"] = words;
    j.push_back(row);
  }
  return j.dump(2);
}

std::string explanation_to_json(const ExplanationRecord& r) {
  json j;
  j["doc_id"] = r.doc_id;
  j["predicted"] = r.predicted;
  j["predicted_class"] = r.predicted >= 0 &&
                                 r.predicted <
                                     static_cast<int>(corpus::class_names().size())
                             ? corpus::class_names()[r.predicted]
                             : "";
  j["class_probs"] = r.class_probs;
  j["scores"] = r.scores.scores;
  j["selected"] = r.rationales.positions;
  j["ratio"] = r.rationales.ratio;
  j["html"] = r.html;
  return j.dump(2);
}

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

}  // namespace

std::string report_html(const Metrics& metrics, const TopicTable& topics,
                        const std::vector<ExplanationRecord>& examples) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
     << "<title>CANTM report</title>\n"
     << "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
     << "table{border-collapse:collapse;margin:1em 0}"
     << "td,th{border:1px solid #999;padding:0.3em 0.6em;text-align:left}"
     << "mark{background:#fbb}</style></head><body>\n";
  os << "<h1>CANTM report</h1>\n";

  os << "<h2>Classification</h2>\n<table><tr><th>Accuracy</th>"
     << "<th>F1 (weighted)</th><th>F1 (macro)</th><th>Documents</th></tr>\n"
     << "<tr><td>" << fmt(metrics.accuracy) << "</td><td>"
     << fmt(metrics.f1_weighted) << "</td><td>" << fmt(metrics.f1_macro)
     << "</td><td>" << metrics.total << "</td></tr></table>\n";

  os << "<h2>Per-class F1</h2>\n<table><tr><th>Class</th><th>F1</th></tr>\n";
  for (std::size_t c = 0; c < metrics.per_class_f1.size(); ++c) {
    std::string name = c < corpus::class_names().size()
                           ? corpus::class_names()[c]
                           : std::to_string(c);
    os << "<tr><td>" << html_escape(name) << "</td><td>"
       << fmt(metrics.per_class_f1[c]) << "</td></tr>\n";
  }
  os << "</table>\n";

  os << "<h2>Topic words</h2>\n<table><tr><th>Class</th><th>Top words</th></tr>\n";
  bool any_topics = false;
  for (std::size_t c = 0; c < topics.rows.size(); ++c) {
    std::string name = c < corpus::class_names().size()
                           ? corpus::class_names()[c]
                           : std::to_string(c);
    os << "<tr><td>" << html_escape(name) << "</td><td>";
    if (topics.rows[c].empty()) {
      os << "<em>no topics</em>";
    } else {
      any_topics = true;
      for (std::size_t i = 0; i < topics.rows[c].size(); ++i) {
        if (i) os << ' ';
        os << html_escape(topics.rows[c][i].first);
      }
    }
    os << "</td></tr>\n";
  }
  os << "</table>\n";
  if (!any_topics) os << "<p><em>no topics</em></p>\n";

  os << "<h2>Highlighted examples</h2>\n";
  if (examples.empty()) os << "<p><em>no examples</em></p>\n";
  for (const auto& ex : examples) {
    std::string cls = ex.predicted >= 0 &&
                              ex.predicted <
                                  static_cast<int>(corpus::class_names().size())
                          ? corpus::class_names()[ex.predicted]
                          : "?";
    os << "<h3>" << html_escape(ex.doc_id) << " &rarr; "
       << html_escape(cls) << "</h3>\n<p>" << ex.html << "</p>\n";
  }
  os << "</body></html>\n";
  return os.str();
}

std::string report_markdown(const Metrics& metrics, const TopicTable& topics,
                            const std::vector<ExplanationRecord>& examples) {
  std::ostringstream os;
  os << "# CANTM report\n\n## Classification\n\n"
     << "| Accuracy | F1 (weighted) | F1 (macro) | Documents |\n"
     << "|---|---|---|---|\n"
     << "| " << fmt(metrics.accuracy) << " | " << fmt(metrics.f1_weighted)
     << " | " << fmt(metrics.f1_macro) << " | " << metrics.total << " |\n\n";

  os << "## Per-class F1\n\n| Class | F1 |\n|---|---|\n";
  for (std::size_t c = 0; c < metrics.per_class_f1.size(); ++c) {
    std::string name = c < corpus::class_names().size()
                           ? corpus::class_names()[c]
                           : std::to_string(c);
    os << "| " << name << " | " << fmt(metrics.per_class_f1[c]) << " |\n";
  }

  os << "\n## Topic words\n\n| Class | Top words |\n|---|---|\n";
  for (std::size_t c = 0; c < topics.rows.size(); ++c) {
    std::string name = c < corpus::class_names().size()
                           ? corpus::class_names()[c]
                           : std::to_string(c);
    os << "| " << name << " | ";
    if (topics.rows[c].empty()) {
      os << "_no topics_";
    } else {
      for (std::size_t i = 0; i < topics.rows[c].size(); ++i) {
        if (i) os << ' ';
        os << topics.rows[c][i].first;
      }
    }
    os << " |\n";
  }

  os << "\n## Highlighted examples\n\n";
  if (examples.empty()) os << "_no examples_\n";
  for (const auto& ex : examples) {
    std::string cls = ex.predicted >= 0 &&
                              ex.predicted <
                                  static_cast<int>(corpus::class_names().size())
                          ? corpus::class_names()[ex.predicted]
                          : "?";
    os << "### " << ex.doc_id << " -> " << cls << "\n\n" << ex.html << "\n\n";
  }
  return os.str();
}

}  // namespace cantm::eval
