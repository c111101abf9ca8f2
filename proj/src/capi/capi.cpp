#include "cantm/cantm.h"

#include <cstring>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "corpus/corpus.hpp"
#include "eval/evalreport.hpp"
#include "model/model.hpp"
#include "training/trainer.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

// Usage errors (bad input, missing files, config conflicts) are raised as
// std::invalid_argument by the wrappers below; everything else maps to
// CANTM_ERR_RUNTIME.
template <typename Fn>
cantm_status guarded(Fn&& fn) {
  try {
    fn();
    return CANTM_OK;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return CANTM_ERR_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CANTM_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::runtime_error("out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

cantm::training::TrainConfig parse_train_config(const char* config_json) {
  if (!config_json) throw std::invalid_argument("config_json is null");
  json j;
  try {
    j = json::parse(config_json);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("bad config JSON: ") + e.what());
  }
  cantm::training::TrainConfig c;
  if (!j.contains("mode")) throw std::invalid_argument("config needs a mode");
  c.model.mode = cantm::model::mode_from_name(j.at("mode").get<std::string>());
  c.model.ratio = j.value("ratio", 0.5);
  c.model.latent = j.value("latent", 100);
  c.model.classes = j.value("classes", 7);
  c.model.bert_dim = j.value("bert_dim", 300);
  c.lambda = j.value("lambda", 1.0);
  c.epochs = j.value("epochs", 5);
  c.batch_size = j.value("batch_size", 64);
  c.lr_backbone = j.value("lr_backbone", 2e-5);
  c.lr_heads = j.value("lr_heads", 1e-3);
  c.weight_decay = j.value("weight_decay", 0.01);
  c.seed = j.value("seed", 0ULL);
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    std::string profile = b.value("profile", "tiny");
    c.model.backbone = profile == "pretrained"
                           ? cantm::backbone::BackboneConfig::pretrained()
                           : cantm::backbone::BackboneConfig::tiny();
    c.model.backbone.hidden = b.value("hidden", c.model.backbone.hidden);
    c.model.backbone.heads = b.value("heads", c.model.backbone.heads);
    c.model.backbone.layers = b.value("layers", c.model.backbone.layers);
    c.model.backbone.ffn = b.value("ffn", c.model.backbone.ffn);
    c.model.backbone.max_len = b.value("max_len", c.model.backbone.max_len);
    c.model.backbone.weights_path = b.value("weights_path", "");
    if (profile == "pretrained" && c.model.backbone.weights_path.empty())
      throw std::invalid_argument(
          "pretrained profile requires backbone.weights_path");
  }
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw std::invalid_argument(e.what());
  }
  return c;
}

}  // namespace

struct cantm_corpus {
  cantm::corpus::CorpusManifest manifest;
};

struct cantm_model {
  cantm::training::Checkpoint checkpoint;
};

extern "C" {

const char* cantm_last_error(void) { return g_last_error.c_str(); }

void cantm_free_string(char* s) { std::free(s); }

cantm_status cantm_ingest(const char* options_json, cantm_corpus** out) {
  return guarded([&] {
    if (!options_json || !out) throw std::invalid_argument("null argument");
    json j;
    try {
      j = json::parse(options_json);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("bad options JSON: ") + e.what());
    }
    const std::uint64_t seed = j.value("seed", 0ULL);

    cantm::corpus::DocumentSet docs;
    if (j.contains("acled_path")) {
      cantm::corpus::IngestOptions opts;
      opts.seed = seed;
      opts.protests_fraction = j.value("protests_fraction", 1.0);
      opts.event_type_column = j.value("event_type_column", opts.event_type_column);
      opts.notes_column = j.value("notes_column", opts.notes_column);
      opts.date_column = j.value("date_column", opts.date_column);
      opts.date_start = j.value("date_start", "");
      opts.date_end = j.value("date_end", "");
      if (opts.protests_fraction <= 0.0 || opts.protests_fraction > 1.0)
        throw std::invalid_argument("protests_fraction must be in (0, 1]");
      docs = cantm::corpus::ingest_acled(
          j.at("acled_path").get<std::string>(), opts);
    }
    if (j.contains("ood_path")) {
      auto ood = cantm::corpus::ingest_out_of_domain(
          j.at("ood_path").get<std::string>(), j.value("ood_count", 0),
          seed + 1);
      if (docs.empty())
        docs = std::move(ood);
      else
        docs.append(ood);
    }
    if (docs.empty())
      throw std::invalid_argument("no input given (acled_path or ood_path)");

    cantm::corpus::SplitSpec spec;
    spec.seed = seed;
    if (j.contains("split")) {
      spec.train_ratio = j["split"].value("train", 7.0);
      spec.valid_ratio = j["split"].value("valid", 1.0);
      spec.test_ratio = j["split"].value("test", 2.0);
    }
    cantm::corpus::assign_splits(docs, spec);

    auto corpus = std::make_unique<cantm_corpus>();
    corpus->manifest.seed = seed;
    corpus->manifest.docs = std::move(docs);
    corpus->manifest.vocab = cantm::corpus::build_vocabulary(
        corpus->manifest.docs, j.value("vocab_size", 500));
    *out = corpus.release();
  });
}

cantm_status cantm_corpus_save(const cantm_corpus* corpus, const char* dir) {
  return guarded([&] {
    if (!corpus || !dir) throw std::invalid_argument("null argument");
    cantm::corpus::save_manifest(corpus->manifest, dir);
  });
}

cantm_status cantm_corpus_open(const char* dir, cantm_corpus** out) {
  return guarded([&] {
    if (!dir || !out) throw std::invalid_argument("null argument");
    auto corpus = std::make_unique<cantm_corpus>();
    try {
      corpus->manifest = cantm::corpus::load_manifest(dir);
    } catch (const std::exception& e) {
      throw std::invalid_argument(e.what());
    }
    *out = corpus.release();
  });
}

cantm_status cantm_corpus_summary(const cantm_corpus* corpus,
                                  char** json_out) {
  return guarded([&] {
    if (!corpus || !json_out) throw std::invalid_argument("null argument");
    json counts = json::object();
    auto sc = corpus->manifest.docs.split_counts();
    auto cc = corpus->manifest.docs.class_counts();
    long long totals[4] = {0, 0, 0, 0};
    for (int c = 0; c < cantm::corpus::kNumClasses; ++c) {
      counts[cantm::corpus::class_names()[c]] = {{"train", sc[c][0]},
                                                 {"valid", sc[c][1]},
                                                 {"test", sc[c][2]},
                                                 {"total", cc[c]}};
      totals[0] += sc[c][0];
      totals[1] += sc[c][1];
      totals[2] += sc[c][2];
      totals[3] += cc[c];
    }
    json j = {{"seed", corpus->manifest.seed},
              {"counts", counts},
              {"totals",
               {{"train", totals[0]},
                {"valid", totals[1]},
                {"test", totals[2]},
                {"total", totals[3]}}},
              {"vocab_size", corpus->manifest.vocab.size()}};
    *json_out = dup_string(j.dump(2));
  });
}

cantm_status cantm_corpus_get_text(const cantm_corpus* corpus,
                                   const char* doc_id, char** text_out) {
  return guarded([&] {
    if (!corpus || !doc_id || !text_out)
      throw std::invalid_argument("null argument");
    for (const auto& d : corpus->manifest.docs.docs()) {
      if (d.id == doc_id) {
        *text_out = dup_string(d.text);
        return;
      }
    }
    throw std::invalid_argument(std::string("no document with id '") + doc_id +
                                "'");
  });
}

void cantm_corpus_free(cantm_corpus* corpus) { delete corpus; }

cantm_status cantm_train(const cantm_corpus* corpus, const char* config_json,
                         const char* checkpoint_dir) {
  return guarded([&] {
    if (!corpus || !checkpoint_dir) throw std::invalid_argument("null argument");
    auto config = parse_train_config(config_json);
    config.checkpoint_dir = checkpoint_dir;
    auto ckpt = cantm::training::train(config, corpus->manifest);
    cantm::training::save_checkpoint(ckpt, checkpoint_dir);
  });
}

cantm_status cantm_finetune(const char* base_checkpoint_dir,
                            const cantm_corpus* corpus,
                            const char* config_json,
                            const char* checkpoint_dir) {
  return guarded([&] {
    if (!base_checkpoint_dir || !corpus || !checkpoint_dir)
      throw std::invalid_argument("null argument");
    auto config = parse_train_config(config_json);
    config.checkpoint_dir = checkpoint_dir;
    auto ckpt = cantm::training::fine_tune(base_checkpoint_dir, config,
                                           corpus->manifest);
    cantm::training::save_checkpoint(ckpt, checkpoint_dir);
  });
}

cantm_status cantm_model_open(const char* checkpoint_dir, cantm_model** out) {
  return guarded([&] {
    if (!checkpoint_dir || !out) throw std::invalid_argument("null argument");
    auto m = std::make_unique<cantm_model>();
    try {
      m->checkpoint = cantm::training::load_checkpoint(checkpoint_dir);
    } catch (const std::exception& e) {
      throw std::invalid_argument(e.what());
    }
    *out = m.release();
  });
}

void cantm_model_free(cantm_model* model) { delete model; }

cantm_status cantm_eval(const cantm_model* model, const cantm_corpus* corpus,
                        char** metrics_json_out) {
  return guarded([&] {
    if (!model || !corpus || !metrics_json_out)
      throw std::invalid_argument("null argument");
    auto metrics = cantm::eval::evaluate(*model->checkpoint.model,
                                         corpus->manifest.docs,
                                         cantm::corpus::Split::test);
    *metrics_json_out = dup_string(cantm::eval::metrics_to_json(metrics));
  });
}

cantm_status cantm_topics(const cantm_model* model, const cantm_corpus* corpus,
                          int top_n, int use_classifier_weights,
                          char** topics_json_out) {
  return guarded([&] {
    if (!model || !corpus || !topics_json_out)
      throw std::invalid_argument("null argument");
    if (top_n < 0) throw std::invalid_argument("top_n must be >= 0");
    auto topics = cantm::eval::extract_topics(
        *model->checkpoint.model, corpus->manifest.docs, top_n,
        use_classifier_weights != 0);
    *topics_json_out = dup_string(cantm::eval::topics_to_json(topics));
  });
}

cantm_status cantm_explain(const cantm_model* model, const char* text,
                           double ratio, char** record_json_out,
                           char** ansi_out) {
  return guarded([&] {
    if (!model || !text || !record_json_out)
      throw std::invalid_argument("null argument");
    if (ratio <= 0.0 || ratio > 1.0)
      throw std::invalid_argument("ratio must be in (0, 1]");
    cantm::corpus::Document doc;
    doc.id = "stdin";
    doc.text = text;
    doc.label = 0;
    auto rec = cantm::eval::explain(*model->checkpoint.model, doc, ratio);
    *record_json_out = dup_string(cantm::eval::explanation_to_json(rec));
    if (ansi_out) *ansi_out = dup_string(rec.ansi);
  });
}

cantm_status cantm_report(const char* metrics_json, const char* topics_json,
                          const char* examples_json, char** html_out,
                          char** markdown_out) {
  return guarded([&] {
    if (!metrics_json || !topics_json || !html_out || !markdown_out)
      throw std::invalid_argument("null argument");
    json mj, tj, ej = json::array();
    try {
      mj = json::parse(metrics_json);
      tj = json::parse(topics_json);
      if (examples_json) ej = json::parse(examples_json);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("bad report input JSON: ") +
                                  e.what());
    }
    cantm::eval::Metrics metrics;
    metrics.accuracy = mj.value("accuracy", 0.0);
    metrics.f1_weighted = mj.value("f1_weighted", 0.0);
    metrics.f1_macro = mj.value("f1_macro", 0.0);
    metrics.per_class_f1 = mj.value("per_class_f1", std::vector<double>{});
    metrics.total = mj.value("total", 0LL);
    if (mj.contains("confusion"))
      metrics.confusion =
          mj["confusion"].get<std::vector<std::vector<long long>>>();

    cantm::eval::TopicTable topics;
    for (const auto& row : tj) {
      std::vector<std::pair<std::string, double>> words;
      for (const auto& w : row.value("topic_words", json::array()))
        words.emplace_back(w.at("word").get<std::string>(),
                           w.value("score", 0.0));
      topics.rows.push_back(std::move(words));
    }

    std::vector<cantm::eval::ExplanationRecord> examples;
    for (const auto& e : ej) {
      cantm::eval::ExplanationRecord rec;
      rec.doc_id = e.value("doc_id", "");
      rec.predicted = e.value("predicted", -1);
      rec.html = e.value("html", "");
      examples.push_back(std::move(rec));
    }
    *html_out =
        dup_string(cantm::eval::report_html(metrics, topics, examples));
    *markdown_out =
        dup_string(cantm::eval::report_markdown(metrics, topics, examples));
  });
}

}  // extern "C"
