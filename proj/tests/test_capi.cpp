#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cantm/cantm.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("cantm_capi_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Owns a string returned by the API.
struct ApiString {
  char* s = nullptr;
  ~ApiString() { cantm_free_string(s); }
  std::string str() const { return s ? s : ""; }
};

void write_fixture(const fs::path& dir) {
  std::ofstream csv(dir / "events.csv");
  csv << "event_date,event_type,notes\n";
  const char* protests[] = {"protest march banner crowd street",
                            "peaceful protest banner slogan rally",
                            "demonstrators march rally downtown protest"};
  const char* battles[] = {"soldiers clashed armed battle village",
                           "troops fought armed forces battle front",
                           "armed battle soldiers offensive town"};
  const char* riots[] = {"rioters burned vehicles mob violence street",
                         "riot mob stones burned shops unrest",
                         "violent riot mob clashes police unrest"};
  for (int i = 0; i < 10; ++i) {
    csv << "2019-06-" << 10 + i << ",Protests," << protests[i % 3] << "\n";
    csv << "2019-06-" << 10 + i << ",Battles," << battles[i % 3] << "\n";
    csv << "2019-06-" << 10 + i << ",Riots," << riots[i % 3] << "\n";
  }
  csv.close();

  std::ofstream ood(dir / "ood.txt");
  const char* texts[] = {"recipe pasta tomato basil dinner",
                         "football match scored goals weekend",
                         "stock market shares traded higher",
                         "movie premiere actors festival screen"};
  for (int i = 0; i < 8; ++i) ood << texts[i % 4] << " line" << i << "\n";
}

json ingest_options(const fs::path& dir) {
  return json{{"acled_path", (dir / "events.csv").string()},
              {"ood_path", (dir / "ood.txt").string()},
              {"ood_count", 8},
              {"seed", 11},
              {"vocab_size", 50}};
}

json train_config(const std::string& mode, int epochs) {
  return json{{"mode", mode},
              {"latent", 4},
              {"epochs", epochs},
              {"batch_size", 8},
              {"lr_heads", 1e-2},
              {"seed", 3},
              {"backbone",
               {{"hidden", 8},
                {"heads", 2},
                {"layers", 2},
                {"ffn", 16},
                {"max_len", 32}}}};
}

}  // namespace

TEST_CASE("null and malformed arguments are usage errors") {
  CHECK(cantm_ingest(nullptr, nullptr) == CANTM_ERR_USAGE);
  CHECK(std::string(cantm_last_error()).size() > 0);

  cantm_corpus* c = nullptr;
  CHECK(cantm_ingest("{not json", &c) == CANTM_ERR_USAGE);
  CHECK(cantm_ingest("{}", &c) == CANTM_ERR_USAGE);  // no input source
  CHECK(cantm_corpus_open("/nonexistent/dir", &c) == CANTM_ERR_USAGE);
  cantm_model* m = nullptr;
  CHECK(cantm_model_open("/nonexistent/dir", &m) == CANTM_ERR_USAGE);
  CHECK(cantm_model_open(nullptr, &m) == CANTM_ERR_USAGE);

  json opts = {{"acled_path", "/nonexistent/file.csv"}};
  CHECK(cantm_ingest(opts.dump().c_str(), &c) != CANTM_OK);
  CHECK(std::string(cantm_last_error()).size() > 0);
}

TEST_CASE("end-to-end pipeline through the shared-library API") {
  TempDir dir("pipeline");
  write_fixture(dir.path);

  cantm_corpus* corpus = nullptr;
  REQUIRE(cantm_ingest(ingest_options(dir.path).dump().c_str(), &corpus) ==
          CANTM_OK);

  ApiString summary;
  REQUIRE(cantm_corpus_summary(corpus, &summary.s) == CANTM_OK);
  json s = json::parse(summary.str());
  CHECK(s.at("totals").at("total").get<int>() == 38);
  CHECK(s.at("totals").at("train").get<int>() +
            s.at("totals").at("valid").get<int>() +
            s.at("totals").at("test").get<int>() ==
        38);
  CHECK(s.at("counts").size() == 7);
  CHECK(s.at("vocab_size").get<int>() > 0);
  CHECK(s.at("vocab_size").get<int>() <= 50);

  // Save / reopen round-trips the summary exactly.
  const std::string corpus_dir = (dir.path / "corpus").string();
  REQUIRE(cantm_corpus_save(corpus, corpus_dir.c_str()) == CANTM_OK);
  cantm_corpus* reopened = nullptr;
  REQUIRE(cantm_corpus_open(corpus_dir.c_str(), &reopened) == CANTM_OK);
  ApiString summary2;
  REQUIRE(cantm_corpus_summary(reopened, &summary2.s) == CANTM_OK);
  CHECK(summary2.str() == summary.str());

  // get_text finds a stored document by its id.
  std::ifstream jsonl(dir.path / "corpus" / "corpus.jsonl");
  std::string header, first_record;
  REQUIRE(std::getline(jsonl, header).good());
  REQUIRE(std::getline(jsonl, first_record).good());
  const std::string doc_id = json::parse(first_record).at("id");
  ApiString text;
  REQUIRE(cantm_corpus_get_text(corpus, doc_id.c_str(), &text.s) == CANTM_OK);
  CHECK(text.str().size() > 0);
  ApiString missing;
  CHECK(cantm_corpus_get_text(corpus, "no-such-id", &missing.s) ==
        CANTM_ERR_USAGE);

  // Train one epoch of cantm_ia and reopen the checkpoint.
  const std::string ckpt_dir = (dir.path / "ckpt").string();
  REQUIRE(cantm_train(corpus, train_config("cantm_ia", 1).dump().c_str(),
                      ckpt_dir.c_str()) == CANTM_OK);
  CHECK(fs::exists(dir.path / "ckpt" / "weights.bin"));
  CHECK(fs::exists(dir.path / "ckpt" / "config.json"));

  cantm_model* model = nullptr;
  REQUIRE(cantm_model_open(ckpt_dir.c_str(), &model) == CANTM_OK);

  ApiString metrics;
  REQUIRE(cantm_eval(model, corpus, &metrics.s) == CANTM_OK);
  json mj = json::parse(metrics.str());
  CHECK(mj.at("accuracy").get<double>() >= 0.0);
  CHECK(mj.at("accuracy").get<double>() <= 1.0);
  CHECK(mj.at("total").get<int>() == s.at("totals").at("test").get<int>());

  ApiString topics;
  REQUIRE(cantm_topics(model, corpus, 3, 0, &topics.s) == CANTM_OK);
  json tj = json::parse(topics.str());
  REQUIRE(tj.size() == 7);
  for (const auto& row : tj) CHECK(row.at("topic_words").size() <= 3);
  ApiString bad_topics;
  CHECK(cantm_topics(model, corpus, -1, 0, &bad_topics.s) ==
        CANTM_ERR_USAGE);

  ApiString record, ansi;
  REQUIRE(cantm_explain(model, "protest march banner crowd", 0.5, &record.s,
                        &ansi.s) == CANTM_OK);
  json rj = json::parse(record.str());
  CHECK(rj.at("predicted").get<int>() >= 0);
  CHECK(rj.at("scores").size() == 4);
  CHECK(rj.at("selected").size() == 2);
  CHECK(ansi.str().find("\x1b[31m") != std::string::npos);
  ApiString bad_record;
  CHECK(cantm_explain(model, "some text", 0.0, &bad_record.s, nullptr) ==
        CANTM_ERR_USAGE);

  ApiString html, md;
  json examples = json::array({json::parse(record.str())});
  REQUIRE(cantm_report(metrics.str().c_str(), topics.str().c_str(),
                       examples.dump().c_str(), &html.s, &md.s) == CANTM_OK);
  CHECK(html.str().rfind("<!DOCTYPE html>", 0) == 0);
  CHECK(md.str().rfind("# CANTM report", 0) == 0);
  CHECK(cantm_report("{not json", topics.str().c_str(), nullptr, &html.s,
                     &md.s) == CANTM_ERR_USAGE);

  cantm_model_free(model);
  cantm_corpus_free(reopened);
  cantm_corpus_free(corpus);
}

TEST_CASE("fine-tune restructures a cantm checkpoint through the API") {
  TempDir dir("finetune");
  write_fixture(dir.path);

  cantm_corpus* corpus = nullptr;
  REQUIRE(cantm_ingest(ingest_options(dir.path).dump().c_str(), &corpus) ==
          CANTM_OK);

  const std::string base_dir = (dir.path / "base").string();
  REQUIRE(cantm_train(corpus, train_config("cantm", 1).dump().c_str(),
                      base_dir.c_str()) == CANTM_OK);

  const std::string tuned_dir = (dir.path / "tuned").string();
  json ft = train_config("cantm_ia", 1);
  ft["ratio"] = 0.5;
  REQUIRE(cantm_finetune(base_dir.c_str(), corpus, ft.dump().c_str(),
                         tuned_dir.c_str()) == CANTM_OK);

  cantm_model* tuned = nullptr;
  REQUIRE(cantm_model_open(tuned_dir.c_str(), &tuned) == CANTM_OK);
  json cfg;
  {
    std::ifstream in(dir.path / "tuned" / "config.json");
    in >> cfg;
  }
  CHECK(cfg.at("mode") == "cantm_ia");
  CHECK(cfg.at("ratio").get<double>() == 0.5);

  // A wrong fine-tune config is rejected as usage.
  json bad = train_config("cantm", 1);
  CHECK(cantm_finetune(base_dir.c_str(), corpus, bad.dump().c_str(),
                       (dir.path / "bad").string().c_str()) != CANTM_OK);

  cantm_model_free(tuned);
  cantm_corpus_free(corpus);
}
