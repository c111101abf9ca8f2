// cantm: single-binary CLI over the C API. Exit codes: 0 success, 1 runtime
// failure, 2 usage/input error.
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cantm/cantm.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Owned string coming back from the C API.
struct ApiString {
  char* p = nullptr;
  ~ApiString() { cantm_free_string(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

void check(cantm_status s) {
  if (s == CANTM_OK) return;
  std::string msg = cantm_last_error();
  if (s == CANTM_ERR_USAGE) throw UsageError(msg);
  throw std::runtime_error(msg);
}

struct CorpusHandle {
  cantm_corpus* p = nullptr;
  ~CorpusHandle() { cantm_corpus_free(p); }
};

struct ModelHandle {
  cantm_model* p = nullptr;
  ~ModelHandle() { cantm_model_free(p); }
};

std::string run_root() {
  const char* env = std::getenv("CANTM_RUN_DIR");
  return env && *env ? env : ".";
}

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_exists(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("missing input: " + path);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

json hash_inputs(const std::vector<std::string>& paths) {
  json out = json::object();
  for (const auto& p : paths) {
    if (p.empty()) continue;
    if (fs::is_directory(p)) {
      // Hash the directory's regular files in sorted order.
      std::vector<std::string> files;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      std::string acc;
      for (const auto& f : files) acc += f + ":" + fnv1a_hex(read_file(f));
      out[p] = fnv1a_hex(acc);
    } else {
      out[p] = fnv1a_hex(read_file(p));
    }
  }
  return out;
}

// Written before any work starts; finished_at is filled in on success.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const json& config,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        const std::string& started_at,
                        const std::string& finished_at = "") {
  fs::create_directories(out_dir);
  json manifest = {{"command", command},
                   {"config", config},
                   {"seed", config.value("seed", 0ULL)},
                   {"input_hashes", hash_inputs(inputs)},
                   {"output_paths", outputs},
                   {"started_at", started_at}};
  if (!finished_at.empty()) manifest["finished_at"] = finished_at;
  std::ofstream f(out_dir + "/run_manifest.json", std::ios::trunc);
  f << manifest.dump(2) << '\n';
}

json parse_flat_yaml(const std::string& text) {
  // Flat "key: value" lines; dotted keys nest (backbone.profile: tiny).
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    s.erase(0, s.find_first_not_of(ws));
    auto end = s.find_last_not_of(ws);
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto colon = s.find(':');
    if (colon == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected 'key: value'");
    std::string key = trim(s.substr(0, colon));
    std::string value = trim(s.substr(colon + 1));
    json parsed;
    try {
      parsed = json::parse(value);  // numbers, booleans, quoted strings
    } catch (...) {
      parsed = value;  // bare string
    }
    json* slot = &out;
    std::size_t start = 0, dot;
    while ((dot = key.find('.', start)) != std::string::npos) {
      slot = &(*slot)[key.substr(start, dot - start)];
      start = dot + 1;
    }
    (*slot)[key.substr(start)] = parsed;
  }
  return out;
}

json load_config_file(const std::string& path) {
  require_exists(path);
  std::string text = read_file(path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      return json::parse(text);
    } catch (const std::exception& e) {
      throw UsageError(std::string("bad JSON config: ") + e.what());
    }
  }
  return parse_flat_yaml(text);
}

CorpusHandle open_corpus(const std::string& dir) {
  require_exists(dir);
  CorpusHandle c;
  check(cantm_corpus_open(dir.c_str(), &c.p));
  return c;
}

ModelHandle open_model(const std::string& dir) {
  require_exists(dir);
  ModelHandle m;
  check(cantm_model_open(dir.c_str(), &m.p));
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

void print_count_table(const json& summary) {
  // Per-class train/valid/test/total counts, one class per row.
  std::printf("%-28s %10s %10s %10s %10s\n", "Event type", "Train", "Valid",
              "Test", "All");
  const json& counts = summary.at("counts");
  for (auto& [name, row] : counts.items()) {
    std::printf("%-28s %10lld %10lld %10lld %10lld\n", name.c_str(),
                row.at("train").get<long long>(),
                row.at("valid").get<long long>(),
                row.at("test").get<long long>(),
                row.at("total").get<long long>());
  }
  const json& t = summary.at("totals");
  std::printf("%-28s %10lld %10lld %10lld %10lld\n", "Total",
              t.at("train").get<long long>(), t.at("valid").get<long long>(),
              t.at("test").get<long long>(), t.at("total").get<long long>());
}

int cmd_ingest(const std::string& acled, const std::string& ood, int ood_count,
               double protests_fraction, const std::string& date_start,
               const std::string& date_end, unsigned long long seed,
               int vocab_size, const std::string& out_dir) {
  if (acled.empty() && ood.empty())
    throw UsageError("ingest needs --acled and/or --ood");
  std::vector<std::string> inputs;
  if (!acled.empty()) {
    require_exists(acled);
    inputs.push_back(acled);
  }
  if (!ood.empty()) {
    require_exists(ood);
    inputs.push_back(ood);
  }

  json options = {{"seed", seed},
                  {"protests_fraction", protests_fraction},
                  {"vocab_size", vocab_size}};
  if (!acled.empty()) options["acled_path"] = acled;
  if (!ood.empty()) {
    options["ood_path"] = ood;
    options["ood_count"] = ood_count;
  }
  if (!date_start.empty()) options["date_start"] = date_start;
  if (!date_end.empty()) options["date_end"] = date_end;

  const std::string started = now_iso8601();
  std::vector<std::string> outputs = {out_dir + "/corpus.jsonl",
                                      out_dir + "/vocab.txt"};
  write_run_manifest(out_dir, "ingest", options, inputs, outputs, started);

  CorpusHandle corpus;
  check(cantm_ingest(options.dump().c_str(), &corpus.p));
  check(cantm_corpus_save(corpus.p, out_dir.c_str()));
  ApiString summary;
  check(cantm_corpus_summary(corpus.p, &summary.p));
  print_count_table(json::parse(summary.str()));

  write_run_manifest(out_dir, "ingest", options, inputs, outputs, started,
                     now_iso8601());
  return 0;
}

json resolve_train_config(const std::string& config_path,
                          const CLI::App& cmd, const std::string& mode,
                          double ratio, double lambda,
                          unsigned long long seed, const std::string& profile,
                          const std::string& weights, int epochs,
                          int batch_size) {
  json cfg = json::object();
  if (!config_path.empty()) cfg = load_config_file(config_path);
  // Flags win over file keys.
  if (cmd.count("--mode") || !cfg.contains("mode")) cfg["mode"] = mode;
  if (cmd.count("--ratio")) cfg["ratio"] = ratio;
  if (cmd.count("--lambda")) cfg["lambda"] = lambda;
  if (cmd.count("--seed")) cfg["seed"] = seed;
  if (cmd.count("--epochs")) cfg["epochs"] = epochs;
  if (cmd.count("--batch-size")) cfg["batch_size"] = batch_size;
  if (cmd.count("--profile")) cfg["backbone"]["profile"] = profile;
  if (cmd.count("--backbone-weights"))
    cfg["backbone"]["weights_path"] = weights;

  const std::string m = cfg.value("mode", "");
  if (m != "bert" && m != "cantm" && m != "cantm-ia" && m != "cantm_ia")
    throw UsageError("mode must be one of bert, cantm, cantm-ia");
  if (cmd.count("--ratio")) {
    if (ratio <= 0.0 || ratio > 1.0)
      throw UsageError("ratio must be in (0, 1]");
    if (m != "cantm-ia" && m != "cantm_ia")
      throw UsageError("--ratio only applies to --mode cantm-ia");
  }
  return cfg;
}

int cmd_train(const std::string& corpus_dir, const json& cfg,
              const std::string& out_dir) {
  require_exists(corpus_dir);
  const std::string started = now_iso8601();
  std::vector<std::string> outputs = {
      out_dir + "/weights.bin", out_dir + "/vocab.txt",
      out_dir + "/config.json", out_dir + "/history.jsonl"};
  write_run_manifest(out_dir, "train", cfg, {corpus_dir}, outputs, started);

  CorpusHandle corpus = open_corpus(corpus_dir);
  check(cantm_train(corpus.p, cfg.dump().c_str(), out_dir.c_str()));

  write_run_manifest(out_dir, "train", cfg, {corpus_dir}, outputs, started,
                     now_iso8601());
  std::printf("checkpoint written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_finetune(const std::string& base_dir, const std::string& corpus_dir,
                 json cfg, const std::string& out_dir) {
  require_exists(base_dir);
  require_exists(corpus_dir);
  cfg["mode"] = "cantm_ia";
  if (!cfg.contains("epochs")) cfg["epochs"] = 1;
  if (!cfg.contains("ratio")) cfg["ratio"] = 0.5;
  const std::string started = now_iso8601();
  std::vector<std::string> outputs = {
      out_dir + "/weights.bin", out_dir + "/vocab.txt",
      out_dir + "/config.json", out_dir + "/history.jsonl"};
  write_run_manifest(out_dir, "finetune", cfg, {base_dir, corpus_dir}, outputs,
                     started);

  CorpusHandle corpus = open_corpus(corpus_dir);
  check(cantm_finetune(base_dir.c_str(), corpus.p, cfg.dump().c_str(),
                       out_dir.c_str()));

  write_run_manifest(out_dir, "finetune", cfg, {base_dir, corpus_dir}, outputs,
                     started, now_iso8601());
  std::printf("checkpoint written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& corpus_dir,
             const std::string& out_dir) {
  require_exists(ckpt_dir);
  require_exists(corpus_dir);
  const std::string started = now_iso8601();
  json cfg = {{"checkpoint", ckpt_dir}, {"corpus", corpus_dir}};
  std::vector<std::string> outputs = {out_dir + "/metrics.json"};
  write_run_manifest(out_dir, "eval", cfg, {ckpt_dir, corpus_dir}, outputs,
                     started);

  ModelHandle model = open_model(ckpt_dir);
  CorpusHandle corpus = open_corpus(corpus_dir);
  ApiString metrics;
  check(cantm_eval(model.p, corpus.p, &metrics.p));
  write_text(out_dir + "/metrics.json", metrics.str());
  std::printf("%s\n", metrics.str().c_str());

  write_run_manifest(out_dir, "eval", cfg, {ckpt_dir, corpus_dir}, outputs,
                     started, now_iso8601());
  return 0;
}

int cmd_topics(const std::string& ckpt_dir, const std::string& corpus_dir,
               int n, bool classifier_weights, const std::string& out_dir) {
  if (n < 0) throw UsageError("--n must be >= 0");
  require_exists(ckpt_dir);
  require_exists(corpus_dir);
  const std::string started = now_iso8601();
  json cfg = {{"checkpoint", ckpt_dir},
              {"corpus", corpus_dir},
              {"n", n},
              {"classifier_weights", classifier_weights}};
  std::vector<std::string> outputs = {out_dir + "/topics.json"};
  write_run_manifest(out_dir, "topics", cfg, {ckpt_dir, corpus_dir}, outputs,
                     started);

  ModelHandle model = open_model(ckpt_dir);
  CorpusHandle corpus = open_corpus(corpus_dir);
  ApiString topics;
  check(cantm_topics(model.p, corpus.p, n, classifier_weights ? 1 : 0,
                     &topics.p));
  write_text(out_dir + "/topics.json", topics.str());
  std::printf("%s\n", topics.str().c_str());

  write_run_manifest(out_dir, "topics", cfg, {ckpt_dir, corpus_dir}, outputs,
                     started, now_iso8601());
  return 0;
}

int cmd_explain(const std::string& ckpt_dir, const std::string& corpus_dir,
                const std::string& doc_id, double ratio,
                const std::string& format, const std::string& out_dir) {
  if (ratio <= 0.0 || ratio > 1.0) throw UsageError("ratio must be in (0, 1]");
  if (format != "ansi" && format != "html" && format != "json")
    throw UsageError("--format must be ansi, html or json");

  ModelHandle model = open_model(ckpt_dir);
  std::string text;
  if (!doc_id.empty()) {
    if (corpus_dir.empty())
      throw UsageError("--doc-id needs --corpus to resolve the text");
    CorpusHandle corpus = open_corpus(corpus_dir);
    ApiString t;
    check(cantm_corpus_get_text(corpus.p, doc_id.c_str(), &t.p));
    text = t.str();
  } else {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    text = ss.str();
    if (text.empty()) throw UsageError("no text on stdin and no --doc-id");
  }

  const std::string started = now_iso8601();
  json cfg = {{"checkpoint", ckpt_dir},
              {"doc_id", doc_id},
              {"ratio", ratio},
              {"format", format}};
  std::vector<std::string> outputs = {out_dir + "/explanation.json"};
  write_run_manifest(out_dir, "explain", cfg, {ckpt_dir}, outputs, started);

  ApiString record, ansi;
  check(cantm_explain(model.p, text.c_str(), ratio, &record.p, &ansi.p));
  json rec = json::parse(record.str());
  if (!doc_id.empty()) rec["doc_id"] = doc_id;
  write_text(out_dir + "/explanation.json", rec.dump(2));
  if (format == "ansi")
    std::printf("%s\n", ansi.str().c_str());
  else if (format == "html")
    std::printf("%s\n", rec.value("html", "").c_str());
  else
    std::printf("%s\n", rec.dump(2).c_str());

  write_run_manifest(out_dir, "explain", cfg, {ckpt_dir}, outputs, started,
                     now_iso8601());
  return 0;
}

int cmd_report(const std::string& metrics_path, const std::string& topics_path,
               const std::string& examples_path, const std::string& out_dir) {
  require_exists(metrics_path);
  require_exists(topics_path);
  if (!examples_path.empty()) require_exists(examples_path);

  const std::string started = now_iso8601();
  json cfg = {{"metrics", metrics_path},
              {"topics", topics_path},
              {"examples", examples_path}};
  std::vector<std::string> inputs = {metrics_path, topics_path};
  if (!examples_path.empty()) inputs.push_back(examples_path);
  std::vector<std::string> outputs = {out_dir + "/report.html",
                                      out_dir + "/report.md"};
  write_run_manifest(out_dir, "report", cfg, inputs, outputs, started);

  std::string metrics = read_file(metrics_path);
  std::string topics = read_file(topics_path);
  std::string examples =
      examples_path.empty() ? std::string() : read_file(examples_path);
  ApiString html, md;
  check(cantm_report(metrics.c_str(), topics.c_str(),
                     examples_path.empty() ? nullptr : examples.c_str(),
                     &html.p, &md.p));
  write_text(out_dir + "/report.html", html.str());
  write_text(out_dir + "/report.md", md.str());
  std::printf("report written to %s\n", out_dir.c_str());

  write_run_manifest(out_dir, "report", cfg, inputs, outputs, started,
                     now_iso8601());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CANTM / CANTM-IA: conflict classification with class-aware "
               "topics and saliency rationales"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a corpus manifest");
  std::string acled, ood, date_start, date_end;
  int ood_count = 0, vocab_size = 500;
  double protests_fraction = 1.0;
  unsigned long long ingest_seed = 0;
  std::string ingest_out = run_root() + "/corpus";
  ingest->add_option("--acled", acled, "ACLED event export (csv)");
  ingest->add_option("--ood", ood, "out-of-domain texts, one per line");
  ingest->add_option("--ood-count", ood_count, "out-of-domain sample size");
  ingest->add_option("--protests-fraction", protests_fraction,
                     "Protests subsampling fraction in (0, 1]");
  ingest->add_option("--date-start", date_start, "inclusive start date");
  ingest->add_option("--date-end", date_end, "inclusive end date");
  ingest->add_option("--seed", ingest_seed, "sampling and split seed");
  ingest->add_option("--vocab-size", vocab_size, "bag-of-words size");
  ingest->add_option("--out", ingest_out, "output directory");

  // train / finetune
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_corpus, train_config, mode = "cantm_ia",
              profile = "tiny", backbone_weights;
  double ratio = 0.5, lambda = 1.0;
  unsigned long long train_seed = 0;
  int epochs = 5, batch_size = 64;
  std::string train_out = run_root() + "/checkpoint";
  train->add_option("--corpus", train_corpus, "corpus manifest directory")
      ->required();
  train->add_option("--config", train_config,
                    "train.yaml/train.json config file (flags win)");
  train->add_option("--mode", mode, "bert | cantm | cantm-ia");
  train->add_option("--ratio", ratio, "rationale ratio (cantm-ia)");
  train->add_option("--lambda", lambda, "classification loss weight");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--profile", profile, "tiny | pretrained");
  train->add_option("--backbone-weights", backbone_weights,
                    "weights archive for the pretrained profile");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch-size", batch_size, "minibatch size");
  train->add_option("--out", train_out, "checkpoint directory");

  auto* finetune =
      app.add_subcommand("finetune", "One-epoch cantm-ia fine-tune");
  std::string ft_base, ft_corpus, ft_config;
  unsigned long long ft_seed = 0;
  std::string ft_out = run_root() + "/checkpoint-ft";
  finetune->add_option("--base", ft_base, "trained cantm checkpoint")
      ->required();
  finetune->add_option("--corpus", ft_corpus, "corpus manifest directory")
      ->required();
  finetune->add_option("--config", ft_config, "config file");
  finetune->add_option("--seed", ft_seed, "training seed");
  finetune->add_option("--out", ft_out, "checkpoint directory");

  // eval / topics / explain / report
  auto* eval = app.add_subcommand("eval", "Test-split metrics");
  std::string eval_ckpt, eval_corpus, eval_out = run_root() + "/eval";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")
      ->required();
  eval->add_option("--corpus", eval_corpus, "corpus manifest directory")
      ->required();
  eval->add_option("--out", eval_out, "output directory");

  auto* topics = app.add_subcommand("topics", "Per-class topic words");
  std::string top_ckpt, top_corpus, top_out = run_root() + "/topics";
  int top_n = 10;
  bool classifier_weights = false;
  topics->add_option("--checkpoint", top_ckpt, "checkpoint directory")
      ->required();
  topics->add_option("--corpus", top_corpus, "corpus manifest directory")
      ->required();
  topics->add_option("--n", top_n, "words per class");
  topics->add_flag("--classifier-weights", classifier_weights,
                   "use the classifier-weight extraction");
  topics->add_option("--out", top_out, "output directory");

  auto* explain = app.add_subcommand(
      "explain", "Saliency rationale for one text (stdin or --doc-id)");
  std::string ex_ckpt, ex_corpus, ex_doc, ex_format = "ansi";
  double ex_ratio = 0.5;
  std::string ex_out = run_root() + "/explain";
  explain->add_option("--checkpoint", ex_ckpt, "checkpoint directory")
      ->required();
  explain->add_option("--corpus", ex_corpus,
                      "corpus manifest (for --doc-id lookup)");
  explain->add_option("--doc-id", ex_doc, "explain this corpus document");
  explain->add_option("--ratio", ex_ratio, "rationale ratio in (0, 1]");
  explain->add_option("--format", ex_format, "ansi | html | json");
  explain->add_option("--out", ex_out, "output directory");

  auto* report = app.add_subcommand("report", "Render metrics + topics");
  std::string rep_metrics, rep_topics, rep_examples;
  std::string rep_out = run_root() + "/report";
  report->add_option("--metrics", rep_metrics, "metrics.json")->required();
  report->add_option("--topics", rep_topics, "topics.json")->required();
  report->add_option("--examples", rep_examples,
                     "explanation records (json array)");
  report->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest)
      return cmd_ingest(acled, ood, ood_count, protests_fraction, date_start,
                        date_end, ingest_seed, vocab_size, ingest_out);
    if (*train) {
      json cfg = resolve_train_config(train_config, *train, mode, ratio,
                                      lambda, train_seed, profile,
                                      backbone_weights, epochs, batch_size);
      return cmd_train(train_corpus, cfg, train_out);
    }
    if (*finetune) {
      json cfg = json::object();
      if (!ft_config.empty()) cfg = load_config_file(ft_config);
      if (finetune->count("--seed")) cfg["seed"] = ft_seed;
      return cmd_finetune(ft_base, ft_corpus, cfg, ft_out);
    }
    if (*eval) return cmd_eval(eval_ckpt, eval_corpus, eval_out);
    if (*topics)
      return cmd_topics(top_ckpt, top_corpus, top_n, classifier_weights,
                        top_out);
    if (*explain)
      return cmd_explain(ex_ckpt, ex_corpus, ex_doc, ex_ratio, ex_format,
                         ex_out);
    if (*report)
      return cmd_report(rep_metrics, rep_topics, rep_examples, rep_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
