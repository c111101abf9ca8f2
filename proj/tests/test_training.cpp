#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "harness.hpp"
#include "training/trainer.hpp"

using namespace cantm;
using namespace cantm::training;
using cantm::core::Rng;
using cantm::core::Tape;
using cantm::core::Tensor;

namespace {

namespace fs = std::filesystem;

// Three separable classes over a six-word vocabulary, 12 documents per
// class split 8/2/2.
corpus::CorpusManifest tiny_manifest() {
  const std::vector<std::string> words = {"aa", "bb", "cc", "dd", "ee", "ff"};
  const char* texts[3] = {"aa bb aa", "cc dd cc", "ee ff ee"};
  std::vector<corpus::Document> docs;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 12; ++i) {
      corpus::Split split = i < 8 ? corpus::Split::train
                           : i < 10 ? corpus::Split::valid
                                    : corpus::Split::test;
      docs.push_back({"c" + std::to_string(c) + "_" + std::to_string(i),
                      texts[c], c, split});
    }
  }
  corpus::CorpusManifest m;
  m.docs = corpus::DocumentSet(std::move(docs));
  m.vocab = corpus::Vocabulary(words);
  return m;
}

TrainConfig tiny_config(model::Mode mode, std::uint64_t seed) {
  TrainConfig c;
  c.model.mode = mode;
  c.model.latent = 4;
  c.model.classes = 3;
  c.model.ratio = 0.5;
  c.model.backbone.hidden = 8;
  c.model.backbone.heads = 2;
  c.model.backbone.layers = 2;
  c.model.backbone.ffn = 16;
  c.model.backbone.max_len = 16;
  c.epochs = 2;
  c.batch_size = 4;
  c.lr_heads = 1e-2;
  c.lr_backbone = 1e-3;
  c.seed = seed;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("cantm_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Tensor predict_probs(const model::Model& m, const corpus::Document& doc) {
  Tape tape;
  auto out = m.forward(tape, doc, {});
  return out.yhat_m1;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c = tiny_config(model::Mode::cantm_ia, 1);
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS(c.validate());
  c = tiny_config(model::Mode::cantm_ia, 1);
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = tiny_config(model::Mode::cantm_ia, 1);
  c.lr_heads = 0.0;
  CHECK_THROWS(c.validate());
  c = tiny_config(model::Mode::cantm_ia, 1);
  c.lambda = -0.5;
  CHECK_THROWS(c.validate());
  c = tiny_config(model::Mode::cantm_ia, 1);
  c.model.ratio = 0.0;
  CHECK_THROWS(c.validate());
  c.model.ratio = 1.5;
  CHECK_THROWS(c.validate());
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto manifest = tiny_manifest();
  auto cfg = tiny_config(model::Mode::cantm_ia, 7);
  auto a = train(cfg, manifest);
  auto b = train(cfg, manifest);

  REQUIRE(a.history.size() == 2);
  CHECK(a.history[0].epoch == 1);
  CHECK(a.history[1].epoch == 2);
  REQUIRE(b.history.size() == 2);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
  }
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(!a.steps.empty());
  for (std::size_t i = 0; i < a.steps.size(); ++i)
    CHECK(a.steps[i].loss.total == b.steps[i].loss.total);
  for (const auto& [key, t] : a.model->params().tensors)
    CHECK(t.v == b.model->params().get(key).v);

  auto c = train(tiny_config(model::Mode::cantm_ia, 8), manifest);
  CHECK(c.history[0].train_loss != a.history[0].train_loss);
}

TEST_CASE("frozen parameters never move") {
  auto manifest = tiny_manifest();
  auto cfg = tiny_config(model::Mode::cantm, 11);
  auto ckpt = train(cfg, manifest);

  // Rebuild the untrained initialization the trainer starts from.
  model::ModelConfig mc = cfg.model;
  mc.vocab = manifest.vocab.size();
  model::Model fresh(mc, manifest.vocab,
                     backbone::WordPieceTokenizer::char_fallback());
  Rng rng(cfg.seed);
  fresh.init(rng);

  bool some_trainable_moved = false;
  for (const auto& [key, t] : ckpt.model->params().tensors) {
    const Tensor& before = fresh.params().get(key);
    if (ckpt.model->params().is_trainable(key)) {
      if (t.v != before.v) some_trainable_moved = true;
    } else {
      CHECK(t.v == before.v);  // bitwise
    }
  }
  CHECK(some_trainable_moved);
}

TEST_CASE("checkpoint round-trips bitwise") {
  TempDir dir("ckpt");
  auto manifest = tiny_manifest();
  auto ckpt = train(tiny_config(model::Mode::cantm_ia, 3), manifest);
  save_checkpoint(ckpt, dir.str());
  for (const char* f : {"weights.bin", "vocab.txt", "config.json",
                        "history.jsonl", "steps.jsonl"})
    CHECK(fs::exists(dir.path / f));

  auto loaded = load_checkpoint(dir.str());
  CHECK(loaded.epoch == ckpt.epoch);
  CHECK(loaded.config.seed == ckpt.config.seed);
  CHECK(loaded.model->config().mode == model::Mode::cantm_ia);
  REQUIRE(loaded.history.size() == ckpt.history.size());
  CHECK(loaded.history.back().val_accuracy ==
        ckpt.history.back().val_accuracy);
  for (const auto& [key, t] : ckpt.model->params().tensors)
    CHECK(t.v == loaded.model->params().get(key).v);

  // Predictions need nothing beyond the checkpoint directory.
  corpus::Document doc{"q", "cc dd cc", 1, corpus::Split::test};
  CHECK(predict_probs(*ckpt.model, doc).v ==
        predict_probs(*loaded.model, doc).v);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("corrupt");
  auto manifest = tiny_manifest();
  auto cfg = tiny_config(model::Mode::cantm_ia, 4);
  cfg.epochs = 1;
  auto ckpt = train(cfg, manifest);
  save_checkpoint(ckpt, dir.str());

  auto bytes = file_bytes(dir.path / "weights.bin");
  std::ofstream out(dir.path / "weights.bin",
                    std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS(load_checkpoint(dir.str()));
  CHECK_THROWS(load_checkpoint(dir.str() + "/missing"));
}

TEST_CASE("fine-tune restructures a cantm base") {
  TempDir dir("base");
  auto manifest = tiny_manifest();
  auto base_cfg = tiny_config(model::Mode::cantm, 5);
  base_cfg.epochs = 1;
  auto base = train(base_cfg, manifest);
  save_checkpoint(base, dir.str());
  const std::string base_weights = file_bytes(dir.path / "weights.bin");

  auto ft_cfg = tiny_config(model::Mode::cantm_ia, 5);
  ft_cfg.epochs = 1;
  ft_cfg.model.ratio = 0.5;
  auto tuned = fine_tune(dir.str(), ft_cfg, manifest);
  CHECK(tuned.model->config().mode == model::Mode::cantm_ia);
  CHECK(tuned.model->params().get("m2.dec.w").rows == 4);  // latent rows only
  CHECK(tuned.epoch >= base.epoch);
  CHECK(tuned.history.size() == base.history.size() + 1);
  // The base directory is read, never written.
  CHECK(file_bytes(dir.path / "weights.bin") == base_weights);

  auto bad = ft_cfg;
  bad.model.mode = model::Mode::cantm;
  CHECK_THROWS(fine_tune(dir.str(), bad, manifest));
  bad = ft_cfg;
  bad.epochs = 2;
  CHECK_THROWS(fine_tune(dir.str(), bad, manifest));
  bad = ft_cfg;
  bad.model.ratio = 0.6;
  CHECK_THROWS(fine_tune(dir.str(), bad, manifest));

  TempDir ia_dir("iabase");
  auto ia = train(tiny_config(model::Mode::cantm_ia, 6), manifest);
  save_checkpoint(ia, ia_dir.str());
  CHECK_THROWS(fine_tune(ia_dir.str(), ft_cfg, manifest));
}

TEST_CASE("optimizer refuses gradients for frozen parameters") {
  core::ParamStore store;
  store.tensors["frozen"] = Tensor(2, 2, 1.0);
  store.tensors["free"] = Tensor(2, 2, 1.0);
  store.trainable.insert("free");

  AdamW opt(1e-3, 1e-3, 0.0);
  std::map<std::string, Tensor> ok{{"free", Tensor(2, 2, 0.5)}};
  CHECK_NOTHROW(opt.step(store, ok));
  CHECK(store.tensors["free"].v[0] != 1.0);
  CHECK(store.tensors["frozen"].v[0] == 1.0);

  std::map<std::string, Tensor> bad{{"frozen", Tensor(2, 2, 0.5)}};
  CHECK_THROWS_WITH_AS(opt.step(store, bad), doctest::Contains("frozen"),
                       std::runtime_error);
}

TEST_CASE("training requires a train split") {
  auto manifest = tiny_manifest();
  for (auto& d : manifest.docs.mutable_docs()) d.split = corpus::Split::test;
  CHECK_THROWS(train(tiny_config(model::Mode::cantm_ia, 1), manifest));
}

TEST_CASE("validation accuracy handles an empty validation split") {
  auto manifest = tiny_manifest();
  auto cfg = tiny_config(model::Mode::cantm_ia, 2);
  model::ModelConfig mc = cfg.model;
  mc.vocab = manifest.vocab.size();
  model::Model m(mc, manifest.vocab,
                 backbone::WordPieceTokenizer::char_fallback());
  Rng rng(2);
  m.init(rng);
  corpus::DocumentSet empty;
  CHECK(validation_accuracy(m, empty) == 0.0);
  CHECK(validation_accuracy(m, manifest.docs) >= 0.0);
  CHECK(validation_accuracy(m, manifest.docs) <= 1.0);
}
