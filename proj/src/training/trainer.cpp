#include "training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "core/archive.hpp"

namespace cantm::training {

using core::ParamStore;
using core::Rng;
using core::Tape;
using core::Tensor;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::runtime_error("epochs must be >= 1");
  if (batch_size < 1) throw std::runtime_error("batch size must be >= 1");
  if (lr_backbone <= 0.0 || lr_heads <= 0.0)
    throw std::runtime_error("learning rates must be > 0");
  if (lambda < 0.0) throw std::runtime_error("lambda must be >= 0");
  if (model.ratio <= 0.0 || model.ratio > 1.0)
    throw std::runtime_error("ratio must be in (0, 1]");
}

AdamW::AdamW(double lr_backbone, double lr_heads, double weight_decay)
    : lr_backbone_(lr_backbone),
      lr_heads_(lr_heads),
      weight_decay_(weight_decay) {}

void AdamW::step(ParamStore& params,
                 const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [key, g] : grads) {
    if (!params.is_trainable(key))
      throw std::runtime_error("gradient for frozen parameter '" + key + "'");
    Tensor& w = params.get_mut(key);
    Tensor& m = m_.try_emplace(key, w.rows, w.cols, 0.0).first->second;
    Tensor& v = v_.try_emplace(key, w.rows, w.cols, 0.0).first->second;
    const double lr =
        key.rfind("backbone.", 0) == 0 ? lr_backbone_ : lr_heads_;
    // Decay only true weight matrices, not biases or layernorm vectors.
    const double wd = (w.rows > 1 && w.cols > 1) ? weight_decay_ : 0.0;
    for (int i = 0; i < w.size(); ++i) {
      m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g.v[i];
      v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      w.v[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd * w.v[i]);
    }
  }
}

double validation_accuracy(const model::Model& m,
                           const corpus::DocumentSet& docs) {
  long long correct = 0;
  long long total = 0;
  for (const auto& d : docs.docs()) {
    if (d.split != corpus::Split::valid) continue;
    Tape tape;
    model::ForwardOptions opts;  // evaluation mode
    auto out = m.forward(tape, d, opts);
    int argmax = 0;
    for (int c = 1; c < out.yhat_m1.cols; ++c)
      if (out.yhat_m1.at(0, c) > out.yhat_m1.at(0, argmax)) argmax = c;
    if (argmax == d.label) ++correct;
    ++total;
  }
  if (total == 0) return 0.0;
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

std::map<std::string, Tensor> snapshot(const ParamStore& p) {
  return p.tensors;
}

json breakdown_json(long long step, const objective::LossBreakdown& b) {
  json rec = {{"step", step},
              {"cls", b.cls_loss},
              {"elbo1", b.elbo_m1},
              {"elbo2", b.elbo_m2},
              {"total", b.total}};
  rec["cross"] = b.has_cross ? json(b.cross_term) : json(nullptr);
  return rec;
}

}  // namespace

Checkpoint train_from(Checkpoint start, const TrainConfig& config,
                      const corpus::CorpusManifest& manifest) {
  config.validate();
  model::Model& m = *start.model;
  const int K = m.config().latent;

  std::vector<int> train_idx;
  const auto& docs = manifest.docs.docs();
  for (int i = 0; i < static_cast<int>(docs.size()); ++i)
    if (docs[i].split == corpus::Split::train) train_idx.push_back(i);
  if (train_idx.empty())
    throw std::runtime_error("train: corpus has no train split");

  objective::Hyper hyper;
  hyper.lambda = config.lambda;
  hyper.mode = m.config().mode;
  hyper.ratio = m.config().ratio;

  AdamW opt(config.lr_backbone, config.lr_heads, config.weight_decay);
  Rng base(config.seed);

  std::map<std::string, Tensor> best_weights = snapshot(m.params());
  double best_acc = -1.0;
  int best_epoch = start.epoch;
  long long step_counter =
      start.steps.empty() ? 0 : start.steps.back().step;
  objective::LossBreakdown last_finite;

  const int first_epoch = start.epoch + 1;
  for (int epoch = first_epoch; epoch < first_epoch + config.epochs; ++epoch) {
    Rng erng = base.fork(static_cast<std::uint64_t>(epoch));
    std::vector<int> order = train_idx;
    erng.shuffle(order);

    double epoch_loss = 0.0;
    long long epoch_count = 0;
    std::map<std::string, Tensor> grads;
    int in_batch = 0;

    auto flush_batch = [&]() {
      if (in_batch == 0) return;
      for (auto& [k, g] : grads)
        for (double& x : g.v) x /= static_cast<double>(in_batch);
      opt.step(m.params_mut(), grads);
      grads.clear();
      in_batch = 0;
    };

    objective::LossBreakdown batch_sum;
    int batch_sum_n = 0;
    for (int idx : order) {
      const corpus::Document& doc = docs[idx];
      Tensor noise1(1, K), noise2(1, K);
      for (double& x : noise1.v) x = erng.normal();
      for (double& x : noise2.v) x = erng.normal();

      Tape tape;
      model::ForwardOptions fopts;
      fopts.training = true;
      fopts.noise_m1 = &noise1;
      fopts.noise_m2 = &noise2;
      auto out = m.forward(tape, doc, fopts);
      auto targets = objective::make_targets(m, doc, out, hyper.mode);
      auto refs = objective::joint_loss_refs(tape, m, out, targets.m1,
                                             targets.m2, doc.label, hyper);
      auto b = objective::breakdown(tape, refs, hyper.lambda);
      if (!std::isfinite(b.total)) {
        json last = breakdown_json(step_counter, last_finite);
        throw std::runtime_error(
            "training diverged (non-finite loss); last finite breakdown: " +
            last.dump());
      }
      last_finite = b;
      epoch_loss += b.total;
      ++epoch_count;
      batch_sum.cls_loss += b.cls_loss;
      batch_sum.elbo_m1 += b.elbo_m1;
      batch_sum.elbo_m2 += b.elbo_m2;
      batch_sum.cross_term += b.cross_term;
      batch_sum.total += b.total;
      batch_sum.has_cross = b.has_cross;
      ++batch_sum_n;

      tape.backward(refs.total);
      for (auto pref : tape.params()) {
        const std::string& name = tape.param_name(pref);
        const Tensor& g = tape.grad(pref);
        auto it = grads.find(name);
        if (it == grads.end()) {
          grads.emplace(name, g);
        } else {
          for (int i = 0; i < g.size(); ++i) it->second.v[i] += g.v[i];
        }
      }
      if (++in_batch >= config.batch_size) {
        ++step_counter;
        objective::LossBreakdown mean = batch_sum;
        mean.cls_loss /= batch_sum_n;
        mean.elbo_m1 /= batch_sum_n;
        mean.elbo_m2 /= batch_sum_n;
        mean.cross_term /= batch_sum_n;
        mean.total /= batch_sum_n;
        start.steps.push_back({step_counter, mean});
        batch_sum = objective::LossBreakdown{};
        batch_sum_n = 0;
        flush_batch();
      }
    }
    if (in_batch > 0) {
      ++step_counter;
      if (batch_sum_n > 0) {
        objective::LossBreakdown mean = batch_sum;
        mean.cls_loss /= batch_sum_n;
        mean.elbo_m1 /= batch_sum_n;
        mean.elbo_m2 /= batch_sum_n;
        mean.cross_term /= batch_sum_n;
        mean.total /= batch_sum_n;
        start.steps.push_back({step_counter, mean});
      }
      flush_batch();
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_count > 0 ? epoch_loss / epoch_count : 0.0;
    es.val_accuracy = validation_accuracy(m, manifest.docs);
    start.history.push_back(es);
    start.epoch = epoch;

    // Ties go to the later epoch: equal validation accuracy, more training.
    if (es.val_accuracy >= best_acc) {
      best_acc = es.val_accuracy;
      best_epoch = epoch;
      best_weights = snapshot(m.params());
    }
  }

  // Model selection: restore the best-by-validation-accuracy weights.
  m.params_mut().tensors = std::move(best_weights);
  start.epoch = best_epoch;
  start.config = config;
  start.config.model = m.config();
  return start;
}

Checkpoint train(const TrainConfig& config,
                 const corpus::CorpusManifest& manifest) {
  config.validate();
  model::ModelConfig mc = config.model;
  mc.vocab = manifest.vocab.size();

  auto tokenizer = backbone::WordPieceTokenizer::char_fallback();
  Checkpoint ckpt;
  ckpt.model = std::make_unique<model::Model>(mc, manifest.vocab, tokenizer);
  Rng rng(config.seed);
  if (mc.backbone.profile == "pretrained") {
    auto archive = core::Archive::load(mc.backbone.weights_path);
    auto tok = backbone::WordPieceTokenizer::deserialize(
        archive.string("tokenizer.pieces"));
    ckpt.model = std::make_unique<model::Model>(mc, manifest.vocab, tok);
    ckpt.model->init_with_backbone(archive, rng);
  } else {
    ckpt.model->init(rng);
  }
  ckpt.config = config;
  ckpt.epoch = 0;
  return train_from(std::move(ckpt), config, manifest);
}

Checkpoint fine_tune(const std::string& base_checkpoint_dir,
                     TrainConfig config,
                     const corpus::CorpusManifest& manifest) {
  Checkpoint base = load_checkpoint(base_checkpoint_dir);
  if (base.model->config().mode != model::Mode::cantm)
    throw std::runtime_error("fine_tune: base checkpoint is not cantm mode");
  if (config.model.mode != model::Mode::cantm_ia)
    throw std::runtime_error("fine_tune: config mode must be cantm_ia");
  if (config.epochs != 1)
    throw std::runtime_error("fine_tune: exactly one epoch is required");
  if (config.model.ratio != 0.5)
    throw std::runtime_error("fine_tune: ratio must be 0.5");

  base.model->convert_to_ia();
  base.model->config_mut().ratio = config.model.ratio;
  config.model = base.model->config();
  return train_from(std::move(base), config, manifest);
}

namespace {

json config_to_json(const TrainConfig& c) {
  return json{{"mode", model::mode_name(c.model.mode)},
              {"latent", c.model.latent},
              {"classes", c.model.classes},
              {"vocab", c.model.vocab},
              {"ratio", c.model.ratio},
              {"lambda", c.lambda},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_backbone", c.lr_backbone},
              {"lr_heads", c.lr_heads},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"backbone",
               {{"profile", c.model.backbone.profile},
                {"hidden", c.model.backbone.hidden},
                {"heads", c.model.backbone.heads},
                {"layers", c.model.backbone.layers},
                {"ffn", c.model.backbone.ffn},
                {"max_len", c.model.backbone.max_len},
                {"weights_path", c.model.backbone.weights_path}}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.model.mode = model::mode_from_name(j.at("mode").get<std::string>());
  c.model.latent = j.at("latent").get<int>();
  c.model.classes = j.at("classes").get<int>();
  c.model.vocab = j.at("vocab").get<int>();
  c.model.ratio = j.at("ratio").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_backbone = j.at("lr_backbone").get<double>();
  c.lr_heads = j.at("lr_heads").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& b = j.at("backbone");
  c.model.backbone.profile = b.at("profile").get<std::string>();
  c.model.backbone.hidden = b.at("hidden").get<int>();
  c.model.backbone.heads = b.at("heads").get<int>();
  c.model.backbone.layers = b.at("layers").get<int>();
  c.model.backbone.ffn = b.at("ffn").get<int>();
  c.model.backbone.max_len = b.at("max_len").get<int>();
  c.model.backbone.weights_path = b.value("weights_path", "");
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  std::filesystem::create_directories(dir);
  core::Archive archive;
  archive.tensors = ckpt.model->params().tensors;
  archive.strings["tokenizer.pieces"] = ckpt.model->tokenizer().serialize();
  json meta = config_to_json(ckpt.config);
  meta["epoch"] = ckpt.epoch;
  archive.strings["meta"] = meta.dump();
  archive.save(dir + "/weights.bin");
  ckpt.model->vocab().save(dir + "/vocab.txt");
  std::ofstream cfg(dir + "/config.json", std::ios::trunc);
  cfg << meta.dump(2) << '\n';

  std::ofstream hist(dir + "/history.jsonl", std::ios::trunc);
  for (const auto& e : ckpt.history) {
    json rec = {{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"val_accuracy", e.val_accuracy}};
    hist << rec.dump() << '\n';
  }
  std::ofstream steps(dir + "/steps.jsonl", std::ios::trunc);
  for (const auto& s : ckpt.steps)
    steps << breakdown_json(s.step, s.loss).dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& dir) {
  core::Archive archive = core::Archive::load(dir + "/weights.bin");
  json meta = json::parse(archive.string("meta"));
  TrainConfig config = config_from_json(meta);

  auto vocab = corpus::Vocabulary::load(dir + "/vocab.txt");
  auto tokenizer = backbone::WordPieceTokenizer::deserialize(
      archive.string("tokenizer.pieces"));

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.epoch = meta.value("epoch", 0);
  ckpt.model = std::make_unique<model::Model>(config.model, vocab, tokenizer);
  // Validate shapes by initializing the expected structure, then overwrite
  // with the stored tensors.
  Rng rng(config.seed);
  ckpt.model->init(rng);
  auto& store = ckpt.model->params_mut();
  for (auto& [key, t] : store.tensors) {
    const Tensor& loaded = archive.tensor(key);
    if (loaded.rows != t.rows || loaded.cols != t.cols)
      throw std::runtime_error("checkpoint tensor '" + key +
                               "' has unexpected shape");
    t = loaded;
  }

  std::ifstream hist(dir + "/history.jsonl");
  std::string line;
  while (hist && std::getline(hist, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    EpochStats e;
    e.epoch = rec.at("epoch").get<int>();
    e.train_loss = rec.at("train_loss").get<double>();
    e.val_accuracy = rec.at("val_accuracy").get<double>();
    ckpt.history.push_back(e);
  }
  return ckpt;
}

}  // namespace cantm::training
