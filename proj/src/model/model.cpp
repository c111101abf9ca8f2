#include "model/model.hpp"

#include <stdexcept>

namespace cantm::model {

using core::ParamStore;
using core::Rng;
using core::Tape;
using core::Tensor;

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::cantm:
      return "cantm";
    case Mode::cantm_ia:
      return "cantm_ia";
    case Mode::bert:
      return "bert";
  }
  throw std::runtime_error("unknown mode value");
}

Mode mode_from_name(const std::string& name) {
  if (name == "cantm") return Mode::cantm;
  if (name == "cantm_ia" || name == "cantm-ia") return Mode::cantm_ia;
  if (name == "bert") return Mode::bert;
  throw std::runtime_error("unknown mode: " + name);
}

Model::Model(ModelConfig cfg, corpus::Vocabulary vocab,
             backbone::WordPieceTokenizer tokenizer)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      tokenizer_(std::move(tokenizer)),
      encoder_(cfg.backbone) {
  if (cfg_.vocab != vocab_.size())
    throw std::runtime_error("config vocab size does not match vocabulary");
  if (cfg_.latent < 1 || cfg_.classes < 2)
    throw std::runtime_error("bad latent/class dimensions");
}

std::vector<std::string> Model::head_keys(const ModelConfig& cfg) {
  if (cfg.mode == Mode::bert)
    return {"bert.hidden.w", "bert.hidden.b", "bert.cls.w", "bert.cls.b"};
  return {"m1.mu.w",   "m1.mu.b",   "m1.sig.w",  "m1.sig.b", "m1.dec.w",
          "m1.dec.b",  "m1.cls.w",  "m1.cls.b",  "m2.fuse.w", "m2.fuse.b",
          "m2.mu.w",   "m2.mu.b",   "m2.sig.w",  "m2.sig.b", "m2.dec.w",
          "m2.dec.b",  "m2.cls.w",  "m2.cls.b"};
}

namespace {
Tensor randn(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (double& x : t.v) x = stddev * rng.normal();
  return t;
}
}  // namespace

void Model::init_heads(Rng& rng) {
  const int H = cfg_.backbone.hidden;
  const int K = cfg_.latent;
  const int V = cfg_.vocab;
  const int C = cfg_.classes;
  const double s = 0.02;
  auto& t = params_.tensors;
  if (cfg_.mode == Mode::bert) {
    const int D = cfg_.bert_dim;
    t["bert.hidden.w"] = randn(H, D, s, rng);
    t["bert.hidden.b"] = Tensor(1, D, 0.0);
    t["bert.cls.w"] = randn(D, C, s, rng);
    t["bert.cls.b"] = Tensor(1, C, 0.0);
    return;
  }
  t["m1.mu.w"] = randn(H, K, s, rng);
  t["m1.mu.b"] = Tensor(1, K, 0.0);
  t["m1.sig.w"] = randn(H, K, s, rng);
  t["m1.sig.b"] = Tensor(1, K, 0.0);
  t["m1.dec.w"] = randn(K, V, s, rng);
  t["m1.dec.b"] = Tensor(1, V, 0.0);
  t["m1.cls.w"] = randn(K, C, s, rng);
  t["m1.cls.b"] = Tensor(1, C, 0.0);
  t["m2.fuse.w"] = randn(H + C, K, s, rng);
  t["m2.fuse.b"] = Tensor(1, K, 0.0);
  t["m2.mu.w"] = randn(K, K, s, rng);
  t["m2.mu.b"] = Tensor(1, K, 0.0);
  t["m2.sig.w"] = randn(K, K, s, rng);
  t["m2.sig.b"] = Tensor(1, K, 0.0);
  t["m2.dec.w"] = randn(m2_decoder_input_dim(), V, s, rng);
  t["m2.dec.b"] = Tensor(1, V, 0.0);
  t["m2.cls.w"] = randn(K, C, s, rng);
  t["m2.cls.b"] = Tensor(1, C, 0.0);
}

void Model::mark_trainable() {
  params_.trainable.clear();
  encoder_.unlock_last_layer(params_);
  for (const auto& k : head_keys(cfg_)) params_.trainable.insert(k);
}

void Model::init(Rng& rng) {
  encoder_.init_params(params_, tokenizer_.piece_count(), rng);
  init_heads(rng);
  mark_trainable();
}

void Model::init_with_backbone(const core::Archive& backbone_weights,
                               Rng& rng) {
  encoder_.load_params(params_, backbone_weights, tokenizer_.piece_count());
  init_heads(rng);
  mark_trainable();
}

ModelOutput Model::forward(Tape& tape, const corpus::Document& doc,
                           const ForwardOptions& opts) const {
  const int K = cfg_.latent;
  auto weight = [&](const std::string& key) -> Tape::Ref {
    const Tensor& t = params_.get(key);
    if (params_.is_trainable(key)) return tape.param(key, t);
    return tape.input(t);
  };

  ModelOutput out;
  out.tokens = tokenizer_.tokenize(doc.text, cfg_.backbone.max_len);
  auto enc = encoder_.forward(tape, out.tokens, params_);
  out.refs.h = enc.h;
  out.scores = saliency::saliency_from_attention(enc.attention, out.tokens);
  const double ratio = opts.ratio_override > 0.0 ? opts.ratio_override
                                                 : cfg_.ratio;
  out.rationales = saliency::select_rationales(out.scores, ratio);

  if (cfg_.mode == Mode::bert) {
    Tape::Ref hidden = tape.add_rowvec(
        tape.matmul(enc.h, weight("bert.hidden.w")), weight("bert.hidden.b"));
    out.refs.yhat1 = tape.row_softmax(tape.add_rowvec(
        tape.matmul(hidden, weight("bert.cls.w")), weight("bert.cls.b")));
    out.h = tape.value(out.refs.h);
    out.yhat_m1 = tape.value(out.refs.yhat1);
    if (!out.h.finite()) throw std::runtime_error("non-finite encoder output");
    return out;
  }

  auto sample = [&](Tape::Ref mu, Tape::Ref logsig,
                    const Tensor* noise) -> Tape::Ref {
    if (!opts.training) return mu;  // posterior mean at evaluation time
    if (noise == nullptr)
      throw std::runtime_error("training forward requires explicit noise");
    if (noise->rows != 1 || noise->cols != K)
      throw std::runtime_error("noise has wrong shape");
    Tape::Ref sigma = tape.exp_(logsig);
    return tape.add(mu, tape.mul(sigma, tape.input(*noise)));
  };

  // M1: classifier-regularised VAE.
  out.refs.mu1 = tape.add_rowvec(tape.matmul(enc.h, weight("m1.mu.w")),
                                 weight("m1.mu.b"));
  out.refs.logsig1 = tape.add_rowvec(tape.matmul(enc.h, weight("m1.sig.w")),
                                     weight("m1.sig.b"));
  out.refs.z = sample(out.refs.mu1, out.refs.logsig1, opts.noise_m1);
  out.refs.recon1 = tape.row_softmax(tape.add_rowvec(
      tape.matmul(out.refs.z, weight("m1.dec.w")), weight("m1.dec.b")));
  out.refs.yhat1 = tape.row_softmax(tape.add_rowvec(
      tape.matmul(out.refs.z, weight("m1.cls.w")), weight("m1.cls.b")));

  // M2: classifier-aware VAE; the fused representation m carries the
  // classification information for the whole branch.
  Tape::Ref hy = tape.concat_cols(enc.h, out.refs.yhat1);
  out.refs.m = tape.tanh_(tape.add_rowvec(tape.matmul(hy, weight("m2.fuse.w")),
                                          weight("m2.fuse.b")));
  out.refs.mu2 = tape.add_rowvec(tape.matmul(out.refs.m, weight("m2.mu.w")),
                                 weight("m2.mu.b"));
  out.refs.logsig2 = tape.add_rowvec(
      tape.matmul(out.refs.m, weight("m2.sig.w")), weight("m2.sig.b"));
  out.refs.zs = sample(out.refs.mu2, out.refs.logsig2, opts.noise_m2);

  Tape::Ref dec_w = weight("m2.dec.w");
  Tape::Ref dec_b = weight("m2.dec.b");
  if (cfg_.mode == Mode::cantm) {
    Tape::Ref zy = tape.concat_cols(out.refs.zs, out.refs.yhat1);
    out.refs.recon2 =
        tape.row_softmax(tape.add_rowvec(tape.matmul(zy, dec_w), dec_b));
    Tape::Ref zeros = tape.input(Tensor(1, K, 0.0));
    Tape::Ref zy0 = tape.concat_cols(zeros, out.refs.yhat1);
    out.refs.cross_recon =
        tape.row_softmax(tape.add_rowvec(tape.matmul(zy0, dec_w), dec_b));
  } else {
    out.refs.recon2 = tape.row_softmax(
        tape.add_rowvec(tape.matmul(out.refs.zs, dec_w), dec_b));
  }
  out.refs.yhat2 = tape.row_softmax(tape.add_rowvec(
      tape.matmul(out.refs.zs, weight("m2.cls.w")), weight("m2.cls.b")));

  out.h = tape.value(out.refs.h);
  out.mu1 = tape.value(out.refs.mu1);
  out.logsig1 = tape.value(out.refs.logsig1);
  out.mu2 = tape.value(out.refs.mu2);
  out.logsig2 = tape.value(out.refs.logsig2);
  out.z = tape.value(out.refs.z);
  out.zs = tape.value(out.refs.zs);
  out.recon_m1 = tape.value(out.refs.recon1);
  out.recon_m2 = tape.value(out.refs.recon2);
  out.yhat_m1 = tape.value(out.refs.yhat1);
  out.yhat_m2 = tape.value(out.refs.yhat2);
  if (!out.h.finite()) throw std::runtime_error("non-finite encoder output");
  return out;
}

Tape::Ref Model::decode_from_class_probs(Tape& tape, Tape::Ref yhat) const {
  if (cfg_.mode != Mode::cantm)
    throw std::runtime_error(
        "class-probability decoding requires the cantm decoder");
  Tape::Ref zeros = tape.input(Tensor(1, cfg_.latent, 0.0));
  Tape::Ref zy0 = tape.concat_cols(zeros, yhat);
  Tape::Ref dec_w = tape.input(params_.get("m2.dec.w"));
  Tape::Ref dec_b = tape.input(params_.get("m2.dec.b"));
  return tape.row_softmax(tape.add_rowvec(tape.matmul(zy0, dec_w), dec_b));
}

void Model::convert_to_ia() {
  if (cfg_.mode != Mode::cantm)
    throw std::runtime_error("convert_to_ia: model is not in cantm mode");
  const Tensor& old = params_.get("m2.dec.w");
  Tensor reduced(cfg_.latent, cfg_.vocab);
  for (int i = 0; i < cfg_.latent; ++i)
    for (int j = 0; j < cfg_.vocab; ++j) reduced.at(i, j) = old.at(i, j);
  params_.tensors["m2.dec.w"] = std::move(reduced);
  cfg_.mode = Mode::cantm_ia;
}

}  // namespace cantm::model
