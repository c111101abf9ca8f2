#include "backbone/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cantm::backbone {

using core::ParamStore;
using core::Rng;
using core::Tape;
using core::Tensor;

BackboneConfig BackboneConfig::tiny() {
  BackboneConfig c;
  c.profile = "tiny";
  c.hidden = 32;
  c.heads = 2;
  c.layers = 2;
  c.ffn = 64;
  c.max_len = 128;
  return c;
}

BackboneConfig BackboneConfig::pretrained() {
  BackboneConfig c;
  c.profile = "pretrained";
  c.hidden = 768;
  c.heads = 12;
  c.layers = 12;
  c.ffn = 3072;
  c.max_len = 128;
  return c;
}

Encoder::Encoder(BackboneConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.hidden % cfg_.heads != 0)
    throw std::runtime_error("hidden size must be divisible by head count");
  if (cfg_.layers < 1) throw std::runtime_error("need at least one layer");
}

std::vector<std::string> Encoder::last_layer_keys() const {
  const int last = cfg_.layers - 1;
  std::vector<std::string> keys;
  for (const char* s :
       {"attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
        "attn.wo", "attn.bo", "attn.ln.gamma", "attn.ln.beta", "ffn.w1",
        "ffn.b1", "ffn.w2", "ffn.b2", "ffn.ln.gamma", "ffn.ln.beta"})
    keys.push_back(lk(last, s));
  return keys;
}

std::vector<std::string> Encoder::all_keys() const {
  std::vector<std::string> keys = {"backbone.embeddings.word",
                                   "backbone.embeddings.position",
                                   "backbone.embeddings.ln.gamma",
                                   "backbone.embeddings.ln.beta"};
  for (int l = 0; l < cfg_.layers; ++l) {
    for (const char* s :
         {"attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
          "attn.wo", "attn.bo", "attn.ln.gamma", "attn.ln.beta", "ffn.w1",
          "ffn.b1", "ffn.w2", "ffn.b2", "ffn.ln.gamma", "ffn.ln.beta"})
      keys.push_back(lk(l, s));
  }
  return keys;
}

namespace {

Tensor randn(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (double& x : t.v) x = stddev * rng.normal();
  return t;
}

}  // namespace

void Encoder::init_params(ParamStore& store, int piece_count,
                          Rng& rng) const {
  const int H = cfg_.hidden;
  const int F = cfg_.ffn;
  const double s = 0.02;
  store.tensors["backbone.embeddings.word"] = randn(piece_count, H, s, rng);
  store.tensors["backbone.embeddings.position"] =
      randn(cfg_.max_len, H, s, rng);
  store.tensors["backbone.embeddings.ln.gamma"] = Tensor(1, H, 1.0);
  store.tensors["backbone.embeddings.ln.beta"] = Tensor(1, H, 0.0);
  for (int l = 0; l < cfg_.layers; ++l) {
    store.tensors[lk(l, "attn.wq")] = randn(H, H, s, rng);
    store.tensors[lk(l, "attn.bq")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "attn.wk")] = randn(H, H, s, rng);
    store.tensors[lk(l, "attn.bk")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "attn.wv")] = randn(H, H, s, rng);
    store.tensors[lk(l, "attn.bv")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "attn.wo")] = randn(H, H, s, rng);
    store.tensors[lk(l, "attn.bo")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "attn.ln.gamma")] = Tensor(1, H, 1.0);
    store.tensors[lk(l, "attn.ln.beta")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "ffn.w1")] = randn(H, F, s, rng);
    store.tensors[lk(l, "ffn.b1")] = Tensor(1, F, 0.0);
    store.tensors[lk(l, "ffn.w2")] = randn(F, H, s, rng);
    store.tensors[lk(l, "ffn.b2")] = Tensor(1, H, 0.0);
    store.tensors[lk(l, "ffn.ln.gamma")] = Tensor(1, H, 1.0);
    store.tensors[lk(l, "ffn.ln.beta")] = Tensor(1, H, 0.0);
  }
}

void Encoder::load_params(ParamStore& store, const core::Archive& archive,
                          int piece_count) const {
  const int H = cfg_.hidden;
  const int F = cfg_.ffn;
  auto take = [&](const std::string& key, int rows, int cols) {
    store.tensors[key] = archive.tensor_checked(key, rows, cols);
  };
  take("backbone.embeddings.word", piece_count, H);
  take("backbone.embeddings.position", cfg_.max_len, H);
  take("backbone.embeddings.ln.gamma", 1, H);
  take("backbone.embeddings.ln.beta", 1, H);
  for (int l = 0; l < cfg_.layers; ++l) {
    take(lk(l, "attn.wq"), H, H);
    take(lk(l, "attn.bq"), 1, H);
    take(lk(l, "attn.wk"), H, H);
    take(lk(l, "attn.bk"), 1, H);
    take(lk(l, "attn.wv"), H, H);
    take(lk(l, "attn.bv"), 1, H);
    take(lk(l, "attn.wo"), H, H);
    take(lk(l, "attn.bo"), 1, H);
    take(lk(l, "attn.ln.gamma"), 1, H);
    take(lk(l, "attn.ln.beta"), 1, H);
    take(lk(l, "ffn.w1"), H, F);
    take(lk(l, "ffn.b1"), 1, F);
    take(lk(l, "ffn.w2"), F, H);
    take(lk(l, "ffn.b2"), 1, H);
    take(lk(l, "ffn.ln.gamma"), 1, H);
    take(lk(l, "ffn.ln.beta"), 1, H);
  }
}

void Encoder::unlock_last_layer(ParamStore& store) const {
  for (const auto& k : last_layer_keys()) store.trainable.insert(k);
}

Encoder::Output Encoder::forward(Tape& tape, const TokenSequence& tokens,
                                 const ParamStore& store) const {
  const int S = tokens.length();
  const int H = cfg_.hidden;
  const int A = cfg_.heads;
  const int d = H / A;
  if (S > cfg_.max_len)
    throw std::runtime_error("sequence exceeds backbone max_len");

  auto weight = [&](const std::string& key) -> Tape::Ref {
    const Tensor& t = store.get(key);
    if (store.is_trainable(key)) return tape.param(key, t);
    return tape.input(t);
  };

  // Input embeddings are always frozen; assemble them as a constant.
  const Tensor& word_emb = store.get("backbone.embeddings.word");
  const Tensor& pos_emb = store.get("backbone.embeddings.position");
  Tensor x0(S, H);
  for (int i = 0; i < S; ++i) {
    const int id = tokens.piece_ids[i];
    if (id < 0 || id >= word_emb.rows)
      throw std::runtime_error("piece id out of embedding range");
    for (int j = 0; j < H; ++j)
      x0.at(i, j) = word_emb.at(id, j) + pos_emb.at(i, j);
  }
  Tape::Ref x = tape.input(std::move(x0));
  x = tape.row_layernorm(x, weight("backbone.embeddings.ln.gamma"),
                         weight("backbone.embeddings.ln.beta"));

  Output out;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < cfg_.layers; ++l) {
    Tape::Ref q = tape.add_rowvec(tape.matmul(x, weight(lk(l, "attn.wq"))),
                                  weight(lk(l, "attn.bq")));
    Tape::Ref k = tape.add_rowvec(tape.matmul(x, weight(lk(l, "attn.wk"))),
                                  weight(lk(l, "attn.bk")));
    Tape::Ref v = tape.add_rowvec(tape.matmul(x, weight(lk(l, "attn.wv"))),
                                  weight(lk(l, "attn.bv")));
    Tape::Ref ctx = -1;
    std::vector<Tensor> layer_attention;
    for (int h = 0; h < A; ++h) {
      Tape::Ref qh = tape.slice_cols(q, h * d, (h + 1) * d);
      Tape::Ref kh = tape.slice_cols(k, h * d, (h + 1) * d);
      Tape::Ref vh = tape.slice_cols(v, h * d, (h + 1) * d);
      Tape::Ref scores = tape.scale(tape.matmul_nt(qh, kh), scale);
      Tape::Ref probs = tape.row_softmax(scores);
      if (l == cfg_.layers - 1) layer_attention.push_back(tape.value(probs));
      Tape::Ref ctx_h = tape.matmul(probs, vh);
      ctx = (h == 0) ? ctx_h : tape.concat_cols(ctx, ctx_h);
    }
    Tape::Ref attn_out = tape.add_rowvec(
        tape.matmul(ctx, weight(lk(l, "attn.wo"))), weight(lk(l, "attn.bo")));
    x = tape.row_layernorm(tape.add(x, attn_out),
                           weight(lk(l, "attn.ln.gamma")),
                           weight(lk(l, "attn.ln.beta")));
    Tape::Ref f1 = tape.gelu(tape.add_rowvec(
        tape.matmul(x, weight(lk(l, "ffn.w1"))), weight(lk(l, "ffn.b1"))));
    Tape::Ref f2 = tape.add_rowvec(tape.matmul(f1, weight(lk(l, "ffn.w2"))),
                                   weight(lk(l, "ffn.b2")));
    x = tape.row_layernorm(tape.add(x, f2), weight(lk(l, "ffn.ln.gamma")),
                           weight(lk(l, "ffn.ln.beta")));
    if (l == cfg_.layers - 1) out.attention = std::move(layer_attention);
  }

  out.sequence = x;
  out.h = tape.pick_row(x, 0);
  return out;
}

}  // namespace cantm::backbone
