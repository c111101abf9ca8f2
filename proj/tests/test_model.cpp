#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "model/model.hpp"

using namespace cantm;
using namespace cantm::model;
using cantm::core::Rng;
using cantm::core::Tape;
using cantm::core::Tensor;

namespace {

corpus::Vocabulary numbered_vocab(int size) {
  std::vector<std::string> words;
  for (int i = 0; i < size; ++i)
    words.push_back(std::string("w") + static_cast<char>('a' + i / 26) +
                    static_cast<char>('a' + i % 26));
  return corpus::Vocabulary(std::move(words));
}

Model tiny_model(Mode mode, int latent = 6, int vocab = 10, int classes = 7,
                 std::uint64_t seed = 21) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.latent = latent;
  cfg.classes = classes;
  cfg.vocab = vocab;
  Model m(cfg, numbered_vocab(vocab),
          backbone::WordPieceTokenizer::char_fallback());
  Rng rng(seed);
  m.init(rng);
  return m;
}

void check_simplex(const Tensor& t, double tol = 1e-6) {
  REQUIRE(t.rows == 1);
  double sum = 0.0;
  for (double x : t.v) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(tol));
}

const corpus::Document kDoc{"d1", "soldiers destroyed the village church", 0,
                            corpus::Split::train};

}  // namespace

TEST_CASE("mode names round-trip") {
  CHECK(mode_name(Mode::cantm) == "cantm");
  CHECK(mode_name(Mode::cantm_ia) == "cantm_ia");
  CHECK(mode_name(Mode::bert) == "bert");
  CHECK(mode_from_name("cantm") == Mode::cantm);
  CHECK(mode_from_name("cantm-ia") == Mode::cantm_ia);
  CHECK(mode_from_name("cantm_ia") == Mode::cantm_ia);
  CHECK(mode_from_name("bert") == Mode::bert);
  CHECK_THROWS(mode_from_name("gpt"));
}

TEST_CASE("construction validates dimensions") {
  ModelConfig cfg;
  cfg.vocab = 10;
  CHECK_THROWS(Model(cfg, numbered_vocab(9),
                     backbone::WordPieceTokenizer::char_fallback()));
  cfg.latent = 0;
  CHECK_THROWS(Model(cfg, numbered_vocab(10),
                     backbone::WordPieceTokenizer::char_fallback()));
}

TEST_CASE("forward output contract in both topic modes") {
  for (Mode mode : {Mode::cantm, Mode::cantm_ia}) {
    Model m = tiny_model(mode);
    Tape tape;
    auto out = m.forward(tape, kDoc, {});
    check_simplex(out.yhat_m1);
    check_simplex(out.yhat_m2);
    check_simplex(out.recon_m1);
    check_simplex(out.recon_m2);
    CHECK(out.yhat_m1.cols == 7);
    CHECK(out.recon_m1.cols == 10);
    CHECK(out.mu1.cols == 6);
    CHECK(out.logsig1.cols == 6);
    CHECK(out.z.cols == 6);
    CHECK(out.zs.cols == 6);
    CHECK(out.h.finite());
    CHECK(out.scores.word_count() == 5);
    if (mode == Mode::cantm) {
      CHECK(out.refs.cross_recon >= 0);
    } else {
      CHECK(out.refs.cross_recon < 0);
    }
  }
}

TEST_CASE("evaluation forward is deterministic and uses the posterior mean") {
  Model m = tiny_model(Mode::cantm_ia);
  Tape t1, t2;
  auto a = m.forward(t1, kDoc, {});
  auto b = m.forward(t2, kDoc, {});
  CHECK(a.yhat_m1.v == b.yhat_m1.v);
  CHECK(a.recon_m2.v == b.recon_m2.v);
  CHECK(a.z.v == a.mu1.v);
  CHECK(a.zs.v == a.mu2.v);
}

TEST_CASE("training forward requires well-formed noise") {
  Model m = tiny_model(Mode::cantm_ia);
  ForwardOptions opts;
  opts.training = true;
  Tape tape;
  CHECK_THROWS(m.forward(tape, kDoc, opts));
  Tensor bad(1, 3, 0.0);
  opts.noise_m1 = &bad;
  opts.noise_m2 = &bad;
  Tape t2;
  CHECK_THROWS(m.forward(t2, kDoc, opts));

  Tensor zero(1, 6, 0.0);
  opts.noise_m1 = &zero;
  opts.noise_m2 = &zero;
  Tape t3;
  auto with_zero_noise = m.forward(t3, kDoc, opts);
  Tape t4;
  auto eval = m.forward(t4, kDoc, {});
  // Zero noise collapses the sample to the mean, i.e. the evaluation path.
  CHECK(with_zero_noise.z.v == eval.z.v);

  Tensor eps(1, 6, 0.5);
  opts.noise_m1 = &eps;
  Tape t5;
  auto with_noise = m.forward(t5, kDoc, opts);
  CHECK(with_noise.z.v != eval.z.v);
  for (int i = 0; i < 6; ++i) {
    const double sigma = std::exp(with_noise.logsig1.v[i]);
    CHECK(with_noise.z.v[i] ==
          doctest::Approx(with_noise.mu1.v[i] + sigma * 0.5));
  }
}

TEST_CASE("zero classifier weights give the uniform prediction") {
  Model m = tiny_model(Mode::cantm_ia);
  m.params_mut().get_mut("m1.cls.w") = Tensor(6, 7, 0.0);
  m.params_mut().get_mut("m1.cls.b") = Tensor(1, 7, 0.0);
  m.params_mut().get_mut("m1.dec.w") = Tensor(6, 10, 0.0);
  m.params_mut().get_mut("m1.dec.b") = Tensor(1, 10, 0.0);
  Tape tape;
  auto out = m.forward(tape, kDoc, {});
  for (double p : out.yhat_m1.v) CHECK(p == doctest::Approx(1.0 / 7));
  for (double p : out.recon_m1.v) CHECK(p == doctest::Approx(0.1));
}

TEST_CASE("zero fusion weights make m depend only on the bias") {
  Model m = tiny_model(Mode::cantm_ia);
  const int H = m.config().backbone.hidden;
  m.params_mut().get_mut("m2.fuse.w") = Tensor(H + 7, 6, 0.0);
  Tensor bias(1, 6, 0.25);
  m.params_mut().get_mut("m2.fuse.b") = bias;
  Tape tape;
  auto out = m.forward(tape, kDoc, {});
  const Tensor& mvec = tape.value(out.refs.m);
  for (double x : mvec.v) CHECK(x == doctest::Approx(std::tanh(0.25)));
}

TEST_CASE("classification guidance is live in the fusion") {
  Model m = tiny_model(Mode::cantm_ia);
  const int H = m.config().backbone.hidden;
  Rng rng(5);
  Tensor h(1, H);
  for (double& x : h.v) x = rng.normal();
  Tensor uniform(1, 7, 1.0 / 7);
  Tensor onehot(1, 7, 0.0);
  onehot.v[2] = 1.0;

  auto fuse = [&](const Tensor& yhat) {
    Tape tape;
    Tape::Ref hy = tape.concat_cols(tape.input(h), tape.input(yhat));
    Tape::Ref mref = tape.tanh_(tape.add_rowvec(
        tape.matmul(hy, tape.input(m.params().get("m2.fuse.w"))),
        tape.input(m.params().get("m2.fuse.b"))));
    return tape.value(mref);
  };
  CHECK(fuse(uniform).v != fuse(onehot).v);
}

TEST_CASE("cantm-compat decoder is conditioned on class probabilities") {
  Model m = tiny_model(Mode::cantm);
  Tensor uniform(1, 7, 1.0 / 7);
  Tensor onehot(1, 7, 0.0);
  onehot.v[3] = 1.0;
  Tape tape;
  auto a = tape.value(m.decode_from_class_probs(tape, tape.input(uniform)));
  auto b = tape.value(m.decode_from_class_probs(tape, tape.input(onehot)));
  check_simplex(a);
  check_simplex(b);
  CHECK(a.v != b.v);

  Model ia = tiny_model(Mode::cantm_ia);
  Tape t2;
  CHECK_THROWS(ia.decode_from_class_probs(t2, t2.input(uniform)));
}

TEST_CASE("cantm_ia decoder consumes the latent alone") {
  Model m = tiny_model(Mode::cantm_ia);
  const Tensor& dec = m.params().get("m2.dec.w");
  CHECK(dec.rows == 6);  // K rows, no class-probability block
  CHECK(dec.cols == 10);

  Model compat = tiny_model(Mode::cantm);
  CHECK(compat.params().get("m2.dec.w").rows == 6 + 7);
}

TEST_CASE("architecture reduction is exactly classes x vocab") {
  ModelConfig cfg;
  cfg.latent = 100;
  cfg.vocab = 500;
  cfg.classes = 7;
  auto vocab = numbered_vocab(500);
  auto tok = backbone::WordPieceTokenizer::char_fallback();

  cfg.mode = Mode::cantm;
  Model compat(cfg, vocab, tok);
  Rng r1(9);
  compat.init(r1);

  cfg.mode = Mode::cantm_ia;
  Model ia(cfg, vocab, tok);
  Rng r2(9);
  ia.init(r2);

  CHECK(compat.parameter_count() - ia.parameter_count() == 3500);
}

TEST_CASE("cantm mode ignores the rationale ratio") {
  Model m = tiny_model(Mode::cantm);
  ForwardOptions lo, hi;
  lo.ratio_override = 0.2;
  hi.ratio_override = 1.0;
  Tape t1, t2;
  auto a = m.forward(t1, kDoc, lo);
  auto b = m.forward(t2, kDoc, hi);
  CHECK(a.yhat_m1.v == b.yhat_m1.v);
  CHECK(a.recon_m2.v == b.recon_m2.v);
  CHECK(a.rationales.k != b.rationales.k);  // selection still reported
}

TEST_CASE("convert_to_ia carries the latent decoder rows over") {
  Model m = tiny_model(Mode::cantm);
  Tensor before = m.params().get("m2.dec.w");
  m.convert_to_ia();
  CHECK(m.config().mode == Mode::cantm_ia);
  const Tensor& after = m.params().get("m2.dec.w");
  REQUIRE(after.rows == 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 10; ++j) CHECK(after.at(i, j) == before.at(i, j));
  CHECK_THROWS(m.convert_to_ia());  // already converted
}

TEST_CASE("trainable set is the last layer plus the heads") {
  Model m = tiny_model(Mode::cantm_ia);
  for (const auto& key : Model::head_keys(m.config()))
    CHECK(m.params().is_trainable(key));
  CHECK(m.params().is_trainable("backbone.layer.1.attn.wq"));
  CHECK(!m.params().is_trainable("backbone.layer.0.attn.wq"));
  CHECK(!m.params().is_trainable("backbone.embeddings.word"));
}

TEST_CASE("bert baseline mode is a plain classifier") {
  ModelConfig cfg;
  cfg.mode = Mode::bert;
  cfg.vocab = 10;
  Model m(cfg, numbered_vocab(10),
          backbone::WordPieceTokenizer::char_fallback());
  Rng rng(3);
  m.init(rng);

  const int H = cfg.backbone.hidden;
  CHECK(m.params().get("bert.hidden.w").rows == H);
  CHECK(m.params().get("bert.hidden.w").cols == 300);
  CHECK(m.params().get("bert.cls.w").rows == 300);
  CHECK(m.params().tensors.count("m1.mu.w") == 0);

  Tape tape;
  auto out = m.forward(tape, kDoc, {});
  check_simplex(out.yhat_m1);
  CHECK(out.refs.mu1 < 0);
  CHECK(out.refs.cross_recon < 0);

  Tape t2;
  CHECK_THROWS(m.decode_from_class_probs(t2, t2.input(Tensor(1, 7, 0.0))));
}
