#pragma once

#include <cstdint>
#include <string>

#include "backbone/encoder.hpp"
#include "backbone/tokenizer.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "corpus/corpus.hpp"
#include "saliency/saliency.hpp"

namespace cantm::model {

// bert is the plain classification baseline: encoder [CLS] output through a
// 300-dimensional linear layer and a softmax classifier, no VAE branches.
enum class Mode { cantm, cantm_ia, bert };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct ModelConfig {
  Mode mode = Mode::cantm_ia;
  int latent = 100;    // hidden-topic dimension K
  int classes = 7;     // C
  int vocab = 500;     // V, the actual vocabulary size in use
  int bert_dim = 300;  // baseline-mode linear layer width
  double ratio = 0.5;
  backbone::BackboneConfig backbone = backbone::BackboneConfig::tiny();
};

struct ForwardRefs {
  core::Tape::Ref h = -1;
  core::Tape::Ref mu1 = -1, logsig1 = -1, z = -1;
  core::Tape::Ref recon1 = -1, yhat1 = -1;
  core::Tape::Ref m = -1, mu2 = -1, logsig2 = -1, zs = -1;
  core::Tape::Ref recon2 = -1, yhat2 = -1;
  core::Tape::Ref cross_recon = -1;  // populated in cantm mode only
};

struct ModelOutput {
  ForwardRefs refs;
  core::Tensor h;
  core::Tensor yhat_m1, yhat_m2;    // 1 x C simplexes
  core::Tensor recon_m1, recon_m2;  // 1 x V simplexes
  core::Tensor mu1, logsig1, mu2, logsig2;
  core::Tensor z, zs;
  backbone::TokenSequence tokens;
  saliency::SaliencyScores scores;
  saliency::RationaleSet rationales;  // selected when ratio is active
};

struct ForwardOptions {
  bool training = false;
  // Explicit reparameterization noise (1 x K each); required when training.
  const core::Tensor* noise_m1 = nullptr;
  const core::Tensor* noise_m2 = nullptr;
  // Overrides the config ratio when >= 0 (used by explain).
  double ratio_override = -1.0;
};

// The CANTM / CANTM-IA network. Owns the parameter store, the wordpiece
// tokenizer and the bag-of-words vocabulary; forward() builds one autodiff
// tape per document.
class Model {
 public:
  Model(ModelConfig cfg, corpus::Vocabulary vocab,
        backbone::WordPieceTokenizer tokenizer);

  // Seeded initialization of backbone (tiny) and heads; marks the last
  // encoder layer plus all head parameters trainable.
  void init(core::Rng& rng);
  // Pretrained profile: backbone weights from an archive, heads seeded.
  void init_with_backbone(const core::Archive& backbone_weights,
                          core::Rng& rng);

  ModelOutput forward(core::Tape& tape, const corpus::Document& doc,
                      const ForwardOptions& opts) const;

  // M2 decoder applied to the classification probabilities alone (the
  // latent block zeroed); only defined in cantm mode where the decoder is
  // conditioned on [z_s ; y]. Used for the expectation term of the joint
  // loss.
  core::Tape::Ref decode_from_class_probs(core::Tape& tape,
                                          core::Tape::Ref yhat) const;

  // Drops the class-probability block from the M2 decoder, carrying the
  // latent rows over unchanged, and switches the mode to cantm_ia.
  void convert_to_ia();

  long long parameter_count() const { return params_.scalar_count(); }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config_mut() { return cfg_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  const backbone::WordPieceTokenizer& tokenizer() const { return tokenizer_; }
  const backbone::Encoder& encoder() const { return encoder_; }
  const core::ParamStore& params() const { return params_; }
  core::ParamStore& params_mut() { return params_; }

  static std::vector<std::string> head_keys(const ModelConfig& cfg);

 private:
  void init_heads(core::Rng& rng);
  void mark_trainable();
  int m2_decoder_input_dim() const {
    return cfg_.mode == Mode::cantm ? cfg_.latent + cfg_.classes : cfg_.latent;
  }

  ModelConfig cfg_;
  corpus::Vocabulary vocab_;
  backbone::WordPieceTokenizer tokenizer_;
  backbone::Encoder encoder_;
  core::ParamStore params_;
};

}  // namespace cantm::model
