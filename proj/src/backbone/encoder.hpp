#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "backbone/tokenizer.hpp"
#include "core/archive.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace cantm::backbone {

struct BackboneConfig {
  std::string profile = "tiny";  // "tiny" or "pretrained"
  int hidden = 32;
  int heads = 2;
  int layers = 2;
  int ffn = 64;
  int max_len = 128;
  std::string weights_path;  // required for the pretrained profile

  static BackboneConfig tiny();
  static BackboneConfig pretrained();
};

// Transformer encoder (post-layernorm, GELU feed-forward). The pooled
// representation h is the hidden state at the classification position. Only
// the final layer's weights are ever trainable; everything else is frozen.
class Encoder {
 public:
  explicit Encoder(BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }

  // Seeded random initialization (tiny profile).
  void init_params(core::ParamStore& store, int piece_count,
                   core::Rng& rng) const;
  // Loads from a weights archive, validating every shape against the config.
  void load_params(core::ParamStore& store, const core::Archive& archive,
                   int piece_count) const;
  // Marks the last encoder layer trainable in `store`.
  void unlock_last_layer(core::ParamStore& store) const;

  // All parameter keys, and the keys of the last (unlockable) layer.
  std::vector<std::string> all_keys() const;
  std::vector<std::string> last_layer_keys() const;

  struct Output {
    core::Tape::Ref h;         // 1 x H, classification-position pooling
    core::Tape::Ref sequence;  // S x H final hidden states
    // Final-layer attention, one S x S row-stochastic matrix per head.
    std::vector<core::Tensor> attention;
  };

  Output forward(core::Tape& tape, const TokenSequence& tokens,
                 const core::ParamStore& store) const;

 private:
  std::string lk(int layer, const std::string& suffix) const {
    return "backbone.layer." + std::to_string(layer) + "." + suffix;
  }
  BackboneConfig cfg_;
};

}  // namespace cantm::backbone
