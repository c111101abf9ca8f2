#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "model/model.hpp"
#include "objective/loss.hpp"

namespace cantm::training {

struct TrainConfig {
  model::ModelConfig model;
  double lambda = 1.0;
  int epochs = 5;
  int batch_size = 64;
  double lr_backbone = 2e-5;
  double lr_heads = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct StepStats {
  long long step = 0;
  objective::LossBreakdown loss;
};

struct Checkpoint {
  std::unique_ptr<model::Model> model;
  TrainConfig config;
  int epoch = 0;
  std::vector<EpochStats> history;
  std::vector<StepStats> steps;
};

// Minibatch optimization of the joint loss with AdamW (decoupled weight
// decay); one learning rate for the unlocked backbone layer, another for the
// heads. Selects the best epoch by validation accuracy. Deterministic for a
// fixed (seed, config, corpus).
Checkpoint train(const TrainConfig& config,
                 const corpus::CorpusManifest& manifest);

// Continues from the given checkpoint instead of a fresh initialization.
// Used internally and by fine_tune.
Checkpoint train_from(Checkpoint start, const TrainConfig& config,
                      const corpus::CorpusManifest& manifest);

// Fine-tune regime: restructure a trained cantm checkpoint to
// the cantm_ia decoder (latent rows carried over, class-probability block
// dropped) and train for exactly one epoch at ratio 0.5.
Checkpoint fine_tune(const std::string& base_checkpoint_dir,
                     TrainConfig config,
                     const corpus::CorpusManifest& manifest);

// Directory layout: weights.bin, vocab.txt, config.json, history.jsonl
// (plus steps.jsonl with per-step loss breakdowns).
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

// AdamW over the trainable entries of a ParamStore.
class AdamW {
 public:
  AdamW(double lr_backbone, double lr_heads, double weight_decay);
  void step(core::ParamStore& params,
            const std::map<std::string, core::Tensor>& grads);

 private:
  double lr_backbone_, lr_heads_, weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::map<std::string, core::Tensor> m_, v_;
};

// Validation-split accuracy of the argmax-of-yhat_m1 prediction.
double validation_accuracy(const model::Model& m,
                           const corpus::DocumentSet& docs);

}  // namespace cantm::training
