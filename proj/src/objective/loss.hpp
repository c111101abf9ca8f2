#pragma once

#include "core/tensor.hpp"
#include "model/model.hpp"

namespace cantm::objective {

inline constexpr double kLogEps = 1e-10;

struct Hyper {
  double lambda = 1.0;
  model::Mode mode = model::Mode::cantm_ia;
  double ratio = 0.5;
};

struct LossBreakdown {
  double cls_loss = 0.0;
  double elbo_m1 = 0.0;
  double elbo_m2 = 0.0;
  double cross_term = 0.0;
  double total = 0.0;
  bool has_cross = false;

  // Reassembles total from the parts with the same arithmetic order the
  // tape used; the two must agree to 1e-9.
  double recombine(double lambda) const {
    double t = lambda * cls_loss;
    t += -elbo_m1;
    t += -elbo_m2;
    if (has_cross) t += -cross_term;
    return t;
  }
};

struct LossRefs {
  core::Tape::Ref cls = -1;
  core::Tape::Ref elbo1 = -1;
  core::Tape::Ref elbo2 = -1;
  core::Tape::Ref cross = -1;
  core::Tape::Ref total = -1;
};

// Tape-level joint loss. Targets are constants (1 x V); the cantm mode adds
// the class-probability reconstruction expectation, cantm_ia drops it.
// `use_cross` follows the mode by default; the mode-equivalence tests drive
// it explicitly.
LossRefs joint_loss_refs(core::Tape& tape, const model::Model& m,
                         const model::ModelOutput& out,
                         const core::Tensor& target_m1,
                         const core::Tensor& target_m2, int label,
                         const Hyper& hyper);

LossBreakdown breakdown(const core::Tape& tape, const LossRefs& refs,
                        double lambda);

// Value-level contract surface (same formulas as the tape ops).
double kl_diag_gaussian(const core::Tensor& mu, const core::Tensor& logsigma);
double recon_log_likelihood(const core::Tensor& target,
                            const core::Tensor& decoded);
double elbo(const core::Tensor& target, const core::Tensor& decoded,
            const core::Tensor& mu, const core::Tensor& logsigma);
double classification_loss(const core::Tensor& yhat_m1,
                           const core::Tensor& yhat_m2, int label);

// Reconstruction targets for one document under the given mode. In cantm_ia
// mode the rationale-saliency target is used, falling back to the normalized
// full bag of words when every rationale word is out of vocabulary;
// *fallback_used reports that. Targets are 1 x V rows.
struct Targets {
  core::Tensor m1;
  core::Tensor m2;
  bool fallback_used = false;
};
Targets make_targets(const model::Model& m, const corpus::Document& doc,
                     const model::ModelOutput& out, model::Mode mode);

}  // namespace cantm::objective
