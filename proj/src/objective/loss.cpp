#include "objective/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace cantm::objective {

using core::Tape;
using core::Tensor;

LossRefs joint_loss_refs(Tape& tape, const model::Model& m,
                         const model::ModelOutput& out,
                         const Tensor& target_m1, const Tensor& target_m2,
                         int label, const Hyper& hyper) {
  if (label < 0 || label >= m.config().classes)
    throw std::runtime_error("joint_loss: label out of range");
  if (hyper.mode == model::Mode::bert) {
    // Baseline objective: a single classifier cross-entropy, still scaled by
    // lambda so the breakdown arithmetic is shared across modes.
    LossRefs r;
    r.cls = tape.cross_entropy_index(out.refs.yhat1, label, kLogEps);
    r.total = tape.scale(r.cls, hyper.lambda);
    return r;
  }
  const int V = m.config().vocab;
  if (target_m1.rows != 1 || target_m1.cols != V || target_m2.rows != 1 ||
      target_m2.cols != V)
    throw std::runtime_error("joint_loss: target shape mismatch");
  const bool use_cross = hyper.mode == model::Mode::cantm;
  if (use_cross && out.refs.cross_recon < 0)
    throw std::runtime_error(
        "joint_loss: cantm mode requires a class-conditioned decoder output");

  LossRefs r;
  Tape::Ref ce1 = tape.cross_entropy_index(out.refs.yhat1, label, kLogEps);
  Tape::Ref ce2 = tape.cross_entropy_index(out.refs.yhat2, label, kLogEps);
  r.cls = tape.add(ce1, ce2);

  Tape::Ref rec1 = tape.weighted_log_sum(target_m1, out.refs.recon1, kLogEps);
  Tape::Ref kl1 = tape.kl_std_normal(out.refs.mu1, out.refs.logsig1);
  r.elbo1 = tape.add(rec1, tape.scale(kl1, -1.0));

  Tape::Ref rec2 = tape.weighted_log_sum(target_m2, out.refs.recon2, kLogEps);
  Tape::Ref kl2 = tape.kl_std_normal(out.refs.mu2, out.refs.logsig2);
  r.elbo2 = tape.add(rec2, tape.scale(kl2, -1.0));

  Tape::Ref total = tape.scale(r.cls, hyper.lambda);
  total = tape.add(total, tape.scale(r.elbo1, -1.0));
  total = tape.add(total, tape.scale(r.elbo2, -1.0));
  if (use_cross) {
    r.cross =
        tape.weighted_log_sum(target_m2, out.refs.cross_recon, kLogEps);
    total = tape.add(total, tape.scale(r.cross, -1.0));
  }
  r.total = total;
  return r;
}

LossBreakdown breakdown(const Tape& tape, const LossRefs& refs,
                        double lambda) {
  LossBreakdown b;
  b.cls_loss = tape.value(refs.cls).v[0];
  if (refs.elbo1 >= 0) b.elbo_m1 = tape.value(refs.elbo1).v[0];
  if (refs.elbo2 >= 0) b.elbo_m2 = tape.value(refs.elbo2).v[0];
  b.has_cross = refs.cross >= 0;
  if (b.has_cross) b.cross_term = tape.value(refs.cross).v[0];
  b.total = tape.value(refs.total).v[0];
  if (std::abs(b.total - b.recombine(lambda)) > 1e-9)
    throw std::runtime_error("loss breakdown does not reassemble");
  return b;
}

double kl_diag_gaussian(const Tensor& mu, const Tensor& logsigma) {
  Tape tape;
  Tape::Ref m = tape.input(mu);
  Tape::Ref l = tape.input(logsigma);
  return tape.value(tape.kl_std_normal(m, l)).v[0];
}

double recon_log_likelihood(const Tensor& target, const Tensor& decoded) {
  Tape tape;
  Tape::Ref d = tape.input(decoded);
  return tape.value(tape.weighted_log_sum(target, d, kLogEps)).v[0];
}

double elbo(const Tensor& target, const Tensor& decoded, const Tensor& mu,
            const Tensor& logsigma) {
  return recon_log_likelihood(target, decoded) - kl_diag_gaussian(mu, logsigma);
}

double classification_loss(const Tensor& yhat_m1, const Tensor& yhat_m2,
                           int label) {
  Tape tape;
  Tape::Ref a = tape.cross_entropy_index(tape.input(yhat_m1), label, kLogEps);
  Tape::Ref b = tape.cross_entropy_index(tape.input(yhat_m2), label, kLogEps);
  return tape.value(tape.add(a, b)).v[0];
}

Targets make_targets(const model::Model& m, const corpus::Document& doc,
                     const model::ModelOutput& out, model::Mode mode) {
  const int V = m.config().vocab;
  corpus::BowVector bow = corpus::to_bow(doc, m.vocab());
  Tensor bow_target(1, V, 0.0);
  const double total = bow.total();
  if (total > 0.0) {
    for (int i = 0; i < V; ++i) bow_target.at(0, i) = bow.counts[i] / total;
  }

  Targets t;
  if (mode != model::Mode::cantm_ia) {
    t.m1 = bow_target;
    t.m2 = bow_target;
    return t;
  }
  auto target = saliency::rationale_target(doc, out.rationales, out.scores,
                                           m.vocab());
  if (target.is_empty) {
    t.fallback_used = true;
    t.m1 = bow_target;
    t.m2 = bow_target;
    return t;
  }
  Tensor rat(1, V, 0.0);
  for (int i = 0; i < V; ++i) rat.at(0, i) = target.weights[i];
  t.m1 = rat;
  t.m2 = std::move(rat);
  return t;
}

}  // namespace cantm::objective
