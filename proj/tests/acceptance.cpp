// Acceptance suite: one printed pass/fail line per criterion. Exit code 0
// only when every non-skipped criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "eval/evalreport.hpp"
#include "harness.hpp"
#include "objective/loss.hpp"
#include "saliency/saliency.hpp"
#include "training/trainer.hpp"

using namespace cantm;
using cantm::core::Rng;
using cantm::core::Tape;
using cantm::core::Tensor;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("ACCEPTANCE %d (%s): %s%s%s\n", id, name.c_str(),
              pass ? "PASS" : "FAIL", detail.empty() ? "" : " -- ",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void skip(int id, const std::string& name, const std::string& reason) {
  std::printf("ACCEPTANCE %d (%s): SKIP -- %s\n", id, name.c_str(),
              reason.c_str());
  std::fflush(stdout);
}

// ---- criterion 1: synthetic planted-topic recovery -------------------------

struct Planted {
  corpus::CorpusManifest manifest;
  std::vector<std::unordered_set<std::string>> pools;  // 4 x 20 keywords
  std::unordered_set<std::string> neutral;             // 200 shared words
};

// Four classes x 500 documents; 60% of each document's tokens come from the
// class keyword pool, 40% from a shared Zipf-skewed neutral pool.
Planted planted_corpus(std::uint64_t seed) {
  const std::vector<std::string> syl = {
      "ara", "eri", "ilo", "onu", "uma", "eta", "ibo", "oke", "ulu", "adi",
      "epo", "iru", "oba", "ute", "ame", "eno", "iwa", "ody", "usa", "ela"};
  const std::vector<std::string> suf = {"la", "me", "ni", "po", "ru",
                                        "sa", "te", "vo", "wa", "ze"};
  const char prefix[4] = {'b', 'd', 'g', 'k'};

  Planted p;
  p.pools.resize(4);
  std::vector<std::vector<std::string>> pool_words(4);
  for (int c = 0; c < 4; ++c) {
    for (const auto& s : syl) pool_words[c].push_back(prefix[c] + s);
    p.pools[c] = {pool_words[c].begin(), pool_words[c].end()};
  }

  std::vector<std::string> neutral_words;
  for (const auto& a : syl)
    for (const auto& b : suf) neutral_words.push_back("n" + a + b);
  p.neutral = {neutral_words.begin(), neutral_words.end()};

  // Zipf weights over the neutral pool.
  std::vector<double> cdf(neutral_words.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < neutral_words.size(); ++i)
    cdf[i] = (acc += 1.0 / static_cast<double>(i + 1));

  Rng rng(seed);
  std::vector<corpus::Document> docs;
  for (int c = 0; c < 4; ++c) {
    for (int d = 0; d < 500; ++d) {
      std::ostringstream text;
      for (int t = 0; t < 15; ++t) {
        if (t) text << ' ';
        if (t < 9) {
          text << pool_words[c][rng.below(20)];
        } else {
          const double u = rng.next_double() * acc;
          const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
          text << neutral_words[it - cdf.begin()];
        }
      }
      docs.push_back({"c" + std::to_string(c) + "d" + std::to_string(d),
                      text.str(), c, corpus::Split::unassigned});
    }
  }
  p.manifest.seed = seed;
  p.manifest.docs = corpus::DocumentSet(std::move(docs));
  corpus::SplitSpec spec;
  spec.seed = seed;
  corpus::assign_splits(p.manifest.docs, spec);
  p.manifest.vocab = corpus::build_vocabulary(p.manifest.docs, 280);
  return p;
}

training::TrainConfig planted_config(model::Mode mode, std::uint64_t seed) {
  training::TrainConfig c;
  c.model.mode = mode;
  c.model.latent = 16;
  c.model.classes = 4;
  c.model.ratio = 0.5;
  c.lambda = 1.0;
  c.epochs = 10;
  c.batch_size = 16;
  c.lr_heads = 5e-3;
  c.lr_backbone = 1e-3;
  c.seed = seed;
  return c;
}

int count_in(const eval::TopicTable& topics,
             const std::unordered_set<std::string>& set) {
  int n = 0;
  for (const auto& row : topics.rows)
    for (const auto& [w, s] : row)
      if (set.count(w)) ++n;
  return n;
}

void criterion_1() {
  const std::uint64_t seed = 42;
  auto planted = planted_corpus(seed);

  const auto t0 = std::chrono::steady_clock::now();
  auto ia = training::train(planted_config(model::Mode::cantm_ia, seed),
                            planted.manifest);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();

  auto metrics = eval::evaluate(*ia.model, planted.manifest.docs,
                                corpus::Split::test);
  auto ia_topics = eval::extract_topics(*ia.model, planted.manifest.docs, 10);
  int min_precision10 = 10;
  for (int c = 0; c < 4; ++c) {
    int hits = 0;
    for (const auto& [w, s] : ia_topics.rows[c])
      if (planted.pools[c].count(w)) ++hits;
    min_precision10 = std::min(min_precision10, hits);
  }

  auto compat = training::train(planted_config(model::Mode::cantm, seed),
                                planted.manifest);
  auto compat_topics =
      eval::extract_topics(*compat.model, planted.manifest.docs, 10);
  const int ia_neutral = count_in(ia_topics, planted.neutral);
  const int compat_neutral = count_in(compat_topics, planted.neutral);

  std::ostringstream detail;
  detail << "test acc " << metrics.accuracy << " in " << ia.epoch
         << " epochs / " << static_cast<int>(secs)
         << " s; min per-class top-10 keyword hits " << min_precision10
         << "; neutral topic words ia " << ia_neutral << " vs cantm "
         << compat_neutral;
  const bool pass = metrics.accuracy >= 0.95 && secs < 600.0 &&
                    min_precision10 >= 8 && ia_neutral < compat_neutral;
  report(1, "synthetic planted-topic recovery", pass, detail.str());
}

// ---- criterion 2: KL Monte Carlo oracle ------------------------------------

void criterion_2() {
  Tensor mu0(1, 2, 0.0), ls0(1, 2, 0.0);
  bool pass = objective::kl_diag_gaussian(mu0, ls0) == 0.0;

  Rng rng(2026);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 1 + static_cast<int>(rng.below(2));
    Tensor mu(1, K), ls(1, K);
    for (double& x : mu.v) x = (rng.next_double() - 0.5);          // [-0.5, 0.5]
    for (double& x : ls.v) x = (rng.next_double() - 0.5) * 0.4;    // [-0.2, 0.2]
    const double closed = objective::kl_diag_gaussian(mu, ls);
    const double mc = testing::kl_monte_carlo(mu, ls, 100000, 9000 + trial);
    worst = std::max(worst, std::abs(closed - mc));
  }
  pass = pass && worst < 0.01;
  std::ostringstream detail;
  detail << "worst |closed - MC| = " << worst << " over 50 draws";
  report(2, "KL oracle", pass, detail.str());
}

// ---- criterion 3: gradient oracle ------------------------------------------

void criterion_3() {
  long long checked = 0, failures = 0;
  double worst = 0.0;
  std::string worst_where;
  for (model::Mode mode : {model::Mode::cantm, model::Mode::cantm_ia}) {
    for (int s = 0; s < 10; ++s) {
      const std::uint64_t seed = 1000 + 17 * s + (mode == model::Mode::cantm);
      auto m = testing::toy_model(mode, seed);
      auto step = testing::fixed_step(m, mode, seed);
      auto r = testing::fd_compare(m, step);
      checked += r.checked;
      failures += r.failures;
      if (r.worst_rel > worst) {
        worst = r.worst_rel;
        worst_where = model::mode_name(mode) + "/" + r.worst_param;
      }
    }
  }
  std::ostringstream detail;
  detail << checked << " scalars over 20 seeds, worst rel " << worst << " ("
         << worst_where << ")";
  report(3, "gradient oracle", failures == 0 && checked > 0, detail.str());
}

// ---- criterion 4: rationale selection oracle --------------------------------

std::vector<int> sort_oracle(const std::vector<double>& scores, double ratio) {
  const int n = static_cast<int>(scores.size());
  const int k = std::max(1, static_cast<int>(std::ceil(ratio * n)));
  std::vector<std::pair<double, int>> ranked;
  for (int i = 0; i < n; ++i) ranked.emplace_back(scores[i], i);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(ranked[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

void criterion_4() {
  Rng rng(404);
  long long mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(200));
    saliency::SaliencyScores s;
    s.scores.resize(n);
    for (int i = 0; i < n; ++i) {
      s.scores[i] = rng.next_double();
      if (i > 0 && rng.below(4) == 0) s.scores[i] = s.scores[i - 1];
    }
    for (double r : {0.1, 0.5, 1.0}) {
      if (saliency::select_rationales(s, r).positions !=
          sort_oracle(s.scores, r))
        ++mismatches;
    }
  }
  bool k_ok = true;
  for (int n = 1; n <= 50 && k_ok; ++n) {
    saliency::SaliencyScores s;
    s.scores.assign(n, 1.0);
    for (double r = 0.01; r <= 1.0; r += 0.01) {
      auto rs = saliency::select_rationales(s, r);
      if (rs.k != std::max(1, static_cast<int>(std::ceil(r * n)))) {
        k_ok = false;
        break;
      }
    }
  }
  std::ostringstream detail;
  detail << mismatches << " oracle mismatches in 3000 selections; k formula "
         << (k_ok ? "holds" : "violated") << " for n <= 50";
  report(4, "rationale oracle", mismatches == 0 && k_ok, detail.str());
}

// ---- criterion 5: architecture reduction ------------------------------------

void criterion_5() {
  model::ModelConfig cfg;  // defaults: K=100, V=500, C=7
  auto vocab = testing::numbered_vocab(cfg.vocab);
  auto tok = backbone::WordPieceTokenizer::char_fallback();

  cfg.mode = model::Mode::cantm;
  model::Model compat(cfg, vocab, tok);
  Rng r1(5);
  compat.init(r1);

  cfg.mode = model::Mode::cantm_ia;
  model::Model ia(cfg, vocab, tok);
  Rng r2(5);
  ia.init(r2);

  const long long delta = compat.parameter_count() - ia.parameter_count();

  // In cantm_ia mode the M2 decoder consumes z_s alone, so its output is
  // invariant to the class probabilities: recompute the decoded distribution
  // from z_s and the decoder weights only.
  corpus::Document doc{"d", "wab wac wad wae", 0, corpus::Split::test};
  Tape tape;
  auto out = ia.forward(tape, doc, {});
  const Tensor& dec_w = ia.params().get("m2.dec.w");
  const Tensor& dec_b = ia.params().get("m2.dec.b");
  Tape t2;
  Tensor redecoded = t2.value(t2.row_softmax(t2.add_rowvec(
      t2.matmul(t2.input(out.zs), t2.input(dec_w)), t2.input(dec_b))));
  double max_diff = 0.0;
  for (int i = 0; i < redecoded.size(); ++i)
    max_diff = std::max(max_diff,
                        std::abs(redecoded.v[i] - out.recon_m2.v[i]));

  std::ostringstream detail;
  detail << "parameter delta " << delta << "; decoder rows " << dec_w.rows
         << " (latent only), max redecode diff " << max_diff;
  report(5, "architecture reduction",
         delta == 3500 && dec_w.rows == cfg.latent && max_diff < 1e-15,
         detail.str());
}

// ---- criterion 6: mode equivalence ------------------------------------------

void criterion_6() {
  auto m = testing::toy_model(model::Mode::cantm, 66);
  auto s = testing::fixed_step(m, model::Mode::cantm, 66);  // full-BoW targets

  Tape tape;
  model::ForwardOptions opts;
  opts.training = true;
  opts.noise_m1 = &s.noise1;
  opts.noise_m2 = &s.noise2;
  auto out = m.forward(tape, s.doc, opts);

  objective::Hyper cantm_h = s.hyper;
  cantm_h.mode = model::Mode::cantm;
  auto cantm_refs = objective::joint_loss_refs(tape, m, out, s.target1,
                                               s.target2, s.label, cantm_h);

  objective::Hyper ia_h = s.hyper;
  ia_h.mode = model::Mode::cantm_ia;
  auto ia_refs = objective::joint_loss_refs(tape, m, out, s.target1,
                                            s.target2, s.label, ia_h);

  // The two paths share every component bit-for-bit; the only difference is
  // the class-conditioned reconstruction expectation the cantm mode adds.
  const bool components_equal =
      tape.value(cantm_refs.cls).v == tape.value(ia_refs.cls).v &&
      tape.value(cantm_refs.elbo1).v == tape.value(ia_refs.elbo1).v &&
      tape.value(cantm_refs.elbo2).v == tape.value(ia_refs.elbo2).v;

  Tape::Ref cross = tape.weighted_log_sum(s.target2, out.refs.cross_recon,
                                          objective::kLogEps);
  Tape::Ref rebuilt =
      tape.add(ia_refs.total, tape.scale(cross, -1.0));
  const double cantm_total = tape.value(cantm_refs.total).v[0];
  const double rebuilt_total = tape.value(rebuilt).v[0];
  const bool totals_equal = cantm_total == rebuilt_total;  // bitwise

  std::ostringstream detail;
  detail << "shared components " << (components_equal ? "bitwise equal" : "differ")
         << "; cantm total " << cantm_total << " == ia total + cross term: "
         << (totals_equal ? "yes" : "no");
  report(6, "mode equivalence", components_equal && totals_equal,
         detail.str());
}

// ---- criterion 7: ingestion arithmetic --------------------------------------

void criterion_7() {
  std::vector<corpus::Document> docs;
  auto add = [&](int label, int n, const std::string& text) {
    for (int i = 0; i < n; ++i)
      docs.push_back({"l" + std::to_string(label) + "_" + std::to_string(i),
                      text, label, corpus::Split::unassigned});
  };
  add(corpus::kBattles, 13, "soldiers clashed armed battle village");
  add(corpus::kProtests, 29, "protest march banner crowd street");
  add(corpus::kRiots, 7, "riot mob stones burned shops");
  add(corpus::kOutOfDomain, 10, "recipe pasta tomato basil dinner");

  corpus::DocumentSet set(std::move(docs));
  corpus::SplitSpec spec;  // 7 : 1 : 2
  spec.seed = 5;
  corpus::assign_splits(set, spec);

  auto counts = set.split_counts();
  auto totals = set.class_counts();
  bool pass = true;
  for (int c = 0; c < corpus::kNumClasses; ++c) {
    if (totals[c] == 0) continue;
    auto sz = corpus::split_sizes(totals[c], spec);
    pass = pass && counts[c][0] == sz.train && counts[c][1] == sz.valid &&
           counts[c][2] == sz.test;
  }
  // The documented rounding at the published corpus size.
  auto full = corpus::split_sizes(108861, spec);
  pass = pass && full.train == 76202 && full.valid == 10887 &&
         full.test == 21772;
  report(7, "ingestion arithmetic", pass,
         "per-class 7:1:2 rounding on the fixture; full-dump Table-1 "
         "comparison unavailable (no ACLED export in this environment)");
}

// ---- criterion 8: determinism & freeze --------------------------------------

void criterion_8() {
  // Small separable corpus, as in the unit suite.
  std::vector<corpus::Document> docs;
  const char* texts[3] = {"aa bb aa", "cc dd cc", "ee ff ee"};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 12; ++i)
      docs.push_back({"c" + std::to_string(c) + "_" + std::to_string(i),
                      texts[c], c,
                      i < 8 ? corpus::Split::train
                      : i < 10 ? corpus::Split::valid
                               : corpus::Split::test});
  corpus::CorpusManifest manifest;
  manifest.docs = corpus::DocumentSet(std::move(docs));
  manifest.vocab = corpus::Vocabulary({"aa", "bb", "cc", "dd", "ee", "ff"});

  training::TrainConfig cfg;
  cfg.model.mode = model::Mode::cantm_ia;
  cfg.model.latent = 4;
  cfg.model.classes = 3;
  cfg.model.backbone.hidden = 8;
  cfg.model.backbone.heads = 2;
  cfg.model.backbone.layers = 2;
  cfg.model.backbone.ffn = 16;
  cfg.model.backbone.max_len = 16;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr_heads = 1e-2;
  cfg.seed = 88;

  auto a = training::train(cfg, manifest);
  auto b = training::train(cfg, manifest);

  bool history_equal = a.history.size() == b.history.size();
  for (std::size_t i = 0; history_equal && i < a.history.size(); ++i)
    history_equal = a.history[i].train_loss == b.history[i].train_loss &&
                    a.history[i].val_accuracy == b.history[i].val_accuracy;
  bool weights_equal = true;
  for (const auto& [key, t] : a.model->params().tensors)
    weights_equal = weights_equal && t.v == b.model->params().get(key).v;

  // Frozen backbone parameters are bit-identical to the pre-training
  // initialization.
  model::ModelConfig mc = cfg.model;
  mc.vocab = manifest.vocab.size();
  model::Model fresh(mc, manifest.vocab,
                     backbone::WordPieceTokenizer::char_fallback());
  Rng rng(cfg.seed);
  fresh.init(rng);
  bool frozen_ok = true;
  for (const auto& [key, t] : a.model->params().tensors)
    if (!a.model->params().is_trainable(key))
      frozen_ok = frozen_ok && t.v == fresh.params().get(key).v;

  std::ostringstream detail;
  detail << "history " << (history_equal ? "identical" : "differs")
         << ", weights " << (weights_equal ? "identical" : "differ")
         << ", frozen parameters "
         << (frozen_ok ? "bit-identical" : "moved");
  report(8, "determinism & freeze", history_equal && weights_equal && frozen_ok,
         detail.str());
}

}  // namespace

int main() {
  try {
    criterion_1();
  } catch (const std::exception& e) {
    report(1, "synthetic planted-topic recovery", false, e.what());
  }
  try {
    criterion_2();
  } catch (const std::exception& e) {
    report(2, "KL oracle", false, e.what());
  }
  try {
    criterion_3();
  } catch (const std::exception& e) {
    report(3, "gradient oracle", false, e.what());
  }
  try {
    criterion_4();
  } catch (const std::exception& e) {
    report(4, "rationale oracle", false, e.what());
  }
  try {
    criterion_5();
  } catch (const std::exception& e) {
    report(5, "architecture reduction", false, e.what());
  }
  try {
    criterion_6();
  } catch (const std::exception& e) {
    report(6, "mode equivalence", false, e.what());
  }
  try {
    criterion_7();
  } catch (const std::exception& e) {
    report(7, "ingestion arithmetic", false, e.what());
  }
  try {
    criterion_8();
  } catch (const std::exception& e) {
    report(8, "determinism & freeze", false, e.what());
  }
  skip(9, "scaled-real sanity",
       "requires a full ACLED export and pretrained backbone weights; "
       "neither is available in this environment");
  return g_failures == 0 ? 0 : 1;
}
