// End-to-end acceptance checks. Each criterion prints exactly one
// PASS/FAIL line with the measured values next to their thresholds; the
// process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specadapt/augment.hpp"
#include "specadapt/filter.hpp"
#include "specadapt/losses.hpp"
#include "specadapt/metrics.hpp"
#include "specadapt/trainer.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace specadapt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool report(int id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  "
            << detail << std::endl;
  return pass;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

Eigen::VectorXd random_preds(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = 0.02 + 0.96 * rng.uniform();
  return v;
}

// ---------------------------------------------------------------------------
// 1. Loss formulas against numerical integration and straight-line rewrites.

bool criterion1() {
  const auto start = Clock::now();
  Rng rng(101);

  double kl_max = 0.0;
  const ReferenceDistribution ref;
  for (int i = 0; i < 100; ++i) {
    BatchPosteriorStats stats;
    stats.mu_p = 0.05 + 0.9 * rng.uniform();
    stats.sigma_p = 0.02 + 0.78 * rng.uniform();
    stats.sigma_raw = stats.sigma_p;
    stats.n = 32;
    const double closed = kl_reg_loss(stats, ref);
    const double numeric = testsupport::numeric_gaussian_kl(
        ref.mean, ref.stddev, stats.mu_p, stats.sigma_p);
    kl_max = std::max(kl_max, std::abs(closed - numeric));
  }

  double line_max = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 2 + static_cast<int>(rng.integer(63));
    const Eigen::VectorXd f = random_preds(n, rng);
    const Eigen::VectorXd g = random_preds(n, rng);
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) y[j] = rng.bernoulli(0.5) ? 1.0 : 0.0;

    double ce = 0.0;
    for (int j = 0; j < n; ++j) {
      ce -= y[j] * std::log(std::max(f[j], 1e-12)) +
            (1.0 - y[j]) * std::log(std::max(1.0 - f[j], 1e-12));
    }
    ce /= n;
    line_max = std::max(line_max, std::abs(ce - supervised_loss(f, y)));

    double cons = 0.0;
    for (int j = 0; j < n; ++j) cons += (f[j] - g[j]) * (f[j] - g[j]);
    cons /= n;
    line_max = std::max(line_max, std::abs(cons - consistency_loss(f, g)));

    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += f[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (f[j] - mu) * (f[j] - mu);
    const double sigma = std::max(std::sqrt(var / (n - 1)), 1e-4);
    const double beta = 0.5 + rng.uniform();
    const double ms = std::abs(ref.stddev - sigma) + beta * std::abs(ref.mean - mu);
    line_max = std::max(
        line_max,
        std::abs(ms - meanstd_reg_loss(batch_posterior_stats(f), ref, beta)));

    const double l1 = rng.uniform(), l2 = rng.uniform(), l3 = rng.uniform();
    const double c1 = 1000.0 * rng.uniform(), c2 = 100.0 * rng.uniform();
    line_max = std::max(line_max, std::abs((l1 + c1 * l2 + c2 * l3) -
                                           total_loss(l1, l2, l3, c1, c2)));
  }

  const double elapsed = seconds_since(start);
  const bool pass = kl_max < 1e-6 && line_max < 1e-10 && elapsed < 10.0;
  return report(1, pass,
                "kl_vs_integral_max_abs=" + fmt(kl_max, 3) +
                    " (tol 1e-6)  straight_line_max_abs=" + fmt(line_max, 3) +
                    " (tol 1e-10)  elapsed=" + fmt(elapsed, 3) + "s (limit 10s)");
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients of all four losses through a tiny network.

NetworkConfig tiny_net() {
  NetworkConfig net;
  net.embedding_dim = 3;
  net.hidden_size = 4;
  net.mlp_width = 5;
  net.mlp_depth = 2;
  net.dropout = 0.0;
  return net;
}

BatchInput random_batch(int batch, Rng& rng) {
  BatchInput in;
  in.sequences.resize(batch);
  for (auto& seq : in.sequences) {
    const std::size_t len = 1 + rng.integer(4);
    for (std::size_t t = 0; t < len; ++t) {
      Eigen::VectorXd v(3);
      for (int d = 0; d < 3; ++d) v[d] = rng.gaussian();
      seq.push_back(std::move(v));
    }
  }
  in.features.resize(batch, kNumFeatures);
  for (int i = 0; i < in.features.size(); ++i) {
    *(in.features.data() + i) = rng.gaussian();
  }
  return in;
}

void randomize(ModelParameters& params, Rng& rng) {
  for_each_tensor(params, [&](const std::string& name, Eigen::MatrixXd& m, bool) {
    for (int i = 0; i < m.size(); ++i) {
      double& v = *(m.data() + i);
      if (name.find("bn_var") != std::string::npos) {
        v = 0.5 + std::abs(rng.gaussian(0.0, 0.3));
      } else {
        v += rng.gaussian(0.0, 0.3);
      }
    }
  });
}

bool criterion2() {
  const auto start = Clock::now();
  const ForwardOptions opts = ForwardOptions::batch_stats_frozen();
  const ReferenceDistribution kl_ref;
  const ReferenceDistribution ms_ref{0.7, 0.45};  // away from the |.| kinks
  double worst = 0.0;
  std::string worst_loss = "-";

  for (int seed = 1; seed <= 5; ++seed) {
    Rng rng(900 + seed);
    ModelParameters params = ModelParameters::init(tiny_net(), rng);
    randomize(params, rng);
    const BatchInput in = random_batch(6, rng);
    Eigen::VectorXd labels(6);
    for (int i = 0; i < 6; ++i) labels[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;

    Rng teacher_rng(7000 + seed);
    ModelParameters teacher = ModelParameters::init(tiny_net(), teacher_rng);
    randomize(teacher, teacher_rng);
    const Eigen::VectorXd tpreds = forward(teacher, in, opts).preds;

    struct LossSpec {
      const char* name;
      std::function<double(const Eigen::VectorXd&)> value;
      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> dpred;
    };
    const LossSpec specs[] = {
        {"l_ce",
         [&](const Eigen::VectorXd& p) { return supervised_loss(p, labels); },
         [&](const Eigen::VectorXd& p) {
           return supervised_loss_grad(p, labels);
         }},
        {"l_u",
         [&](const Eigen::VectorXd& p) { return consistency_loss(p, tpreds); },
         [&](const Eigen::VectorXd& p) {
           return consistency_loss_grad(p, tpreds);
         }},
        {"l_d_kl",
         [&](const Eigen::VectorXd& p) {
           return kl_reg_loss(batch_posterior_stats(p), kl_ref);
         },
         [&](const Eigen::VectorXd& p) {
           return kl_reg_loss_grad(p, batch_posterior_stats(p), kl_ref);
         }},
        {"l_d_meanstd",
         [&](const Eigen::VectorXd& p) {
           return meanstd_reg_loss(batch_posterior_stats(p), ms_ref, 1.0);
         },
         [&](const Eigen::VectorXd& p) {
           return meanstd_reg_loss_grad(p, batch_posterior_stats(p), ms_ref,
                                        1.0);
         }},
    };

    for (const LossSpec& spec : specs) {
      const ForwardCache cache = forward(params, in, opts);
      const Eigen::VectorXd dpred = spec.dpred(cache.preds);
      const Eigen::VectorXd dlogits =
          (dpred.array() * cache.preds.array() * (1.0 - cache.preds.array()))
              .matrix();
      const Gradients grads = backward(params, cache, dlogits);
      const double err = testsupport::max_grad_rel_error(
          params, grads,
          [&] { return spec.value(forward(params, in, opts).preds); }, 1e-5);
      if (err > worst) {
        worst = err;
        worst_loss = spec.name;
      }
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = worst < 1e-4 && elapsed < 120.0;
  return report(2, pass,
                "max_rel_err=" + fmt(worst, 3) + " (tol 1e-4, worst at " +
                    worst_loss + ", 4 losses x 5 seeds)  elapsed=" +
                    fmt(elapsed, 3) + "s (limit 120s)");
}

// ---------------------------------------------------------------------------
// 3. EMA decay follows alpha^t exactly.

bool criterion3() {
  // Deviation is measured relative to the initial distance: alpha^t itself
  // underflows past double precision (0.5^100 ~ 1e-31) where no
  // implementation could track it to 1e-9 of the expected value.
  double worst = 0.0;
  for (const double alpha : {0.0, 0.5, 0.999, 1.0}) {
    Rng r1(31), r2(32);
    const ModelParameters student = ModelParameters::init(tiny_net(), r1);
    ModelParameters teacher = ModelParameters::init(tiny_net(), r2);
    const double d0 = testsupport::param_distance(teacher, student);
    for (int t = 1; t <= 100; ++t) {
      ema_update(teacher, student, alpha);
      const double expected = std::pow(alpha, t) * d0;
      const double actual = testsupport::param_distance(teacher, student);
      worst = std::max(worst, std::abs(actual - expected) / d0);
    }
  }
  return report(3, worst < 1e-9,
                "max_dev_from_alpha^t_rel_d0=" + fmt(worst, 3) +
                    " (tol 1e-9, alpha in {0, 0.5, 0.999, 1}, t <= 100)");
}

// ---------------------------------------------------------------------------
// 4. The optimizer never touches the teacher; only ema_update does.

bool criterion4() {
  testsupport::SyntheticData data = testsupport::make_synthetic_data(64, 64, 0);
  TrainingConfig cfg = TrainingConfig::for_variant(Variant::kSeAdMeanstd);
  cfg.network.hidden_size = 8;
  cfg.network.mlp_width = 8;
  cfg.network.mlp_depth = 2;
  cfg.batch_size = 8;
  Trainer trainer(cfg, data.embeddings, data.lexicons, data.source, data.target);

  int steps = 0;
  int frozen_ok = 0, moved_ok = 0;
  while (steps < 50) {
    for (const BatchPlan& plan : trainer.epoch_batches()) {
      if (steps >= 50) break;
      const ModelParameters before = trainer.teacher().clone();
      trainer.step(plan);
      if (testsupport::params_equal(trainer.teacher(), before)) ++frozen_ok;
      trainer.ema();
      if (!testsupport::params_equal(trainer.teacher(), before)) ++moved_ok;
      ++steps;
    }
  }
  const bool pass = frozen_ok == 50 && moved_ok == 50;
  return report(4, pass,
                "teacher_bitwise_frozen_after_step=" + std::to_string(frozen_ok) +
                    "/50  teacher_changed_after_ema=" +
                    std::to_string(moved_ok) + "/50");
}

// ---------------------------------------------------------------------------
// 5 + 6. Synthetic end-to-end adaptation and the condensation effect.

struct SyntheticRuns {
  std::optional<testsupport::SyntheticData> data;
  TrainOutcome ad;
  bool ad_ok = false;
};

bool criterion5(SyntheticRuns& runs) {
  const auto start = Clock::now();
  runs.data.emplace(testsupport::make_synthetic_data(2000, 2000, 500));

  const TrainingConfig cfg = TrainingConfig::for_variant(Variant::kSeAdMeanstd);
  Trainer trainer(cfg, runs.data->embeddings, runs.data->lexicons,
                  runs.data->source, runs.data->target);
  runs.ad = trainer.run(&runs.data->dev, nullptr);
  runs.ad_ok = true;

  int hit_epoch = -1;
  for (const EpochLog& log : runs.ad.epochs) {
    if (log.dev_spearman >= 0.85 && log.dev_mae <= 0.12) {
      hit_epoch = log.epoch;
      break;
    }
  }
  const EpochLog& last = runs.ad.epochs.back();
  const double elapsed = seconds_since(start);
  const bool pass = hit_epoch > 0 && elapsed < 900.0;
  return report(
      5, pass,
      "first_passing_epoch=" + std::to_string(hit_epoch) +
          " (spearman >= 0.85 and mae <= 0.12 within 30 epochs)  final: spearman=" +
          fmt(last.dev_spearman) + " mae=" + fmt(last.dev_mae) +
          "  elapsed=" + fmt(elapsed, 4) + "s (limit 900s)");
}

double sample_std(const std::vector<double>& v) {
  double mu = 0.0;
  for (const double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (const double x : v) var += (x - mu) * (x - mu);
  return std::sqrt(var / (static_cast<double>(v.size()) - 1.0));
}

bool criterion6(const SyntheticRuns& runs) {
  if (!runs.ad_ok) {
    return report(6, false, "skipped: the criterion 5 run did not complete");
  }
  const testsupport::SyntheticData& d = *runs.data;
  const TrainingConfig cfg = TrainingConfig::for_variant(Variant::kSeA);
  Trainer trainer(cfg, d.embeddings, d.lexicons, d.source, d.target);
  const TrainOutcome a = trainer.run(nullptr, nullptr);

  const std::vector<double> preds_a =
      predict(a.model, d.target, d.embeddings, d.lexicons);
  const std::vector<double> preds_ad =
      predict(runs.ad.model, d.target, d.embeddings, d.lexicons);
  const double std_a = sample_std(preds_a);
  const double std_ad = sample_std(preds_ad);

  const EpochLog& last = runs.ad.epochs.back();
  const double mu_err = std::abs(last.posterior_mu - 0.417);
  const double sigma_err = std::abs(last.posterior_sigma - 0.227);

  const bool pass = std_a < std_ad && mu_err <= 0.05 && sigma_err <= 0.05;
  return report(6, pass,
                "pred_std se_a=" + fmt(std_a) + " < se_ad=" + fmt(std_ad) +
                    " : " + (std_a < std_ad ? "yes" : "no") +
                    "  final_epoch_posterior mu=" + fmt(last.posterior_mu) +
                    " (|d|=" + fmt(mu_err, 3) + " <= 0.05) sigma=" +
                    fmt(last.posterior_sigma) + " (|d|=" + fmt(sigma_err, 3) +
                    " <= 0.05)");
}

// ---------------------------------------------------------------------------
// 7. Rank metrics against brute-force oracles.

bool criterion7() {
  Rng rng(700);
  int checked = 0;
  bool exact = true;
  double mae_max = 0.0;
  for (int i = 0; i < 1000 && exact; ++i) {
    const int n = 2 + static_cast<int>(rng.integer(49));
    std::vector<double> pred(n), gold(n);
    const bool tie_pred = rng.bernoulli(0.7);
    const bool tie_gold = rng.bernoulli(0.7);
    const double grid_p = 2.0 + static_cast<double>(rng.integer(8));
    const double grid_g = 2.0 + static_cast<double>(rng.integer(8));
    for (int j = 0; j < n; ++j) {
      pred[j] = tie_pred ? static_cast<double>(rng.integer(
                               static_cast<std::uint64_t>(grid_p)))
                         : rng.uniform();
      gold[j] = tie_gold ? static_cast<double>(rng.integer(
                               static_cast<std::uint64_t>(grid_g)))
                         : rng.uniform();
    }

    const double brute_tau = testsupport::brute_kendall_tau(pred, gold);
    if (std::isnan(brute_tau)) {
      try {
        kendall_tau(pred, gold);
        exact = false;
      } catch (const UndefinedCorrelation&) {
      }
    } else {
      if (kendall_tau(pred, gold) != brute_tau) exact = false;
      ++checked;
    }

    const double brute_rho = testsupport::brute_spearman(pred, gold);
    if (std::isnan(brute_rho)) {
      try {
        spearman(pred, gold);
        exact = false;
      } catch (const UndefinedCorrelation&) {
      }
    } else {
      if (spearman(pred, gold) != brute_rho) exact = false;
    }

    mae_max = std::max(mae_max,
                       std::abs(mae(pred, gold) - testsupport::brute_mae(pred, gold)));
  }
  const bool pass = exact && mae_max <= 1e-12;
  return report(7, pass,
                std::string("tau/spearman bitwise equal to brute force: ") +
                    (exact ? "yes" : "NO") + " (1000 instances, n <= 50, " +
                    std::to_string(checked) +
                    " defined tau cases)  mae_max_abs=" + fmt(mae_max, 3) +
                    " (tol 1e-12)");
}

// ---------------------------------------------------------------------------
// 8. Augmentation: exact zero-noise identity, calibrated perturbation rate.

bool criterion8() {
  Rng data_rng(800), noise_rng(801);
  std::vector<Eigen::VectorXd> seq;
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd v(8);
    for (int d = 0; d < 8; ++d) v[d] = data_rng.gaussian();
    seq.push_back(std::move(v));
  }
  Eigen::VectorXd feats(6);
  for (int i = 0; i < 6; ++i) feats[i] = data_rng.gaussian();

  NoiseConfig zero;
  zero.emb_gauss_std = 0.0;
  zero.feat_gauss_std = 0.0;
  zero.word_drop_prob = 0.0;
  zero.word_subst_prob = 0.0;
  zero.target_perturb_fraction = 0.0;
  bool identity = true;
  const AugmentResult id = augment(seq, feats, zero, noise_rng);
  if (id.sequence.size() != seq.size()) identity = false;
  for (std::size_t i = 0; identity && i < seq.size(); ++i) {
    if (!id.sequence[i].cwiseEqual(seq[i]).all()) identity = false;
  }
  if (!id.features.cwiseEqual(feats).all()) identity = false;

  NoiseConfig cfg;  // defaults: fraction 0.5, drop 0.15, subst 0.15
  long eligible = 0, dropped = 0, substituted = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const AugmentResult r = augment(seq, feats, cfg, noise_rng);
    eligible += r.n_eligible;
    dropped += r.n_dropped;
    substituted += r.n_substituted;
  }
  const double positions = 10.0 * trials;
  const auto within3 = [](double count, double n, double p) {
    return std::abs(count - n * p) <= 3.0 * std::sqrt(n * p * (1.0 - p));
  };
  const bool frac_ok =
      within3(static_cast<double>(eligible), positions,
              cfg.target_perturb_fraction);
  const bool drop_ok = within3(static_cast<double>(dropped),
                               static_cast<double>(eligible), cfg.word_drop_prob);
  // Substitution is attempted only on eligible, undropped positions.
  const bool subst_ok =
      within3(static_cast<double>(substituted),
              static_cast<double>(eligible - dropped), cfg.word_subst_prob);

  const bool pass = identity && frac_ok && drop_ok && subst_ok;
  return report(
      8, pass,
      std::string("zero_noise_identity=") + (identity ? "exact" : "BROKEN") +
          "  eligible_rate=" + fmt(eligible / positions) + " (target " +
          fmt(cfg.target_perturb_fraction, 3) + ", 3sigma " +
          (frac_ok ? "ok" : "VIOLATED") + ")  drop_rate=" +
          fmt(dropped / static_cast<double>(eligible)) + " subst_rate=" +
          fmt(substituted / static_cast<double>(eligible - dropped)) +
          " (targets 0.15/0.15, 3sigma " +
          (drop_ok && subst_ok ? "ok" : "VIOLATED") + ", 10000 trials)");
}

// ---------------------------------------------------------------------------
// 9. Filter invariants and diversity hand values.

bool criterion9() {
  Rng rng(901);
  bool sizes_ok = true, order_ok = true;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.integer(30);
    std::vector<DialoguePair> pairs(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      pairs[i] = {"c" + std::to_string(i), "r" + std::to_string(i)};
      scores[i] = static_cast<double>(rng.integer(6));  // coarse: forces ties
    }
    const std::size_t keep = rng.integer(n + 1);
    const auto kept = filter_least_specific(pairs, scores, keep);
    if (kept.size() != keep) sizes_ok = false;

    double min_kept = std::numeric_limits<double>::infinity();
    double max_removed = -std::numeric_limits<double>::infinity();
    std::vector<bool> used(n, false);
    for (const DialoguePair& k : kept) {
      const std::size_t idx = std::stoul(k.context.substr(1));
      used[idx] = true;
      min_kept = std::min(min_kept, scores[idx]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i]) max_removed = std::max(max_removed, scores[i]);
    }
    if (keep > 0 && keep < n && min_kept < max_removed) order_ok = false;
  }

  const std::vector<std::vector<std::string>> rep = {{"a", "b", "a", "b"}};
  const std::vector<std::vector<std::string>> uniq = {{"a", "b", "c", "d"}};
  const std::vector<std::vector<std::string>> tri = {{"a", "a", "a"}};
  const bool div_ok = diversity(rep, 1) == 0.5 && diversity(uniq, 1) == 1.0 &&
                      diversity(tri, 2) == 0.5;

  const bool pass = sizes_ok && order_ok && div_ok;
  return report(9, pass,
                std::string("keep_n_exact=") + (sizes_ok ? "yes" : "NO") +
                    "  min_kept>=max_removed=" + (order_ok ? "yes" : "NO") +
                    " (300 random instances)  diversity_hand_values=" +
                    (div_ok ? "match" : "MISMATCH"));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  bool all = true;
  const auto guard = [&all](int id, const std::function<bool()>& fn) {
    try {
      all = fn() && all;
    } catch (const std::exception& e) {
      all = report(id, false, std::string("exception: ") + e.what()) && all;
    }
  };

  guard(1, criterion1);
  guard(2, criterion2);
  guard(3, criterion3);
  guard(4, criterion4);

  SyntheticRuns runs;
  guard(5, [&runs] { return criterion5(runs); });
  guard(6, [&runs] { return criterion6(runs); });

  guard(7, criterion7);
  guard(8, criterion8);
  guard(9, criterion9);

  std::cout << (all ? "ALL CRITERIA PASSED" : "CRITERIA FAILED")
            << "  total_elapsed=" << fmt(seconds_since(start), 4) << "s"
            << std::endl;
  return all ? 0 : 1;
}
