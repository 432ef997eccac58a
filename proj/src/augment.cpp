#include "specadapt/augment.hpp"

namespace specadapt {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void NoiseConfig::validate() const {
  if (!is_probability(word_drop_prob) || !is_probability(word_subst_prob) ||
      !is_probability(target_perturb_fraction)) {
    throw InputError("noise probabilities must lie in [0,1]");
  }
  if (emb_gauss_std < 0.0 || feat_gauss_std < 0.0) {
    throw InputError("noise standard deviations must be nonnegative");
  }
}

AugmentResult augment(const std::vector<Eigen::VectorXd>& embedded,
                      const Eigen::VectorXd& feats, const NoiseConfig& cfg,
                      Rng& rng) {
  cfg.validate();
  if (embedded.empty()) {
    throw EmptySentence("cannot augment an empty sequence");
  }

  AugmentResult out;
  out.sequence.reserve(embedded.size());

  for (const Eigen::VectorXd& vec : embedded) {
    if (!rng.bernoulli(cfg.target_perturb_fraction)) {
      out.sequence.push_back(vec);
      continue;
    }
    ++out.n_eligible;
    if (rng.bernoulli(cfg.word_drop_prob)) {
      ++out.n_dropped;
      continue;
    }
    if (rng.bernoulli(cfg.word_subst_prob)) {
      ++out.n_substituted;
      Eigen::VectorXd subst = Eigen::VectorXd::Zero(vec.size());
      if (cfg.subst_mode == SubstMode::kRandomVector) {
        for (Eigen::Index i = 0; i < subst.size(); ++i) {
          subst(i) = rng.gaussian(0.0, cfg.emb_gauss_std);
        }
      }
      out.sequence.push_back(std::move(subst));
      continue;
    }
    ++out.n_jittered;
    if (cfg.emb_gauss_std > 0.0) {
      Eigen::VectorXd jittered = vec;
      for (Eigen::Index i = 0; i < jittered.size(); ++i) {
        jittered(i) += rng.gaussian(0.0, cfg.emb_gauss_std);
      }
      out.sequence.push_back(std::move(jittered));
    } else {
      out.sequence.push_back(vec);
    }
  }

  if (out.sequence.empty()) {
    // Every position dropped; keep one token so the sentence survives.
    const std::size_t keep = rng.integer(embedded.size());
    out.sequence.push_back(embedded[keep]);
    --out.n_dropped;
  }

  out.features = feats;
  if (cfg.feat_gauss_std > 0.0) {
    for (Eigen::Index i = 0; i < out.features.size(); ++i) {
      out.features(i) += rng.gaussian(0.0, cfg.feat_gauss_std);
    }
  }
  return out;
}

}  // namespace specadapt
