#pragma once

#include <Eigen/Core>
#include <vector>

#include "specadapt/errors.hpp"
#include "specadapt/rng.hpp"

namespace specadapt {

enum class SubstMode { kRandomVector, kZeroVector };

// Input noise used during self-ensembling training. Student and teacher each
// apply it with their own random stream, so the two copies of a sentence
// disagree and the consistency term has something to smooth over.
struct NoiseConfig {
  double emb_gauss_std = 0.1;
  double feat_gauss_std = 0.2;
  double word_drop_prob = 0.15;
  double word_subst_prob = 0.15;
  SubstMode subst_mode = SubstMode::kRandomVector;
  double target_perturb_fraction = 0.5;

  void validate() const;
};

struct AugmentResult {
  std::vector<Eigen::VectorXd> sequence;
  Eigen::VectorXd features;
  // Per-call bookkeeping, mostly for tests and diagnostics.
  int n_eligible = 0;
  int n_dropped = 0;
  int n_substituted = 0;
  int n_jittered = 0;
};

// Perturbs one embedded sentence and its standardized feature vector.
// Each position is independently eligible with target_perturb_fraction;
// an eligible position is dropped, substituted or jittered (mutually
// exclusive, tried in that order). Dropping removes the position. If every
// position would drop, one uniformly chosen token survives unperturbed.
// Inputs are never mutated. A zero config is the exact identity.
AugmentResult augment(const std::vector<Eigen::VectorXd>& embedded,
                      const Eigen::VectorXd& feats, const NoiseConfig& cfg,
                      Rng& rng);

}  // namespace specadapt
