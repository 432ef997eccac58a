#pragma once

#include <Eigen/Core>

#include "specadapt/corpus.hpp"
#include "specadapt/errors.hpp"

namespace specadapt {

// Mean and standard deviation of a prediction batch. sigma_p is the unbiased
// sample estimator clamped below so the KL term stays finite; `clamped`
// records that the floor was hit (the sigma gradient is zero there).
struct BatchPosteriorStats {
  double mu_p = 0.0;
  double sigma_p = 0.0;
  double sigma_raw = 0.0;
  int n = 0;
  bool clamped = false;
};

inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kLogFloor = 1e-12;

// Mean binary cross-entropy; labels must be exactly 0 or 1.
double supervised_loss(const Eigen::VectorXd& preds,
                       const Eigen::VectorXd& labels);
Eigen::VectorXd supervised_loss_grad(const Eigen::VectorXd& preds,
                                     const Eigen::VectorXd& labels);

// Mean squared difference between student and teacher predictions.
double consistency_loss(const Eigen::VectorXd& f_stu,
                        const Eigen::VectorXd& f_tea);
// Gradient w.r.t. the student predictions; the teacher side is a constant.
Eigen::VectorXd consistency_loss_grad(const Eigen::VectorXd& f_stu,
                                      const Eigen::VectorXd& f_tea);

BatchPosteriorStats batch_posterior_stats(const Eigen::VectorXd& preds);

// KL(reference || predicted) for Gaussians fitted to both.
double kl_reg_loss(const BatchPosteriorStats& stats,
                   const ReferenceDistribution& ref);
Eigen::VectorXd kl_reg_loss_grad(const Eigen::VectorXd& preds,
                                 const BatchPosteriorStats& stats,
                                 const ReferenceDistribution& ref);

// |sigma_r - sigma_p| + beta * |mu_r - mu_p|.
double meanstd_reg_loss(const BatchPosteriorStats& stats,
                        const ReferenceDistribution& ref, double beta);
Eigen::VectorXd meanstd_reg_loss_grad(const Eigen::VectorXd& preds,
                                      const BatchPosteriorStats& stats,
                                      const ReferenceDistribution& ref,
                                      double beta);

double total_loss(double l_ce, double l_u, double l_d, double c1, double c2);

}  // namespace specadapt
