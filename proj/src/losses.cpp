#include "specadapt/losses.hpp"

#include <cmath>

namespace specadapt {

namespace {

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

double sign_of(double x) {
  if (x > 0.0) return 1.0;
  if (x < 0.0) return -1.0;
  return 0.0;
}

void check_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("prediction batches differ in length");
  }
  if (a.size() == 0) {
    throw EmptyBatch("loss over an empty batch");
  }
}

void require_distribution_batch(const BatchPosteriorStats& stats) {
  if (stats.n < 2) {
    throw InsufficientBatch(
        "distribution loss needs at least two predictions");
  }
}

// d sigma_p / d pred_i per element; zero everywhere once the floor clamps.
Eigen::VectorXd sigma_grad(const Eigen::VectorXd& preds,
                           const BatchPosteriorStats& stats) {
  if (stats.clamped) {
    return Eigen::VectorXd::Zero(preds.size());
  }
  const double denom = (static_cast<double>(stats.n) - 1.0) * stats.sigma_raw;
  return (preds.array() - stats.mu_p).matrix() / denom;
}

}  // namespace

double supervised_loss(const Eigen::VectorXd& preds,
                       const Eigen::VectorXd& labels) {
  check_pair(preds, labels);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    const double y = labels(i);
    if (y != 0.0 && y != 1.0) {
      throw InputError("supervised labels must be exactly 0 or 1");
    }
    const double f = preds(i);
    sum -= y * safe_log(f) + (1.0 - y) * safe_log(1.0 - f);
  }
  return sum / static_cast<double>(preds.size());
}

Eigen::VectorXd supervised_loss_grad(const Eigen::VectorXd& preds,
                                     const Eigen::VectorXd& labels) {
  check_pair(preds, labels);
  const double n = static_cast<double>(preds.size());
  Eigen::VectorXd g(preds.size());
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    const double y = labels(i);
    const double f = preds(i);
    g(i) = (-y / std::max(f, kLogFloor) +
            (1.0 - y) / std::max(1.0 - f, kLogFloor)) /
           n;
  }
  return g;
}

double consistency_loss(const Eigen::VectorXd& f_stu,
                        const Eigen::VectorXd& f_tea) {
  check_pair(f_stu, f_tea);
  return (f_stu - f_tea).squaredNorm() / static_cast<double>(f_stu.size());
}

Eigen::VectorXd consistency_loss_grad(const Eigen::VectorXd& f_stu,
                                      const Eigen::VectorXd& f_tea) {
  check_pair(f_stu, f_tea);
  return 2.0 * (f_stu - f_tea) / static_cast<double>(f_stu.size());
}

BatchPosteriorStats batch_posterior_stats(const Eigen::VectorXd& preds) {
  if (preds.size() == 0) {
    throw EmptyBatch("posterior statistics of an empty batch");
  }
  BatchPosteriorStats s;
  s.n = static_cast<int>(preds.size());
  s.mu_p = preds.mean();
  if (s.n > 1) {
    s.sigma_raw = std::sqrt((preds.array() - s.mu_p).square().sum() /
                            (static_cast<double>(s.n) - 1.0));
  }
  s.clamped = s.sigma_raw < kSigmaFloor;
  s.sigma_p = s.clamped ? kSigmaFloor : s.sigma_raw;
  return s;
}

double kl_reg_loss(const BatchPosteriorStats& stats,
                   const ReferenceDistribution& ref) {
  require_distribution_batch(stats);
  const double dm = ref.mean - stats.mu_p;
  return std::log(stats.sigma_p / ref.stddev) +
         (ref.stddev * ref.stddev + dm * dm) /
             (2.0 * stats.sigma_p * stats.sigma_p) -
         0.5;
}

Eigen::VectorXd kl_reg_loss_grad(const Eigen::VectorXd& preds,
                                 const BatchPosteriorStats& stats,
                                 const ReferenceDistribution& ref) {
  require_distribution_batch(stats);
  const double dm = ref.mean - stats.mu_p;
  const double s = stats.sigma_p;
  const double d_mu = (stats.mu_p - ref.mean) / (s * s);
  const double d_sigma = 1.0 / s - (ref.stddev * ref.stddev + dm * dm) / (s * s * s);
  const double n = static_cast<double>(stats.n);
  return Eigen::VectorXd::Constant(preds.size(), d_mu / n) +
         d_sigma * sigma_grad(preds, stats);
}

double meanstd_reg_loss(const BatchPosteriorStats& stats,
                        const ReferenceDistribution& ref, double beta) {
  require_distribution_batch(stats);
  return std::abs(ref.stddev - stats.sigma_p) +
         beta * std::abs(ref.mean - stats.mu_p);
}

Eigen::VectorXd meanstd_reg_loss_grad(const Eigen::VectorXd& preds,
                                      const BatchPosteriorStats& stats,
                                      const ReferenceDistribution& ref,
                                      double beta) {
  require_distribution_batch(stats);
  const double d_sigma = sign_of(stats.sigma_p - ref.stddev);
  const double d_mu = beta * sign_of(stats.mu_p - ref.mean);
  const double n = static_cast<double>(stats.n);
  return Eigen::VectorXd::Constant(preds.size(), d_mu / n) +
         d_sigma * sigma_grad(preds, stats);
}

double total_loss(double l_ce, double l_u, double l_d, double c1, double c2) {
  return l_ce + c1 * l_u + c2 * l_d;
}

}  // namespace specadapt
