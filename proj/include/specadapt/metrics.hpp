#pragma once

#include <ostream>
#include <span>
#include <vector>

namespace specadapt {

// Mean absolute error. Throws DimensionMismatch on length mismatch or empty
// input.
double mae(std::span<const double> pred, std::span<const double> gold);

// Tie-corrected Kendall tau-b, computed in O(n log n) via merge-sort
// inversion counting. Throws UndefinedCorrelation when either side is
// entirely tied.
double kendall_tau(std::span<const double> pred, std::span<const double> gold);

// Spearman rank correlation with average ranks for ties. Throws
// UndefinedCorrelation when either rank vector has zero variance.
double spearman(std::span<const double> pred, std::span<const double> gold);

// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Equal-width histogram over [0,1] with a right-closed last bin, plus a
// fitted Gaussian (sample mean, (n-1)-stddev).
struct Histogram {
  std::vector<long> counts;
  double fitted_mean = 0.0;
  double fitted_stddev = 0.0;
  std::size_t n = 0;
};

Histogram histogram(std::span<const double> values, int bins);

// CSV: bin_left, bin_right, count, gaussian_density_at_center.
void write_histogram_csv(std::ostream& out, const Histogram& h);

}  // namespace specadapt
