#include "specadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "specadapt/errors.hpp"

namespace specadapt {

namespace {

void check_paired(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("paired metric on lengths " + std::to_string(a.size()) +
                            " and " + std::to_string(b.size()));
  }
  if (a.empty()) {
    throw DimensionMismatch("paired metric on empty input");
  }
}

// Sum of t*(t-1)/2 over runs of equal keys in a sorted sequence.
template <class It, class Eq>
long long tie_pairs(It begin, It end, Eq eq) {
  long long total = 0;
  for (It run = begin; run != end;) {
    It next = run + 1;
    while (next != end && eq(*run, *next)) ++next;
    const long long t = next - run;
    total += t * (t - 1) / 2;
    run = next;
  }
  return total;
}

// Counts pairs i<j with y[i] > y[j] (strict) by merge sort.
long long count_inversions(std::vector<double>& y, std::vector<double>& buf,
                           std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long inv = count_inversions(y, buf, lo, mid) + count_inversions(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      inv += static_cast<long long>(mid - i);
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, y.begin() + lo);
  return inv;
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> gold) {
  check_paired(pred, gold);
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::abs(pred[i] - gold[i]);
  }
  return sum / static_cast<double>(pred.size());
}

double kendall_tau(std::span<const double> pred, std::span<const double> gold) {
  check_paired(pred, gold);
  const std::size_t n = pred.size();
  if (n < 2) {
    throw UndefinedCorrelation("kendall tau needs at least 2 pairs");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pred[a] != pred[b]) return pred[a] < pred[b];
    return gold[a] < gold[b];
  });

  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {pred[order[i]], gold[order[i]]};

  const long long n0 = static_cast<long long>(n) * (n - 1) / 2;
  const long long ties_x = tie_pairs(xy.begin(), xy.end(), [](auto& a, auto& b) {
    return a.first == b.first;
  });
  const long long ties_both = tie_pairs(xy.begin(), xy.end(), [](auto& a, auto& b) {
    return a.first == b.first && a.second == b.second;
  });

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = xy[i].second;
  std::vector<double> sorted_y = y;
  std::sort(sorted_y.begin(), sorted_y.end());
  const long long ties_y = tie_pairs(sorted_y.begin(), sorted_y.end(),
                                     [](double a, double b) { return a == b; });

  // Within an x-tie group y is sorted, so inversions only count pairs with
  // strictly increasing x and strictly decreasing y: the discordant pairs.
  std::vector<double> buf(n);
  const long long discordant = count_inversions(y, buf, 0, n);
  const long long concordant = n0 - ties_x - ties_y + ties_both - discordant;

  const long long denom_x = n0 - ties_x;  // pairs not tied in pred
  const long long denom_y = n0 - ties_y;  // pairs not tied in gold
  if (denom_x == 0 || denom_y == 0) {
    throw UndefinedCorrelation("kendall tau undefined: one side entirely tied");
  }
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(denom_x) * static_cast<double>(denom_y));
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the average 1-based rank.
    const double rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
  check_paired(pred, gold);
  const std::size_t n = pred.size();
  if (n < 2) {
    throw UndefinedCorrelation("spearman needs at least 2 pairs");
  }
  const std::vector<double> rx = average_ranks(pred);
  const std::vector<double> ry = average_ranks(gold);

  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("spearman undefined: zero rank variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

Histogram histogram(std::span<const double> values, int bins) {
  if (values.empty()) {
    throw EmptyBatch("histogram of empty input");
  }
  if (bins < 1) {
    throw InputError("histogram needs at least one bin");
  }
  Histogram h;
  h.n = values.size();
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  double sum = 0;
  for (const double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InputError("histogram values must lie in [0,1]");
    }
    const int idx = std::min(static_cast<int>(v * bins), bins - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
    sum += v;
  }
  h.fitted_mean = sum / static_cast<double>(h.n);
  double ss = 0;
  for (const double v : values) {
    ss += (v - h.fitted_mean) * (v - h.fitted_mean);
  }
  h.fitted_stddev = h.n > 1 ? std::sqrt(ss / static_cast<double>(h.n - 1)) : 0.0;
  return h;
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left,bin_right,count,gaussian_density_at_center\n";
  const double width = 1.0 / static_cast<double>(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double left = width * static_cast<double>(i);
    const double right = left + width;
    const double center = (left + right) / 2.0;
    double density = 0.0;
    if (h.fitted_stddev > 0.0) {
      const double z = (center - h.fitted_mean) / h.fitted_stddev;
      density = std::exp(-0.5 * z * z) /
                (h.fitted_stddev * std::sqrt(2.0 * std::numbers::pi));
    }
    out << left << "," << right << "," << h.counts[i] << "," << density << "\n";
  }
}

}  // namespace specadapt
