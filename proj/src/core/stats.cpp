#include "core/stats.hpp"

#include "core/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace fbsde {

Estimate sample_mean(std::span<const double> f) {
  require(!f.empty(), "sample_mean: empty sample");
  const double n = static_cast<double>(f.size());
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / n;
  if (f.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : f) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

Estimate weighted_mean(std::span<const double> f, std::span<const double> w) {
  require(f.size() == w.size() && !f.empty(), "weighted_mean: size mismatch");
  double sw = 0.0, swf = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sw += w[i];
    swf += w[i] * f[i];
  }
  require(sw > 0.0, "weighted_mean: weights sum to zero");
  const double mean = swf / sw;
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double e = w[i] * (f[i] - mean);
    acc += e * e;
  }
  return {mean, std::sqrt(acc) / sw};
}

double effective_sample_size(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

double weighted_ks_statistic(std::span<const double> a, std::span<const double> wa,
                             std::span<const double> b) {
  require(a.size() == wa.size() && !a.empty() && !b.empty(),
          "weighted_ks_statistic: bad sample sizes");
  std::vector<std::size_t> ia(a.size());
  std::iota(ia.begin(), ia.end(), std::size_t{0});
  std::sort(ia.begin(), ia.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sb.begin(), sb.end());
  const double total = std::accumulate(wa.begin(), wa.end(), 0.0);
  require(total > 0.0, "weighted_ks_statistic: weights sum to zero");

  double fa = 0.0, stat = 0.0;
  std::size_t i = 0, j = 0;
  const double nb = static_cast<double>(sb.size());
  while (i < ia.size() || j < sb.size()) {
    double x;
    if (j >= sb.size() || (i < ia.size() && a[ia[i]] <= sb[j]))
      x = a[ia[i]];
    else
      x = sb[j];
    while (i < ia.size() && a[ia[i]] <= x) fa += wa[ia[i++]];
    while (j < sb.size() && sb[j] <= x) ++j;
    stat = std::max(stat, std::abs(fa / total - static_cast<double>(j) / nb));
  }
  return stat;
}

double ks_critical_value(double alpha, double n, double m) {
  require(alpha > 0.0 && alpha < 1.0 && n > 0.0 && m > 0.0,
          "ks_critical_value: bad arguments");
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) * std::sqrt((n + m) / (n * m));
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line: need two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  require(den > 0.0, "fit_line: x values are all equal");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  f.points = x.size();
  return f;
}

}  // namespace fbsde
