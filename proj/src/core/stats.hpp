#pragma once

#include <cstddef>
#include <span>

namespace fbsde {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

// Plain sample mean with its standard error.
Estimate sample_mean(std::span<const double> f);

// Self-normalised weighted mean sum w f / sum w, with the delta-method
// standard error sqrt(sum w^2 (f - mean)^2) / sum w.
Estimate weighted_mean(std::span<const double> f, std::span<const double> w);

// (sum w)^2 / sum w^2.
double effective_sample_size(std::span<const double> w);

// sup_x |F_a^w(x) - F_b(x)| between the weighted empirical CDF of a and the
// unweighted empirical CDF of b.
double weighted_ks_statistic(std::span<const double> a, std::span<const double> wa,
                             std::span<const double> b);

// Asymptotic two-sample critical value c(alpha) sqrt((n + m) / (n m)) with
// c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_critical_value(double alpha, double n, double m);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares y = slope x + intercept; needs two distinct x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace fbsde
