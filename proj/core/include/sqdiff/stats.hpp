#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqdiff::stats {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for `successes` out of `n` at normal quantile z.
Interval wilson(std::size_t successes, std::size_t n, double z = 1.959963984540054);

double mean(std::span<const double> v);
/// Unbiased sample variance.
double variance(std::span<const double> v);
double std_error(std::span<const double> v);

/// Standard error of the mean from `batches` non-overlapping batch means.
double batch_means_se(std::span<const double> series, std::size_t batches = 32);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Asymptotic two-sample critical value at 95%.
double ks_critical_95(std::size_t n, std::size_t m);

/// Exact 1-d Wasserstein-1 distance between two empirical laws.
double wasserstein1(std::vector<double> a, std::vector<double> b);

/// Empirical quantile with linear interpolation, q in [0, 1].
double quantile(std::vector<double> v, double q);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<double> residuals;
};

/// Ordinary least squares y = intercept + slope x. Needs two distinct x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string digest(std::string_view text);

}  // namespace sqdiff::stats
