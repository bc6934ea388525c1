#pragma once

#include <vector>

namespace fmix {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile function (inverse CDF) for p in (0, 1).
/// Rational initial guess polished by one Halley step; accurate to ~1e-15.
double normal_quantile(double p);

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
double empirical_quantile(const std::vector<double>& sorted, double p);

/// Kolmogorov-Smirnov sup-distance of a sample against Uniform(0,1).
double ks_uniform_distance(std::vector<double> sample);

}  // namespace fmix
