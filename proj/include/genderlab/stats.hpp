#pragma once

#include <cstdint>
#include <span>

namespace genderlab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapConfig {
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
};

double mean(std::span<const double> values);

// Percentile bootstrap of the mean: resample with replacement, take the
// (1-level)/2 and (1+level)/2 quantiles (linear interpolation). Bounds are
// widened if needed so they always contain the sample mean. The caller fixes
// the order of values; the result depends on it only through the seed stream.
Interval bootstrap_mean_ci(std::span<const double> values, const BootstrapConfig& config);

}  // namespace genderlab
