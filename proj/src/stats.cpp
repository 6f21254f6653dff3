#include "genderlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "genderlab/error.hpp"
#include "genderlab/random.hpp"

namespace genderlab {
namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * double(sorted.size() - 1);
  const std::size_t i = std::size_t(std::floor(pos));
  const std::size_t j = std::min(i + 1, sorted.size() - 1);
  const double frac = pos - double(i);
  return sorted[i] + frac * (sorted[j] - sorted[i]);
}

}  // namespace

double mean(std::span<const double> values) {
  if (values.empty()) throw InputError("mean of an empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / double(values.size());
}

Interval bootstrap_mean_ci(std::span<const double> values, const BootstrapConfig& config) {
  if (values.empty()) throw InputError("bootstrap of an empty sample");
  if (config.resamples <= 0 || !(config.level > 0.0 && config.level < 1.0)) {
    throw ConfigError("bootstrap needs resamples > 0 and level in (0, 1)");
  }
  const double m = mean(values);
  const std::size_t n = values.size();
  Rng rng(config.seed);
  std::vector<double> stats(std::size_t(config.resamples));
  for (double& s : stats) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += values[rng.below(n)];
    s = sum / double(n);
  }
  std::sort(stats.begin(), stats.end());
  Interval ci{quantile(stats, (1.0 - config.level) / 2.0), quantile(stats, (1.0 + config.level) / 2.0)};
  ci.lo = std::min(ci.lo, m);
  ci.hi = std::max(ci.hi, m);
  return ci;
}

}  // namespace genderlab
