#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ranknet/errors.hpp"

namespace ranknet {

/// Nearest-rank empirical quantile: the ceil(rho*n)-th order statistic
/// (the smallest value for rho = 0).
inline double quantile_nearest_rank(std::span<const double> values, double rho) {
  if (values.empty()) throw MetricError("quantile of an empty sample");
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("quantile level outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const auto n = v.size();
  // the small offset keeps products such as 0.7 * 10 = 7.000000000000001 on 7
  std::size_t k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

}  // namespace ranknet
