#pragma once

#include <cmath>
#include <vector>

#include "kinegen/common.hpp"

namespace kinegen {

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw validation_error("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// population standard deviation (divides by n)
inline double std_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace kinegen
