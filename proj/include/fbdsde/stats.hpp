#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace fbdsde {

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSE mean_and_se(const std::vector<double>& xs) {
  MeanSE r;
  const std::size_t n = xs.size();
  if (n == 0) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return r;
}

// Slope of the least-squares line through (x_i, y_i).
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace fbdsde
