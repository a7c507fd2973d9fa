#include <vector>

#include "sohkit/kernels.hpp"

namespace sohkit::kernels::scalar {

double sum(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

CenteredPowerSums centered_power_sums(std::span<const double> x, double mean) {
  CenteredPowerSums out;
  for (double v : x) {
    const double d = v - mean;
    const double d2 = d * d;
    out.s2 += d2;
    out.s3 += d2 * d;
  }
  return out;
}

CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y) {
  CenteredCrossSums out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    out.sxy += dx * dy;
    out.sxx += dx * dx;
    out.syy += dy * dy;
  }
  return out;
}

void moving_average(std::span<const double> x, int window, std::span<double> out) {
  const std::size_t n = x.size();
  const std::size_t half = static_cast<std::size_t>(window / 2);
  std::vector<double> padded(n + 2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    padded[i] = x.front();
    padded[half + n + i] = x.back();
  }
  for (std::size_t i = 0; i < n; ++i) padded[half + i] = x[i];

  const double denom = static_cast<double>(window);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += padded[i + static_cast<std::size_t>(k)];
    out[i] = acc / denom;
  }
}

}  // namespace sohkit::kernels::scalar
