#pragma once

// Data-parallel reductions used by the feature, selection and forecasting
// code. Every kernel has a scalar reference implementation; vector variants
// are compiled separately and chosen once per process from the CPU features.
//
// The moving average is bit-identical across backends (each output lane sums
// its window in the same order). Reductions (sum, dot, centered sums) change
// summation order across backends and agree to a few ulps of the magnitude of
// the summands.

#include <cstddef>
#include <span>
#include <string_view>

namespace sohkit::kernels {

enum class Backend { kScalar, kAvx2 };

struct CenteredPowerSums {
  double s2 = 0.0;  // sum (x - m)^2
  double s3 = 0.0;  // sum (x - m)^3
};

struct CenteredCrossSums {
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
};

double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
CenteredPowerSums centered_power_sums(std::span<const double> x, double mean);
CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y);

// Centered moving average of odd `window` with replicate padding of window/2
// samples at each end. `out` must have x.size() elements.
void moving_average(std::span<const double> x, int window, std::span<double> out);

Backend active_backend();
bool backend_available(Backend backend);
// Throws std::invalid_argument if the backend is not available on this CPU or
// was not compiled in. Intended for tests and benchmarks.
void set_backend(Backend backend);
std::string_view to_string(Backend backend);

namespace scalar {
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
CenteredPowerSums centered_power_sums(std::span<const double> x, double mean);
CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y);
void moving_average(std::span<const double> x, int window, std::span<double> out);
}  // namespace scalar

#if defined(SOHKIT_HAVE_AVX2)
namespace avx2 {
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
CenteredPowerSums centered_power_sums(std::span<const double> x, double mean);
CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y);
void moving_average(std::span<const double> x, int window, std::span<double> out);
}  // namespace avx2
#endif

}  // namespace sohkit::kernels
