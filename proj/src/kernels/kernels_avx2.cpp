// Compiled with -mavx2 -mfma. Only reached through the dispatcher after a
// cpuid check, so nothing here may be inlined into generic code.

#include <immintrin.h>

#include <vector>

#include "sohkit/kernels.hpp"

namespace sohkit::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double sum(std::span<const double> x) {
  const double* p = x.data();
  const std::size_t n = x.size();
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(p + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(p + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(p + i));
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += p[i];
  return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = a.size();
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i), _mm256_loadu_pd(pb + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i + 4), _mm256_loadu_pd(pb + i + 4), a1);
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i), _mm256_loadu_pd(pb + i), a0);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += pa[i] * pb[i];
  return acc;
}

CenteredPowerSums centered_power_sums(std::span<const double> x, double mean) {
  const double* p = x.data();
  const std::size_t n = x.size();
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(p + i), vm);
    const __m256d d2 = _mm256_mul_pd(d, d);
    s2 = _mm256_add_pd(s2, d2);
    s3 = _mm256_fmadd_pd(d2, d, s3);
  }
  CenteredPowerSums out{hsum(s2), hsum(s3)};
  for (; i < n; ++i) {
    const double d = p[i] - mean;
    out.s2 += d * d;
    out.s3 += d * d * d;
  }
  return out;
}

CenteredCrossSums centered_cross_sums(std::span<const double> x, double mean_x,
                                      std::span<const double> y, double mean_y) {
  const double* px = x.data();
  const double* py = y.data();
  const std::size_t n = x.size();
  const __m256d mx = _mm256_set1_pd(mean_x);
  const __m256d my = _mm256_set1_pd(mean_y);
  __m256d sxy = _mm256_setzero_pd();
  __m256d sxx = _mm256_setzero_pd();
  __m256d syy = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + i), mx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(py + i), my);
    sxy = _mm256_fmadd_pd(dx, dy, sxy);
    sxx = _mm256_fmadd_pd(dx, dx, sxx);
    syy = _mm256_fmadd_pd(dy, dy, syy);
  }
  CenteredCrossSums out{hsum(sxy), hsum(sxx), hsum(syy)};
  for (; i < n; ++i) {
    const double dx = px[i] - mean_x;
    const double dy = py[i] - mean_y;
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

  // Lane j of each block accumulates output i + j over k = 0..window-1, the
  // same order the scalar reference uses, so results match bit for bit.
  const double denom = static_cast<double>(window);
  const __m256d vden = _mm256_set1_pd(denom);
  const double* p = padded.data();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int k = 0; k < window; ++k) {
      acc = _mm256_add_pd(acc, _mm256_loadu_pd(p + i + static_cast<std::size_t>(k)));
    }
    _mm256_storeu_pd(out.data() + i, _mm256_div_pd(acc, vden));
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += p[i + static_cast<std::size_t>(k)];
    out[i] = acc / denom;
  }
}

}  // namespace sohkit::kernels::avx2
