#pragma once

// Shapley values by enumerating all 2^d coalitions; absent features take
// background values and the game value averages over the background rows.

#include <cstddef>
#include <vector>

#include "sohkit/select.hpp"

namespace sohkit::testkit {

inline std::vector<double> shapley_brute_force(const Predictor& f, const std::vector<double>& x,
                                               const std::vector<std::vector<double>>& background) {
  const std::size_t d = x.size();
  const std::size_t n_sets = std::size_t{1} << d;
  std::vector<double> value(n_sets, 0.0);
  std::vector<double> z(d);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    double acc = 0.0;
    for (const auto& b : background) {
      for (std::size_t i = 0; i < d; ++i) z[i] = (mask >> i & 1) ? x[i] : b[i];
      acc += f(z);
    }
    value[mask] = acc / static_cast<double>(background.size());
  }
  std::vector<double> factorial(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);

  std::vector<double> phi(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask >> i & 1) continue;
      const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
      const double weight = factorial[s] * factorial[d - s - 1] / factorial[d];
      phi[i] += weight * (value[mask | (std::size_t{1} << i)] - value[mask]);
    }
  }
  return phi;
}

}  // namespace sohkit::testkit
