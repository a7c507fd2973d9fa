#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "sohkit/features.hpp"

namespace sohkit::testkit {

// n rows; cell(r, i) fills feature i of row r, target(row) the SOH column.
inline FeatureTable make_table(std::size_t n,
                               const std::function<double(std::size_t, std::size_t)>& cell,
                               const std::function<double(const FeatureVector&)>& target) {
  FeatureTable t;
  for (std::size_t r = 0; r < n; ++r) {
    FeatureVector row;
    row.cycle_index = static_cast<int>(r) + 1;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      row.values[i] = cell(r, i);
      row.status[i] = FeatureStatus::kOk;
    }
    t.soh.push_back(target(row));
    t.rows.push_back(row);
  }
  return t;
}

// Independent N(0,1) features, SOH from `target`.
inline FeatureTable random_table(std::size_t n, std::uint64_t seed,
                                 const std::function<double(const FeatureVector&)>& target) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  return make_table(n, [&](std::size_t, std::size_t) { return g(rng); }, target);
}

}  // namespace sohkit::testkit
