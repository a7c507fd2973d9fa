#pragma once

// The 20 per-cycle health features computed from a charge/discharge pair.
//
//   F1  variance of discharge current        F11 variance of discharge temperature
//   F2  variance of discharge voltage        F12 skewness of discharge temperature
//   F3  median of discharge load voltage     F13 min discharge temperature
//   F4  skewness of discharge voltage        F14 max charge temperature
//   F5  skewness of discharge load voltage   F15 min charge temperature
//   F6  discharge voltage slope, 50-500 s    F16 mean charge temperature
//   F7  discharge voltage slope, 50-1000 s   F17 skewness of charge temperature
//   F8  discharge voltage slope, 50-1500 s   F18 constant-current charge time
//   F9  max discharge temperature            F19 constant-voltage charge time
//   F10 mean discharge temperature           F20 total discharge time
//
// Variances and skewness use population (1/N) moments.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sohkit/ingest.hpp"

namespace sohkit {

inline constexpr std::size_t kFeatureCount = 20;

// "F1".."F20" for 0-based column i.
std::string feature_name(std::size_t index);
// Inverse of feature_name; nullopt for anything else.
std::optional<std::size_t> feature_index(std::string_view name);

enum class FeatureStatus : std::uint8_t {
  kOk,
  kFallback,         // computed, but a window or threshold fell back to the record end
  kZeroVariance,     // not computable: constant input
  kTooFewSamples,    // not computable: not enough samples
  kOutOfRange,       // not computable: record ends before the window starts
  kMissing,          // not computable: absent in an imported table
};

std::string_view to_string(FeatureStatus status);
inline bool computable(FeatureStatus s) {
  return s == FeatureStatus::kOk || s == FeatureStatus::kFallback;
}

struct FeatureValue {
  double value;
  FeatureStatus status;
};

struct FeatureVector {
  int cycle_index = 0;
  std::array<double, kFeatureCount> values{};  // NaN where not computable
  std::array<FeatureStatus, kFeatureCount> status{};

  bool computable(std::size_t i) const { return sohkit::computable(status[i]); }
};

struct FeatureTable {
  std::vector<FeatureVector> rows;
  std::vector<double> soh;  // aligned with rows

  std::size_t size() const { return rows.size(); }
  std::vector<double> column(std::size_t feature) const;
  std::vector<int> cycle_indices() const;
  // True when every row has a computable value for `feature`.
  bool column_complete(std::size_t feature) const;
};

// --- statistics -----------------------------------------------------------

double mean(std::span<const double> x);
double population_variance(std::span<const double> x);
// Even length: mean of the two middle order statistics.
double median(std::span<const double> x);
// Fisher-Pearson g1 = m3 / m2^1.5 with population moments. Requires
// x.size() >= 3; nullopt for constant input.
std::optional<double> skewness(std::span<const double> x);

// --- curve features -------------------------------------------------------

// OLS slope of v_measured against t over samples with t1 <= t <= t2. If the
// record ends before t2 the fit uses [t1, end] and the status is kFallback.
FeatureValue slope_between(const CycleRecord& rec, double t1, double t2);

struct CcCvTimes {
  double t_cc = 0.0;
  double t_cv = 0.0;
  bool cc_fallback = false;  // voltage never reached v_cut
  bool cv_fallback = false;  // current never dropped to i_cut
};

// Threshold crossings are linearly interpolated between bracketing samples.
CcCvTimes cc_cv_split(const CycleRecord& charge, double v_cut = 4.2, double i_cut = 0.02);

FeatureVector extract_cycle_features(const CycleRecord& charge, const CycleRecord& discharge);
FeatureTable extract_feature_table(const CellDataset& ds);

// Rows with cycle_index <= last_cycle, order preserved.
FeatureTable slice_until(const FeatureTable& table, int last_cycle);

// CSV `cycle_index,F1,...,F20,soh`; non-computable values are empty fields.
void write_feature_csv(const FeatureTable& table, std::ostream& out);
void save_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable parse_feature_csv(std::istream& in);
FeatureTable load_feature_csv(const std::filesystem::path& path);

}  // namespace sohkit
