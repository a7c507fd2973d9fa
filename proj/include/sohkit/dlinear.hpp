#pragma once

// Decomposition-linear SOH estimator.
//
// Each lookback window of standardized feature channels is split per channel
// into a centered moving-average trend and a remainder; two linear blocks map
// the trend and remainder samples to the H-step SOH target. All parameters
// enter linearly, so fitting is one ridge solve in closed form.
//
// Window convention: a window anchored at cycle a holds the L feature rows
// ending at a and predicts SOH at cycles a .. a+H-1 (features are measured
// online; SOH is the only hidden quantity).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sohkit/features.hpp"
#include "sohkit/ingest.hpp"

namespace sohkit {

struct DLinearConfig {
  int lookback = 16;
  int horizon = 1;
  int ma_window = 5;
  double ridge = 1e-3;
  // false: one joint block over all channels. true: an independent head per
  // channel, heads averaged.
  bool individual = false;

  bool operator==(const DLinearConfig&) const = default;
};

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> remainder;
  int window = 1;
};

// Centered moving average (odd window, replicate padding) and remainder.
Decomposition decompose(std::span<const double> x, int window);

struct ChannelScaling {
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const ChannelScaling&) const = default;
};

struct SupervisedWindows {
  int lookback = 0;
  int horizon = 0;
  std::vector<std::size_t> channels;
  ChannelScaling scaling;
  std::vector<std::vector<double>> inputs;   // L*C each, index l*C + c
  std::vector<std::vector<double>> targets;  // H each
  std::vector<int> anchors;                  // cycle of the last input row
  std::vector<std::vector<int>> target_cycles;

  std::size_t size() const { return inputs.size(); }
};

struct WindowSplit {
  SupervisedWindows train;
  SupervisedWindows test;
};

// Training windows use only rows with cycle_index <= train_end: scaling is
// fitted on those rows and every target cycle is <= train_end.
SupervisedWindows build_training_windows(const FeatureTable& table,
                                         std::span<const std::size_t> channels, int lookback,
                                         int horizon, int train_end);

// Adds test windows anchored at each cycle > train_end whose targets exist.
WindowSplit build_supervised(const FeatureTable& table, std::span<const std::size_t> channels,
                             int lookback, int horizon, int train_end);

struct DLinearModel {
  DLinearConfig config;
  std::vector<std::size_t> channels;
  ChannelScaling scaling;
  std::vector<std::vector<double>> trend_weights;      // H x (L*C)
  std::vector<std::vector<double>> remainder_weights;  // H x (L*C)
  std::vector<double> bias;                            // H
  int train_end = 0;

  // `window` is standardized, L*C values in window layout.
  std::vector<double> predict(std::span<const double> window) const;

  bool operator==(const DLinearModel&) const = default;
};

DLinearModel fit_dlinear(const DLinearConfig& config, const SupervisedWindows& train);

// Step-h prediction for every covered cycle; where windows overlap the most
// recent anchor wins.
SohSeries forecast_series(const DLinearModel& model, const SupervisedWindows& windows);

// Windows over a whole table with the model's stored scaling, for every
// anchor with a full lookback. Targets are the table's SOH where present.
SupervisedWindows build_inference_windows(const FeatureTable& table, const DLinearModel& model);

nlohmann::json to_json(const DLinearModel& model);
DLinearModel dlinear_from_json(const nlohmann::json& j);

}  // namespace sohkit
