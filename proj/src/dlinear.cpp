#include "sohkit/dlinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "sohkit/error.hpp"
#include "sohkit/kernels.hpp"
#include "sohkit/numfmt.hpp"
#include "sohkit/ridge.hpp"

namespace sohkit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_config(const DLinearConfig& c) {
  if (c.lookback < 1) throw PreconditionError("lookback must be >= 1");
  if (c.horizon < 1) throw PreconditionError("horizon must be >= 1");
  if (c.ma_window < 1 || c.ma_window % 2 == 0) {
    throw PreconditionError("moving-average window must be odd and >= 1, got " +
                            std::to_string(c.ma_window));
  }
  if (c.ma_window > c.lookback) {
    throw PreconditionError("moving-average window " + std::to_string(c.ma_window) +
                            " exceeds lookback " + std::to_string(c.lookback));
  }
}

void check_lengths(int lookback, int horizon) {
  if (lookback < 1 || horizon < 1) {
    throw PreconditionError("lookback and horizon must be >= 1, got L=" +
                            std::to_string(lookback) + " H=" + std::to_string(horizon));
  }
}

void check_channels(const FeatureTable& table, std::span<const std::size_t> channels) {
  if (channels.empty()) throw PreconditionError("no feature channels selected");
  for (std::size_t c : channels) {
    if (c >= kFeatureCount) {
      throw PreconditionError("feature index out of range: " + std::to_string(c));
    }
  }
  (void)table;
}

double channel_value(const FeatureTable& table, std::size_t row, std::size_t channel) {
  const FeatureVector& r = table.rows[row];
  if (!r.computable(channel)) {
    throw PreconditionError("feature " + feature_name(channel) + " is not computable at cycle " +
                            std::to_string(r.cycle_index) + " (" +
                            std::string(to_string(r.status[channel])) + ")");
  }
  return r.values[channel];
}

ChannelScaling fit_scaling(const FeatureTable& table, std::size_t rows,
                           std::span<const std::size_t> channels) {
  ChannelScaling s;
  std::vector<double> col(rows);
  for (std::size_t c : channels) {
    for (std::size_t r = 0; r < rows; ++r) col[r] = channel_value(table, r, c);
    const double mu = mean(col);
    const double sd = std::sqrt(population_variance(col));
    s.mean.push_back(mu);
    s.std.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

// Window whose last input row is `last` (0-based row position).
std::vector<double> window_at(const FeatureTable& table, std::size_t last, int lookback,
                              std::span<const std::size_t> channels, const ChannelScaling& s) {
  const std::size_t nc = channels.size();
  const auto L = static_cast<std::size_t>(lookback);
  std::vector<double> w(L * nc);
  const std::size_t first = last + 1 - L;
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t c = 0; c < nc; ++c) {
      w[l * nc + c] = (channel_value(table, first + l, channels[c]) - s.mean[c]) / s.std[c];
    }
  }
  return w;
}

SupervisedWindows empty_windows(std::span<const std::size_t> channels, int lookback, int horizon,
                                ChannelScaling scaling) {
  SupervisedWindows w;
  w.lookback = lookback;
  w.horizon = horizon;
  w.channels.assign(channels.begin(), channels.end());
  w.scaling = std::move(scaling);
  return w;
}

void push_window(SupervisedWindows& out, const FeatureTable& table, std::size_t last,
                 std::span<const std::size_t> channels) {
  out.inputs.push_back(window_at(table, last, out.lookback, channels, out.scaling));
  out.anchors.push_back(table.rows[last].cycle_index);
  std::vector<double> targets;
  std::vector<int> cycles;
  for (int h = 0; h < out.horizon; ++h) {
    const std::size_t row = last + static_cast<std::size_t>(h);
    if (row < table.size()) {
      targets.push_back(table.soh[row]);
      cycles.push_back(table.rows[row].cycle_index);
    } else {
      targets.push_back(kNaN);
      cycles.push_back(table.rows.back().cycle_index + static_cast<int>(row - table.size()) + 1);
    }
  }
  out.targets.push_back(std::move(targets));
  out.target_cycles.push_back(std::move(cycles));
}

// Per-channel trend/remainder of one window, laid out like the window.
void decompose_window(std::span<const double> window, std::size_t nc, int lookback,
                      int ma_window, std::vector<double>& trend, std::vector<double>& remainder) {
  const auto L = static_cast<std::size_t>(lookback);
  trend.resize(L * nc);
  remainder.resize(L * nc);
  std::vector<double> series(L);
  std::vector<double> ma(L);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t l = 0; l < L; ++l) series[l] = window[l * nc + c];
    kernels::moving_average(series, ma_window, ma);
    for (std::size_t l = 0; l < L; ++l) {
      trend[l * nc + c] = ma[l];
      remainder[l * nc + c] = series[l] - ma[l];
    }
  }
}

}  // namespace

Decomposition decompose(std::span<const double> x, int window) {
  if (window < 1 || window % 2 == 0) {
    throw PreconditionError("moving-average window must be odd and >= 1, got " +
                            std::to_string(window));
  }
  if (static_cast<std::size_t>(window) > x.size()) {
    throw PreconditionError("moving-average window " + std::to_string(window) +
                            " exceeds series length " + std::to_string(x.size()));
  }
  Decomposition d;
  d.window = window;
  d.trend.resize(x.size());
  kernels::moving_average(x, window, d.trend);
  d.remainder.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d.remainder[i] = x[i] - d.trend[i];
  return d;
}

SupervisedWindows build_training_windows(const FeatureTable& table,
                                         std::span<const std::size_t> channels, int lookback,
                                         int horizon, int train_end) {
  check_lengths(lookback, horizon);
  check_channels(table, channels);
  const int minimum = lookback + horizon;
  if (train_end < minimum) {
    throw PreconditionError("train_end " + std::to_string(train_end) +
                            " is too short: minimum length is L+H = " + std::to_string(minimum));
  }
  std::size_t n_train = 0;
  while (n_train < table.size() && table.rows[n_train].cycle_index <= train_end) ++n_train;
  if (n_train < static_cast<std::size_t>(minimum)) {
    throw PreconditionError("series too short: " + std::to_string(n_train) +
                            " cycles up to train_end, minimum length is L+H = " +
                            std::to_string(minimum));
  }

  SupervisedWindows out =
      empty_windows(channels, lookback, horizon, fit_scaling(table, n_train, channels));
  const auto L = static_cast<std::size_t>(lookback);
  const auto H = static_cast<std::size_t>(horizon);
  for (std::size_t last = L - 1; last + H - 1 < n_train; ++last) {
    push_window(out, table, last, channels);
  }
  return out;
}

WindowSplit build_supervised(const FeatureTable& table, std::span<const std::size_t> channels,
                             int lookback, int horizon, int train_end) {
  WindowSplit split;
  split.train = build_training_windows(table, channels, lookback, horizon, train_end);
  std::size_t n_train = 0;
  while (n_train < table.size() && table.rows[n_train].cycle_index <= train_end) ++n_train;
  if (n_train >= table.size()) {
    throw PreconditionError("series too short: no cycles after train_end " +
                            std::to_string(train_end) + " (" + std::to_string(table.size()) +
                            " cycles)");
  }
  split.test = empty_windows(channels, lookback, horizon, split.train.scaling);
  const auto H = static_cast<std::size_t>(horizon);
  for (std::size_t last = n_train; last + H - 1 < table.size(); ++last) {
    push_window(split.test, table, last, channels);
  }
  return split;
}

SupervisedWindows build_inference_windows(const FeatureTable& table, const DLinearModel& model) {
  const int lookback = model.config.lookback;
  if (table.size() < static_cast<std::size_t>(lookback)) {
    throw PreconditionError("table has " + std::to_string(table.size()) +
                            " cycles, model lookback needs " + std::to_string(lookback));
  }
  SupervisedWindows out =
      empty_windows(model.channels, lookback, model.config.horizon, model.scaling);
  for (std::size_t last = static_cast<std::size_t>(lookback) - 1; last < table.size(); ++last) {
    push_window(out, table, last, model.channels);
  }
  return out;
}

std::vector<double> DLinearModel::predict(std::span<const double> window) const {
  const std::size_t nc = channels.size();
  const auto width = static_cast<std::size_t>(config.lookback) * nc;
  if (window.size() != width) {
    throw PreconditionError("window has " + std::to_string(window.size()) +
                            " values, model expects " + std::to_string(width));
  }
  std::vector<double> trend;
  std::vector<double> remainder;
  decompose_window(window, nc, config.lookback, config.ma_window, trend, remainder);
  std::vector<double> out(bias.size());
  for (std::size_t h = 0; h < bias.size(); ++h) {
    out[h] = bias[h] + kernels::dot(trend_weights[h], trend) +
             kernels::dot(remainder_weights[h], remainder);
  }
  return out;
}

DLinearModel fit_dlinear(const DLinearConfig& config, const SupervisedWindows& train) {
  check_config(config);
  if (train.size() == 0) throw PreconditionError("no training windows");
  if (train.lookback != config.lookback || train.horizon != config.horizon) {
    throw PreconditionError("windows built with L=" + std::to_string(train.lookback) +
                            " H=" + std::to_string(train.horizon) + ", model configured with L=" +
                            std::to_string(config.lookback) +
                            " H=" + std::to_string(config.horizon));
  }

  const std::size_t nc = train.channels.size();
  const auto L = static_cast<std::size_t>(config.lookback);
  const auto H = static_cast<std::size_t>(config.horizon);
  const std::size_t width = L * nc;
  const auto n = static_cast<Eigen::Index>(train.size());

  // Decompose once; columns [trend | remainder] in window layout.
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(2 * width));
  Eigen::MatrixXd targets(n, static_cast<Eigen::Index>(H));
  std::vector<double> trend;
  std::vector<double> remainder;
  for (Eigen::Index w = 0; w < n; ++w) {
    const auto& window = train.inputs[static_cast<std::size_t>(w)];
    decompose_window(window, nc, config.lookback, config.ma_window, trend, remainder);
    for (std::size_t j = 0; j < width; ++j) {
      design(w, static_cast<Eigen::Index>(j)) = trend[j];
      design(w, static_cast<Eigen::Index>(width + j)) = remainder[j];
    }
    for (std::size_t h = 0; h < H; ++h) {
      targets(w, static_cast<Eigen::Index>(h)) = train.targets[static_cast<std::size_t>(w)][h];
    }
  }

  DLinearModel model;
  model.config = config;
  model.channels = train.channels;
  model.scaling = train.scaling;
  model.train_end = train.target_cycles.back().back();
  model.trend_weights.assign(H, std::vector<double>(width, 0.0));
  model.remainder_weights.assign(H, std::vector<double>(width, 0.0));
  model.bias.assign(H, 0.0);

  if (!config.individual || nc == 1) {
    const RidgeFit fit = fit_ridge(design, targets, config.ridge);
    for (std::size_t h = 0; h < H; ++h) {
      const auto hh = static_cast<Eigen::Index>(h);
      for (std::size_t j = 0; j < width; ++j) {
        model.trend_weights[h][j] = fit.weights(static_cast<Eigen::Index>(j), hh);
        model.remainder_weights[h][j] = fit.weights(static_cast<Eigen::Index>(width + j), hh);
      }
      model.bias[h] = fit.bias(hh);
    }
    return model;
  }

  // One head per channel on that channel's trend/remainder columns; heads are
  // averaged, which folds into the shared block layout with a 1/C factor.
  const double share = 1.0 / static_cast<double>(nc);
  Eigen::MatrixXd channel_design(n, static_cast<Eigen::Index>(2 * L));
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t l = 0; l < L; ++l) {
      const auto src = static_cast<Eigen::Index>(l * nc + c);
      channel_design.col(static_cast<Eigen::Index>(l)) = design.col(src);
      channel_design.col(static_cast<Eigen::Index>(L + l)) =
          design.col(static_cast<Eigen::Index>(width) + src);
    }
    const RidgeFit fit = fit_ridge(channel_design, targets, config.ridge);
    for (std::size_t h = 0; h < H; ++h) {
      const auto hh = static_cast<Eigen::Index>(h);
      for (std::size_t l = 0; l < L; ++l) {
        model.trend_weights[h][l * nc + c] = share * fit.weights(static_cast<Eigen::Index>(l), hh);
        model.remainder_weights[h][l * nc + c] =
            share * fit.weights(static_cast<Eigen::Index>(L + l), hh);
      }
      model.bias[h] += share * fit.bias(hh);
    }
  }
  return model;
}

SohSeries forecast_series(const DLinearModel& model, const SupervisedWindows& windows) {
  if (windows.lookback != model.config.lookback || windows.horizon != model.config.horizon) {
    throw PreconditionError("windows (L=" + std::to_string(windows.lookback) +
                            ", H=" + std::to_string(windows.horizon) + ") do not match model (L=" +
                            std::to_string(model.config.lookback) +
                            ", H=" + std::to_string(model.config.horizon) + ")");
  }
  if (windows.channels != model.channels) {
    throw PreconditionError("channel mismatch: windows carry " +
                            std::to_string(windows.channels.size()) +
                            " channels that differ from the model's " +
                            std::to_string(model.channels.size()));
  }

  std::map<int, double> by_cycle;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto pred = model.predict(windows.inputs[w]);
    for (std::size_t h = 0; h < pred.size(); ++h) {
      by_cycle[windows.target_cycles[w][h]] = pred[h];
    }
  }
  SohSeries out;
  out.initial_capacity_ah = kNaN;
  for (const auto& [cycle, value] : by_cycle) {
    out.cycle_index.push_back(cycle);
    out.soh.push_back(value);
  }
  return out;
}

nlohmann::json to_json(const DLinearModel& m) {
  nlohmann::json channels = nlohmann::json::array();
  for (std::size_t c : m.channels) channels.push_back(feature_name(c));
  return {
      {"format", "sohkit-dlinear"},
      {"version", 1},
      {"config",
       {{"lookback", m.config.lookback},
        {"horizon", m.config.horizon},
        {"ma_window", m.config.ma_window},
        {"ridge", m.config.ridge},
        {"individual", m.config.individual}}},
      {"train_end", m.train_end},
      {"channels", channels},
      {"standardization", {{"mean", m.scaling.mean}, {"std", m.scaling.std}}},
      {"trend_weights", m.trend_weights},
      {"remainder_weights", m.remainder_weights},
      {"bias", m.bias},
  };
}

DLinearModel dlinear_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "sohkit-dlinear") {
      throw ParseError("not a DLinear model file (format tag mismatch)");
    }
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported model version");
    DLinearModel m;
    const auto& c = j.at("config");
    m.config.lookback = c.at("lookback").get<int>();
    m.config.horizon = c.at("horizon").get<int>();
    m.config.ma_window = c.at("ma_window").get<int>();
    m.config.ridge = c.at("ridge").get<double>();
    m.config.individual = c.at("individual").get<bool>();
    check_config(m.config);
    m.train_end = j.at("train_end").get<int>();
    for (const auto& name : j.at("channels")) {
      const auto idx = feature_index(name.get<std::string>());
      if (!idx) throw ParseError("unknown channel '" + name.get<std::string>() + "'");
      m.channels.push_back(*idx);
    }
    m.scaling.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.scaling.std = j.at("standardization").at("std").get<std::vector<double>>();
    m.trend_weights = j.at("trend_weights").get<std::vector<std::vector<double>>>();
    m.remainder_weights = j.at("remainder_weights").get<std::vector<std::vector<double>>>();
    m.bias = j.at("bias").get<std::vector<double>>();

    const std::size_t nc = m.channels.size();
    const std::size_t width = static_cast<std::size_t>(m.config.lookback) * nc;
    const auto H = static_cast<std::size_t>(m.config.horizon);
    auto block_ok = [&](const std::vector<std::vector<double>>& b) {
      return b.size() == H &&
             std::all_of(b.begin(), b.end(), [&](const auto& row) { return row.size() == width; });
    };
    if (m.scaling.mean.size() != nc || m.scaling.std.size() != nc || m.bias.size() != H ||
        !block_ok(m.trend_weights) || !block_ok(m.remainder_weights)) {
      throw ParseError("model weight shapes do not match (L, C, H) = (" +
                       std::to_string(m.config.lookback) + ", " + std::to_string(nc) + ", " +
                       std::to_string(H) + ")");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace sohkit
