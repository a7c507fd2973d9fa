#pragma once

// Experiment grid: per-cell prediction, feature-count and training-length
// sweeps, cross-cell transfer, plus the plot-ready files for each.
//
// Every run selects, standardizes and fits on cycles <= train_end only and is
// scored on the cycles after it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sohkit/dlinear.hpp"
#include "sohkit/features.hpp"
#include "sohkit/select.hpp"

namespace sohkit {

double rmse(std::span<const double> pred, std::span<const double> actual);

// Which features a run trains on.
enum class Regime { kAll, kPcc, kShap };

std::string_view to_string(Regime regime);
std::optional<Regime> parse_regime(std::string_view name);

struct CellSource {
  std::string id;
  std::string path;  // cell telemetry CSV or feature CSV, relative to the config file
};

struct TransferSpec {
  std::string source;
  std::vector<std::string> targets;
  Regime regime = Regime::kPcc;
  std::size_t k = 3;
  int train_end = 70;
};

struct ExperimentConfig {
  std::vector<CellSource> cells;
  std::vector<Regime> regimes{Regime::kAll, Regime::kPcc, Regime::kShap};
  std::vector<std::size_t> ks{3};
  std::vector<int> train_ends{70};
  DLinearConfig model;
  std::uint64_t seed = 42;
  int shap_n_perm = 200;
  std::vector<TransferSpec> transfers;
  // Refit every run on the table truncated at train_end and require a
  // bit-identical model.
  bool verify_leakage = true;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Throws ValidationError on anything outside the config's domain.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
void validate(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical config JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

using TableSet = std::map<std::string, FeatureTable>;

// Loads every configured cell; telemetry CSVs go through feature extraction.
TableSet load_tables(const ExperimentConfig& cfg, const std::filesystem::path& base_dir);

struct RunRecord {
  std::string kind;    // "grid" or "transfer"
  std::string cell;    // the cell being predicted
  std::string source;  // transfer source; empty for grid runs
  Regime regime = Regime::kAll;
  std::size_t k = 0;
  int train_end = 0;

  bool ok = false;
  std::string error;
  std::vector<std::size_t> features;
  std::size_t train_windows = 0;
  std::vector<int> cycles;  // test cycles
  std::vector<double> actual;
  std::vector<double> predicted;
  double rmse = 0.0;
  // Reference points: last training SOH held flat, and a ridge map from the
  // current cycle's features to SOH.
  double persistence_rmse = 0.0;
  double pointwise_ridge_rmse = 0.0;
  std::optional<bool> leakage_ok;

  std::string id() const;
};

struct RankingAgreement {
  std::string cell;
  Regime regime = Regime::kPcc;
  std::string variant;
  std::vector<std::size_t> top3;
  std::vector<std::size_t> reference;
  std::size_t overlap = 0;
};

struct ExperimentReport {
  std::string version;
  std::string config_hash;
  ExperimentConfig config;
  std::vector<RunRecord> runs;  // canonical order
  // Keyed "<cell>/<regime>/<train_end>".
  std::map<std::string, SelectionReport> selections;
  std::map<std::string, SohSeries> soh;
  std::vector<RankingAgreement> ranking;
};

nlohmann::json to_json(const RunRecord& run);
nlohmann::json to_json(const ExperimentReport& report);

// Grid over cells x regimes x ks x train_ends (the all-features regime runs
// once per train_end), followed by the configured transfers. Run failures are
// recorded and the grid continues.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const TableSet& tables);

// Features chosen on the source's training slice; each target fits its own
// model on that subset.
ExperimentReport cross_cell_transfer(const ExperimentConfig& cfg, const TableSet& tables,
                                     const TransferSpec& transfer);

ExperimentReport training_cycle_sweep(const ExperimentConfig& cfg, const TableSet& tables,
                                      const std::string& cell, std::span<const int> train_ends,
                                      std::span<const Regime> regimes, std::size_t k);

// Fitted model for one run; `table` may be full or already truncated.
DLinearModel fit_run_model(const ExperimentConfig& cfg, const FeatureTable& table, Regime regime,
                           std::size_t k, int train_end);

// Writes report.json, the per-figure CSVs, per-run prediction CSVs and
// manifest.json. Returns paths relative to out_dir.
std::vector<std::string> emit_plot_data(const ExperimentReport& report,
                                        const std::filesystem::path& out_dir);

}  // namespace sohkit
