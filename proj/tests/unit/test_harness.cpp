#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sohkit/error.hpp"
#include "sohkit/harness.hpp"
#include "synthetic_cell.hpp"

using namespace sohkit;
namespace fs = std::filesystem;

namespace {

const TableSet& synthetic_tables() {
  static const TableSet tables = [] {
    TableSet t;
    const char* ids[] = {"SYN1", "SYN2", "SYN3"};
    for (int i = 0; i < 3; ++i) {
      testkit::SyntheticCellOptions o;
      o.seed = 100 + static_cast<std::uint64_t>(i);
      o.cycles = 120;
      o.fade_per_cycle = 0.0015 + 0.0002 * i;
      o.ambient_c = 23.0 + i;
      t[ids[i]] = extract_feature_table(testkit::make_synthetic_cell(o, ids[i]));
    }
    return t;
  }();
  return tables;
}

ExperimentConfig base_config(std::vector<std::string> cells) {
  ExperimentConfig cfg;
  for (auto& id : cells) cfg.cells.push_back({id, id + ".csv"});
  cfg.shap_n_perm = 40;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sohkit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST(Rmse, Examples) {
  const std::vector<double> a{0.9, 0.8, 0.7};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), 3.5355339059327378,
              1e-15);
  const std::vector<double> b{1.0, 0.5, 0.75};
  EXPECT_EQ(rmse(a, b), rmse(b, a));
  EXPECT_THROW(rmse(a, std::vector<double>{1.0}), PreconditionError);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), PreconditionError);
}

TEST(ExperimentConfig, JsonRoundTripAndValidation) {
  const auto j = nlohmann::json::parse(R"({
    "cells": [{"id": "A", "path": "a.csv"}, {"id": "B", "path": "b.csv"}],
    "methods": ["all", "shap"], "ks": [2, 3], "train_ends": [30, 70],
    "model": {"lookback": 8, "ma_window": 3},
    "transfers": [{"source": "A", "targets": ["B"], "method": "shap", "k": 3, "train_end": 70}]
  })");
  const ExperimentConfig cfg = experiment_config_from_json(j);
  EXPECT_EQ(cfg.model.lookback, 8);
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.regimes.size(), 2u);
  EXPECT_EQ(to_json(experiment_config_from_json(to_json(cfg))), to_json(cfg));

  auto bad = j;
  bad["typo"] = 1;
  EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
  bad = j;
  bad["train_ends"] = {5};
  EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
  bad = j;
  bad["ks"] = {0};
  EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
  bad = j;
  bad["transfers"][0]["targets"] = {"A"};
  EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
  bad = j;
  bad["methods"] = {"lasso"};
  EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
}

TEST(ExperimentConfig, HashIsStableAndSensitive) {
  ExperimentConfig a = base_config({"SYN1"});
  ExperimentConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 43;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(RunExperiment, FeatureCountGridHasSixRuns) {
  ExperimentConfig cfg = base_config({"SYN1"});
  cfg.regimes = {Regime::kPcc, Regime::kShap};
  cfg.ks = {3, 4, 5};
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  ASSERT_EQ(rep.runs.size(), 6u);
  for (const auto& r : rep.runs) {
    EXPECT_TRUE(r.ok) << r.id() << ": " << r.error;
    EXPECT_EQ(r.features.size(), r.k);
    EXPECT_EQ(r.leakage_ok, true) << r.id();
    EXPECT_EQ(r.cycles.front(), 71);
    EXPECT_EQ(r.cycles.back(), 120);
  }
  EXPECT_EQ(rep.selections.size(), 2u);
}

TEST(RunExperiment, AllFeaturesRegimeTracksSoh) {
  ExperimentConfig cfg = base_config({"SYN1"});
  cfg.regimes = {Regime::kAll};
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  ASSERT_EQ(rep.runs.size(), 1u);
  const RunRecord& r = rep.runs[0];
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.features.size(), 20u);
  EXPECT_LT(r.rmse, 0.05);
  EXPECT_TRUE(std::isfinite(r.persistence_rmse));
}

TEST(RunExperiment, ReportIsDeterministicAndSelfConsistent) {
  ExperimentConfig cfg = base_config({"SYN1", "SYN2"});
  cfg.ks = {2, 3};
  cfg.train_ends = {40, 70};
  cfg.transfers.push_back({"SYN1", {"SYN2"}, Regime::kShap, 3, 70});
  const std::string a = to_json(run_experiment(cfg, synthetic_tables())).dump();
  const std::string b = to_json(run_experiment(cfg, synthetic_tables())).dump();
  EXPECT_EQ(a, b);

  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  for (const auto& r : rep.runs) {
    if (!r.ok) continue;
    EXPECT_NEAR(rmse(r.predicted, r.actual), r.rmse, 1e-12);
  }
  // Stored JSON reproduces the RMSE too.
  const auto j = nlohmann::json::parse(a);
  for (const auto& r : j["runs"]) {
    if (r["status"] != "ok") continue;
    const auto p = r["series"]["predicted"].get<std::vector<double>>();
    const auto act = r["series"]["actual"].get<std::vector<double>>();
    EXPECT_NEAR(rmse(p, act), r["rmse"].get<double>(), 1e-12);
  }
}

TEST(RunExperiment, RunsAreInCanonicalOrder) {
  ExperimentConfig cfg = base_config({"SYN2", "SYN1"});
  cfg.train_ends = {70, 40};
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  for (std::size_t i = 1; i < rep.runs.size(); ++i) {
    const auto& p = rep.runs[i - 1];
    const auto& c = rep.runs[i];
    EXPECT_LE(std::tie(p.kind, p.cell), std::tie(c.kind, c.cell));
  }
}

TEST(RunExperiment, MissingDatasetIsRecordedNotThrown) {
  ExperimentConfig cfg = base_config({"SYN1", "NOPE"});
  cfg.regimes = {Regime::kAll};
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  ASSERT_EQ(rep.runs.size(), 2u);
  EXPECT_FALSE(rep.runs[0].ok);
  EXPECT_NE(rep.runs[0].error.find("NOPE"), std::string::npos);
  EXPECT_TRUE(rep.runs[1].ok);
}

TEST(Transfer, SourceEqualToTargetIsRejected) {
  const ExperimentConfig cfg = base_config({"SYN1"});
  EXPECT_THROW(cross_cell_transfer(cfg, synthetic_tables(), {"SYN1", {"SYN1"}, Regime::kPcc, 3, 70}),
               PreconditionError);
}

TEST(Transfer, UsesSourceSelection) {
  ExperimentConfig cfg = base_config({"SYN1", "SYN2"});
  const ExperimentReport rep =
      cross_cell_transfer(cfg, synthetic_tables(), {"SYN1", {"SYN2", "SYN3"}, Regime::kPcc, 3, 70});
  ASSERT_EQ(rep.runs.size(), 2u);
  const auto& sel = rep.selections.at("SYN1/pcc/70");
  std::vector<std::size_t> expected(sel.ranks.begin(), sel.ranks.begin() + 3);
  std::sort(expected.begin(), expected.end());
  for (const auto& r : rep.runs) {
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.source, "SYN1");
    EXPECT_EQ(r.features, expected);
    EXPECT_EQ(r.leakage_ok, true);
  }
}

TEST(Transfer, FullSubsetMatchesTheAllFeaturesRun) {
  ExperimentConfig cfg = base_config({"SYN1", "SYN2"});
  const ExperimentReport transfer =
      cross_cell_transfer(cfg, synthetic_tables(), {"SYN1", {"SYN2"}, Regime::kShap, 20, 70});
  cfg.regimes = {Regime::kAll};
  const ExperimentReport direct = training_cycle_sweep(cfg, synthetic_tables(), "SYN2",
                                                       std::vector<int>{70},
                                                       std::vector<Regime>{Regime::kAll}, 0);
  ASSERT_TRUE(transfer.runs[0].ok);
  ASSERT_TRUE(direct.runs[0].ok);
  EXPECT_EQ(transfer.runs[0].predicted, direct.runs[0].predicted);
  EXPECT_EQ(transfer.runs[0].rmse, direct.runs[0].rmse);
}

TEST(Sweep, TwelveRunsAndGrowingWindowCounts) {
  const ExperimentConfig cfg = base_config({"SYN3"});
  const std::vector<int> tes{70, 50, 40, 30};
  const std::vector<Regime> regimes{Regime::kAll, Regime::kPcc, Regime::kShap};
  const ExperimentReport rep = training_cycle_sweep(cfg, synthetic_tables(), "SYN3", tes, regimes, 3);
  ASSERT_EQ(rep.runs.size(), 12u);
  std::map<Regime, std::map<int, std::size_t>> windows;
  for (const auto& r : rep.runs) {
    ASSERT_TRUE(r.ok) << r.id() << ": " << r.error;
    windows[r.regime][r.train_end] = r.train_windows;
  }
  for (auto& [regime, by_te] : windows) {
    EXPECT_LT(by_te[30], by_te[40]);
    EXPECT_LT(by_te[40], by_te[50]);
    EXPECT_LT(by_te[50], by_te[70]);
  }
}

TEST(Sweep, TooShortTrainingRunErrorsAndSweepContinues) {
  const ExperimentConfig cfg = base_config({"SYN1"});
  const std::vector<int> tes{10, 40};
  const std::vector<Regime> regimes{Regime::kAll};
  const ExperimentReport rep = training_cycle_sweep(cfg, synthetic_tables(), "SYN1", tes, regimes, 3);
  ASSERT_EQ(rep.runs.size(), 2u);
  EXPECT_FALSE(rep.runs[0].ok);
  EXPECT_NE(rep.runs[0].error.find("minimum length"), std::string::npos) << rep.runs[0].error;
  EXPECT_TRUE(rep.runs[1].ok);
}

TEST(PlotData, FilesSchemasAndManifest) {
  ExperimentConfig cfg = base_config({"SYN1", "SYN2"});
  cfg.ks = {2, 3};
  cfg.train_ends = {50, 70};
  cfg.transfers.push_back({"SYN2", {"SYN1"}, Regime::kShap, 3, 70});
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  const fs::path dir = scratch_dir("plotdata");
  const auto files = emit_plot_data(rep, dir);

  const std::set<std::string> names(files.begin(), files.end());
  for (const char* f : {"report.json", "soh_SYN1.csv", "pcc_SYN1.csv", "shap_SYN2.csv",
                        "rmse_vs_k.csv", "transfer.csv", "rmse_vs_train_end.csv",
                        "manifest.json"}) {
    EXPECT_TRUE(names.count(f)) << f;
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }

  const auto soh_csv = read_lines(dir / "soh_SYN1.csv");
  EXPECT_EQ(soh_csv.front(), "cycle,actual_soh,predicted_soh");
  EXPECT_EQ(soh_csv.size(), 121u);
  const auto shap_csv = read_lines(dir / "shap_SYN1.csv");
  EXPECT_EQ(shap_csv.front(), "feature_id,mean_abs_shap");
  EXPECT_EQ(shap_csv.size(), 21u);
  EXPECT_EQ(read_lines(dir / "transfer.csv").size(), 2u);

  std::ifstream mf(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(mf);
  EXPECT_EQ(manifest["config_hash"], rep.config_hash);
  std::set<std::string> listed;
  for (const auto& f : manifest["files"]) {
    EXPECT_EQ(f["config_hash"], rep.config_hash);
    listed.insert(f["path"].get<std::string>());
  }
  for (const auto& f : files) {
    if (f != "manifest.json") {
      EXPECT_TRUE(listed.count(f)) << f;
    }
  }
  fs::remove_all(dir);
}

TEST(PlotData, UnwritableDirectoryNamesThePath) {
  const fs::path dir = scratch_dir("plotdata_blocked");
  const fs::path blocker = dir / "not_a_dir";
  std::ofstream(blocker) << "x";
  ExperimentConfig cfg = base_config({"SYN1"});
  cfg.regimes = {Regime::kAll};
  const ExperimentReport rep = run_experiment(cfg, synthetic_tables());
  try {
    emit_plot_data(rep, blocker / "sub");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("not_a_dir"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(LoadTables, AcceptsTelemetryAndFeatureCsvs) {
  const fs::path dir = scratch_dir("load_tables");
  testkit::SyntheticCellOptions o;
  o.cycles = 25;
  const CellDataset ds = testkit::make_synthetic_cell(o, "CELL");
  save_cell_csv(ds, dir / "CELL.csv");
  const FeatureTable t = extract_feature_table(ds);
  save_feature_csv(t, dir / "CELL_features.csv");

  ExperimentConfig cfg;
  cfg.cells = {{"RAW", "CELL.csv"}, {"FEAT", "CELL_features.csv"}};
  const TableSet tables = load_tables(cfg, dir);
  ASSERT_EQ(tables.size(), 2u);
  EXPECT_EQ(tables.at("RAW").size(), 25u);
  EXPECT_EQ(tables.at("RAW").column(4), tables.at("FEAT").column(4));

  cfg.cells = {{"GONE", "missing.csv"}};
  EXPECT_THROW(load_tables(cfg, dir), IoError);
  fs::remove_all(dir);
}
