// sohkit command-line front end.
//
// Exit codes: 0 success, 1 usage or validation failure, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sohkit/dlinear.hpp"
#include "sohkit/error.hpp"
#include "sohkit/features.hpp"
#include "sohkit/harness.hpp"
#include "sohkit/ingest.hpp"
#include "sohkit/numfmt.hpp"
#include "sohkit/select.hpp"

namespace fs = std::filesystem;
using namespace sohkit;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  out.close();
  if (!out) throw IoError(path.string() + ": write failed");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> parse_feature_list(const std::string& list) {
  std::vector<std::size_t> out;
  for (auto field : split_csv_line(list)) {
    const auto idx = feature_index(field);
    if (!idx) throw PreconditionError("--features: unknown feature '" + std::string(field) + "'");
    out.push_back(*idx);
  }
  return out;
}

struct ExtractArgs {
  std::string cell_csv;
  std::string out;
  std::string cell_id;
};

struct SelectArgs {
  std::string features_csv;
  std::string method;
  std::size_t k = 3;
  std::uint64_t seed = kDefaultSeed;
  int train_end = 0;
  int n_perm = 200;
  std::string out;
  std::string csv;
};

struct FitArgs {
  std::string features_csv;
  int train_end = 70;
  std::string features;
  std::string selection;
  std::size_t k = 0;
  DLinearConfig model;
  std::uint64_t seed = kDefaultSeed;
  std::string out;
};

struct PredictArgs {
  std::string model;
  std::string features_csv;
  std::string out;
};

struct ExperimentArgs {
  std::string config;
  std::string out;
  bool no_plots = false;
};

int run_extract(const ExtractArgs& a) {
  const CellDataset ds = load_cell_csv(a.cell_csv, a.cell_id);
  const FeatureTable table = extract_feature_table(ds);
  save_feature_csv(table, a.out);
  std::cout << ds.cell_id << ": " << table.size() << " cycles -> " << a.out << "\n";
  return 0;
}

int run_select(const SelectArgs& a) {
  const auto method = parse_selection_method(a.method);
  if (!method) throw PreconditionError("--method must be pcc or shap, got '" + a.method + "'");
  FeatureTable table = load_feature_csv(a.features_csv);
  if (a.train_end > 0) table = slice_until(table, a.train_end);
  SelectionReport report;
  if (*method == SelectionMethod::kPcc) {
    report = rank_by_pcc(table, a.k);
  } else {
    ShapConfig cfg;
    cfg.seed = a.seed;
    cfg.n_perm = a.n_perm;
    report = global_shap_ranking(table, a.k, cfg);
  }
  report.config.seed = a.seed;
  nlohmann::json j = to_json(report);
  j["seed"] = a.seed;
  j["source"] = fs::path(a.features_csv).filename().string();
  write_text(a.out, j.dump(2) + "\n");
  const std::string csv_path =
      a.csv.empty() ? fs::path(a.out).replace_extension(".csv").string() : a.csv;
  std::ostringstream csv;
  write_selection_csv(report, csv);
  write_text(csv_path, csv.str());

  std::cout << a.method << " top " << a.k << ":";
  for (std::size_t f : report.selected) std::cout << ' ' << feature_name(f);
  std::cout << "\n";
  return 0;
}

int run_fit(const FitArgs& a) {
  const FeatureTable table = load_feature_csv(a.features_csv);
  std::vector<std::size_t> channels;
  if (!a.features.empty()) {
    channels = parse_feature_list(a.features);
  } else if (!a.selection.empty()) {
    const SelectionReport sel = selection_from_json(read_json(a.selection));
    const std::size_t k = a.k > 0 ? a.k : sel.k;
    if (k < 1 || k > sel.ranks.size()) {
      throw PreconditionError("--k " + std::to_string(k) + " outside the selection's ranking");
    }
    channels.assign(sel.ranks.begin(), sel.ranks.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(channels.begin(), channels.end());
  } else {
    const FeatureTable slice = slice_until(table, a.train_end);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (slice.size() > 0 && slice.column_complete(i)) channels.push_back(i);
    }
  }
  const auto train = build_training_windows(table, channels, a.model.lookback, a.model.horizon,
                                            a.train_end);
  const DLinearModel model = fit_dlinear(a.model, train);
  nlohmann::json j = to_json(model);
  j["seed"] = a.seed;
  write_text(a.out, j.dump(2) + "\n");
  std::cout << "fitted on " << train.size() << " windows, " << channels.size()
            << " channels -> " << a.out << "\n";
  return 0;
}

int run_predict(const PredictArgs& a) {
  const DLinearModel model = dlinear_from_json(read_json(a.model));
  const FeatureTable table = load_feature_csv(a.features_csv);
  const SupervisedWindows windows = build_inference_windows(table, model);
  const SohSeries pred = forecast_series(model, windows);

  std::map<int, double> actual;
  for (std::size_t r = 0; r < table.size(); ++r) actual[table.rows[r].cycle_index] = table.soh[r];
  std::ostringstream out;
  out << "cycle,predicted_soh,actual_soh\n";
  std::vector<double> p_test;
  std::vector<double> a_test;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int c = pred.cycle_index[i];
    const auto it = actual.find(c);
    out << c << ',' << format_double(pred.soh[i]) << ','
        << (it != actual.end() ? format_double(it->second) : "") << '\n';
    if (c > model.train_end && it != actual.end()) {
      p_test.push_back(pred.soh[i]);
      a_test.push_back(it->second);
    }
  }
  write_text(a.out, out.str());
  std::cout << pred.size() << " predictions -> " << a.out;
  if (!p_test.empty()) {
    std::cout << " (rmse after cycle " << model.train_end << ": "
              << format_double(rmse(p_test, a_test)) << ")";
  }
  std::cout << "\n";
  return 0;
}

int run_experiment_cmd(const ExperimentArgs& a) {
  const fs::path config_path(a.config);
  const ExperimentConfig cfg = experiment_config_from_json(read_json(config_path));
  const TableSet tables = load_tables(cfg, config_path.parent_path());

  fs::path root = a.out;
  if (root.empty()) {
    const char* env = std::getenv("SOH_RUN_DIR");
    root = env && *env ? fs::path(env) : fs::path("runs");
  }
  const fs::path run_dir = root / config_hash(cfg);

  const ExperimentReport report = run_experiment(cfg, tables);
  if (a.no_plots) {
    write_text(run_dir / "report.json", to_json(report).dump(2) + "\n");
  } else {
    emit_plot_data(report, run_dir);
  }

  std::size_t failed = 0;
  for (const auto& r : report.runs) {
    if (r.ok) {
      std::cout << r.id() << " rmse=" << format_double(r.rmse);
      if (r.leakage_ok) std::cout << " leakage=" << (*r.leakage_ok ? "pass" : "FAIL");
      std::cout << "\n";
    } else {
      ++failed;
      std::cerr << r.id() << " error: " << r.error << "\n";
    }
  }
  for (const auto& g : report.ranking) {
    std::cout << "ranking " << g.cell << " " << to_string(g.regime) << " (" << g.variant
              << "): overlap " << g.overlap << "/3\n";
  }
  std::cout << report.runs.size() << " runs, " << failed << " failed -> " << run_dir.string()
            << "\n";
  return 0;
}

void add_model_options(CLI::App* cmd, DLinearConfig& m) {
  cmd->add_option("--lookback", m.lookback, "Lookback window L")->capture_default_str();
  cmd->add_option("--horizon", m.horizon, "Forecast horizon H")->capture_default_str();
  cmd->add_option("--ma-window", m.ma_window, "Odd moving-average window")->capture_default_str();
  cmd->add_option("--ridge", m.ridge, "Ridge penalty")->capture_default_str();
  cmd->add_flag("--individual", m.individual, "Independent head per feature channel");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery state-of-health toolkit"};
  app.set_version_flag("--version", std::string(SOHKIT_VERSION));
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Per-cycle features from a cell telemetry CSV");
  extract->add_option("cell_csv", ex.cell_csv, "Cell telemetry CSV")->required();
  extract->add_option("-o,--output", ex.out, "Feature CSV to write")->required();
  extract->add_option("--cell-id", ex.cell_id, "Cell id (default: file stem)");

  SelectArgs se;
  auto* select = app.add_subcommand("select", "Rank the 20 features");
  select->add_option("features_csv", se.features_csv, "Feature CSV")->required();
  select->add_option("--method", se.method, "pcc or shap")->required();
  select->add_option("--k", se.k, "Number of features to select")->capture_default_str();
  select->add_option("--seed", se.seed, "Random seed")->capture_default_str();
  select->add_option("--train-end", se.train_end, "Use cycles <= N only (0: all)");
  select->add_option("--n-perm", se.n_perm, "Shapley permutations per row")->capture_default_str();
  select->add_option("-o,--output", se.out, "Report JSON")->required();
  select->add_option("--csv", se.csv, "Report CSV (default: next to the JSON)");

  FitArgs fi;
  auto* fit = app.add_subcommand("fit", "Train a decomposition-linear model");
  fit->add_option("features_csv", fi.features_csv, "Feature CSV")->required();
  fit->add_option("--train-end", fi.train_end, "Last training cycle")->capture_default_str();
  auto* feats = fit->add_option("--features", fi.features, "Comma-separated ids, e.g. F2,F11,F18");
  auto* sel = fit->add_option("--selection", fi.selection, "Selection report JSON");
  feats->excludes(sel);
  fit->add_option("--k", fi.k, "Features taken from --selection (default: its k)");
  fit->add_option("--seed", fi.seed, "Random seed")->capture_default_str();
  add_model_options(fit, fi.model);
  fit->add_option("-o,--output", fi.out, "Model JSON")->required();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Predict SOH for every cycle with a full lookback");
  predict->add_option("model", pr.model, "Model JSON")->required();
  predict->add_option("features_csv", pr.features_csv, "Feature CSV")->required();
  predict->add_option("-o,--output", pr.out, "Prediction CSV")->required();

  ExperimentArgs ea;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment grid from a JSON config");
  experiment->add_option("config", ea.config, "Experiment config JSON")->required();
  experiment->add_option("-o,--output", ea.out,
                         "Output root (default: $SOH_RUN_DIR or ./runs); the run goes in <root>/<config hash>");
  experiment->add_flag("--no-plots", ea.no_plots, "Write report.json only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*extract) return run_extract(ex);
    if (*select) return run_select(se);
    if (*fit) return run_fit(fi);
    if (*predict) return run_predict(pr);
    if (*experiment) return run_experiment_cmd(ea);
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
