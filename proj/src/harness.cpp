#include "sohkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "sohkit/error.hpp"
#include "sohkit/ingest.hpp"
#include "sohkit/numfmt.hpp"
#include "sohkit/ridge.hpp"

#ifndef SOHKIT_VERSION
#define SOHKIT_VERSION "dev"
#endif

namespace sohkit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ReferenceRanking {
  const char* cell;
  Regime regime;
  const char* variant;
  std::array<std::size_t, 3> features;  // 0-based
};

// Published top-3 lists, compared against (never asserted).
constexpr ReferenceRanking kReferenceRankings[] = {
    {"B0005", Regime::kPcc, "per-cell", {9, 11, 12}},
    {"B0005", Regime::kPcc, "transfer-text", {1, 9, 10}},
    {"B0006", Regime::kPcc, "per-cell", {2, 17, 19}},
    {"B0007", Regime::kPcc, "per-cell", {6, 7, 17}},
    {"B0018", Regime::kPcc, "per-cell", {6, 7, 19}},
    {"B0005", Regime::kShap, "per-cell", {1, 9, 10}},
    {"B0006", Regime::kShap, "per-cell", {1, 10, 17}},
    {"B0007", Regime::kShap, "per-cell", {1, 10, 17}},
    {"B0018", Regime::kShap, "per-cell", {1, 10, 17}},
};

std::string selection_key(const std::string& cell, Regime regime, int train_end) {
  return cell + "/" + std::string(to_string(regime)) + "/" + std::to_string(train_end);
}

const FeatureTable& table_for(const TableSet& tables, const std::string& cell) {
  const auto it = tables.find(cell);
  if (it == tables.end()) throw PreconditionError("no dataset loaded for cell '" + cell + "'");
  return it->second;
}

std::vector<std::size_t> complete_columns(const FeatureTable& slice) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (slice.size() > 0 && slice.column_complete(i)) out.push_back(i);
  }
  return out;
}

SelectionReport select_on_slice(const ExperimentConfig& cfg, const FeatureTable& table,
                                Regime regime, int train_end) {
  const FeatureTable slice = slice_until(table, train_end);
  if (regime == Regime::kShap) {
    ShapConfig shap;
    shap.seed = cfg.seed;
    shap.n_perm = cfg.shap_n_perm;
    return global_shap_ranking(slice, kFeatureCount, shap);
  }
  return rank_by_pcc(slice, kFeatureCount);
}

// Top k of the ranking, in ascending column order so that a subset is laid
// out the same way whichever ranking produced it.
std::vector<std::size_t> top_k(const SelectionReport& sel, std::size_t k) {
  std::vector<std::size_t> out(sel.ranks.begin(),
                               sel.ranks.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

DLinearModel fit_on_channels(const ExperimentConfig& cfg, const FeatureTable& table,
                             std::span<const std::size_t> channels, int train_end) {
  const auto train = build_training_windows(table, channels, cfg.model.lookback,
                                            cfg.model.horizon, train_end);
  return fit_dlinear(cfg.model, train);
}

std::vector<std::size_t> channels_for(const ExperimentConfig& cfg, const FeatureTable& table,
                                      Regime regime, std::size_t k, int train_end,
                                      const SelectionReport* selection) {
  if (regime == Regime::kAll) return complete_columns(slice_until(table, train_end));
  if (selection) return top_k(*selection, k);
  return top_k(select_on_slice(cfg, table, regime, train_end), k);
}

double pointwise_ridge_rmse(const ExperimentConfig& cfg, const FeatureTable& table,
                            std::span<const std::size_t> channels, int train_end,
                            std::span<const int> test_cycles, std::span<const double> actual) {
  std::vector<std::size_t> train_rows;
  std::map<int, std::size_t> row_of;
  for (std::size_t r = 0; r < table.size(); ++r) {
    row_of[table.rows[r].cycle_index] = r;
    if (table.rows[r].cycle_index <= train_end) train_rows.push_back(r);
  }
  const auto p = static_cast<Eigen::Index>(channels.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(train_rows.size()), p);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(train_rows.size()), 1);
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    for (Eigen::Index c = 0; c < p; ++c) {
      x(static_cast<Eigen::Index>(i), c) =
          table.rows[train_rows[i]].values[channels[static_cast<std::size_t>(c)]];
    }
    y(static_cast<Eigen::Index>(i), 0) = table.soh[train_rows[i]];
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index c = 0; c < p; ++c) {
    if (!(sd(c) > 0.0)) sd(c) = 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - mu).array().rowwise() / sd.array();
  const RidgeFit fit = fit_ridge(z, y, std::max(cfg.model.ridge, 1e-9));

  std::vector<double> pred;
  for (int cycle : test_cycles) {
    const auto& row = table.rows[row_of.at(cycle)];
    double v = fit.bias(0);
    for (Eigen::Index c = 0; c < p; ++c) {
      v += fit.weights(c, 0) * (row.values[channels[static_cast<std::size_t>(c)]] - mu(c)) / sd(c);
    }
    pred.push_back(v);
  }
  const double r = rmse(pred, actual);
  return std::isfinite(r) ? r : kNaN;
}

struct RunContext {
  const ExperimentConfig& cfg;
  const TableSet& tables;
  std::map<std::string, SelectionReport>& selections;

  const SelectionReport& selection(const std::string& cell, Regime regime, int train_end) {
    const std::string key = selection_key(cell, regime, train_end);
    auto it = selections.find(key);
    if (it == selections.end()) {
      it = selections
               .emplace(key, select_on_slice(cfg, table_for(tables, cell), regime, train_end))
               .first;
    }
    return it->second;
  }
};

void execute(RunContext& ctx, RunRecord& run) {
  const ExperimentConfig& cfg = ctx.cfg;
  try {
    const FeatureTable& table = table_for(ctx.tables, run.cell);
    const std::string& select_cell = run.source.empty() ? run.cell : run.source;
    if (run.regime != Regime::kAll && (run.k < 1 || run.k > kFeatureCount)) {
      throw PreconditionError("k must lie in [1, 20], got " + std::to_string(run.k));
    }
    const SelectionReport* sel = nullptr;
    if (run.regime != Regime::kAll) sel = &ctx.selection(select_cell, run.regime, run.train_end);
    run.features = channels_for(cfg, table, run.regime, run.k, run.train_end, sel);
    if (run.regime == Regime::kAll) run.k = run.features.size();

    const WindowSplit split = build_supervised(table, run.features, cfg.model.lookback,
                                               cfg.model.horizon, run.train_end);
    const DLinearModel model = fit_dlinear(cfg.model, split.train);
    run.train_windows = split.train.size();

    const SohSeries forecast = forecast_series(model, split.test);
    std::map<int, double> soh_of;
    for (std::size_t r = 0; r < table.size(); ++r) soh_of[table.rows[r].cycle_index] = table.soh[r];
    for (std::size_t i = 0; i < forecast.size(); ++i) {
      const int cycle = forecast.cycle_index[i];
      if (cycle <= run.train_end || !soh_of.count(cycle)) continue;
      run.cycles.push_back(cycle);
      run.predicted.push_back(forecast.soh[i]);
      run.actual.push_back(soh_of.at(cycle));
    }
    if (run.cycles.empty()) throw PreconditionError("no test cycles after train_end");
    run.rmse = rmse(run.predicted, run.actual);

    double last_train_soh = kNaN;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (table.rows[r].cycle_index <= run.train_end) last_train_soh = table.soh[r];
    }
    const std::vector<double> flat(run.actual.size(), last_train_soh);
    run.persistence_rmse = rmse(flat, run.actual);
    try {
      run.pointwise_ridge_rmse =
          pointwise_ridge_rmse(cfg, table, run.features, run.train_end, run.cycles, run.actual);
    } catch (const Error&) {
      run.pointwise_ridge_rmse = kNaN;
    }

    if (cfg.verify_leakage) {
      // Everything after train_end removed, selection recomputed from scratch.
      const FeatureTable cut = slice_until(table, run.train_end);
      std::vector<std::size_t> channels;
      if (run.regime == Regime::kAll) {
        channels = complete_columns(cut);
      } else {
        const FeatureTable& src = table_for(ctx.tables, select_cell);
        channels = top_k(select_on_slice(cfg, slice_until(src, run.train_end), run.regime,
                                         run.train_end),
                         run.k);
      }
      const DLinearModel refit = fit_on_channels(cfg, cut, channels, run.train_end);
      run.leakage_ok = to_json(refit).dump() == to_json(model).dump();
    }
    run.ok = true;
  } catch (const std::exception& e) {
    run.ok = false;
    run.error = e.what();
    run.cycles.clear();
    run.actual.clear();
    run.predicted.clear();
    run.rmse = kNaN;
  }
}

auto sort_key(const RunRecord& r) {
  return std::make_tuple(r.kind, r.cell, r.source, static_cast<int>(r.regime), r.k, r.train_end);
}

void finish(ExperimentReport& report, const ExperimentConfig& cfg, const TableSet& tables) {
  report.version = SOHKIT_VERSION;
  report.config = cfg;
  report.config_hash = config_hash(cfg);
  std::stable_sort(report.runs.begin(), report.runs.end(),
                   [](const RunRecord& a, const RunRecord& b) { return sort_key(a) < sort_key(b); });
  for (const auto& c : cfg.cells) {
    const auto it = tables.find(c.id);
    if (it == tables.end()) continue;
    SohSeries s;
    s.cycle_index = it->second.cycle_indices();
    s.soh = it->second.soh;
    s.initial_capacity_ah = kNaN;
    report.soh[c.id] = std::move(s);
  }
}

void add_ranking_agreement(ExperimentReport& report) {
  if (report.config.train_ends.empty()) return;
  const auto& tes = report.config.train_ends;
  const int ref_te = std::find(tes.begin(), tes.end(), 70) != tes.end()
                         ? 70
                         : *std::max_element(tes.begin(), tes.end());
  for (const auto& ref : kReferenceRankings) {
    const auto it = report.selections.find(selection_key(ref.cell, ref.regime, ref_te));
    if (it == report.selections.end()) continue;
    RankingAgreement a;
    a.cell = ref.cell;
    a.regime = ref.regime;
    a.variant = ref.variant;
    a.top3.assign(it->second.ranks.begin(), it->second.ranks.begin() + 3);
    a.reference.assign(ref.features.begin(), ref.features.end());
    for (std::size_t f : a.top3) {
      a.overlap += static_cast<std::size_t>(
          std::find(a.reference.begin(), a.reference.end(), f) != a.reference.end());
    }
    report.ranking.push_back(std::move(a));
  }
}

nlohmann::json feature_names(std::span<const std::size_t> ids) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i : ids) out.push_back(feature_name(i));
  return out;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : ""; }

ValidationError config_error(const std::string& what) {
  return ValidationError("experiment config: " + what);
}

void check_model_config(const DLinearConfig& m) {
  if (m.lookback < 1 || m.horizon < 1) throw config_error("lookback and horizon must be >= 1");
  if (m.ma_window < 1 || m.ma_window % 2 == 0 || m.ma_window > m.lookback) {
    throw config_error("ma_window must be odd and within [1, lookback]");
  }
  if (!(m.ridge >= 0.0) || !std::isfinite(m.ridge)) throw config_error("ridge must be >= 0");
}

class FileWriter {
 public:
  explicit FileWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& rel, const std::string& content) {
    const auto path = dir_ / rel;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << content;
    out.close();
    if (!out) throw IoError(path.string() + ": write failed");
    files_.push_back(rel);
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size() || pred.empty()) {
    throw PreconditionError("rmse needs equal non-zero lengths, got " +
                            std::to_string(pred.size()) + " and " + std::to_string(actual.size()));
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kAll: return "all";
    case Regime::kPcc: return "pcc";
    case Regime::kShap: return "shap";
  }
  return "?";
}

std::optional<Regime> parse_regime(std::string_view name) {
  if (name == "all") return Regime::kAll;
  if (name == "pcc") return Regime::kPcc;
  if (name == "shap") return Regime::kShap;
  return std::nullopt;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : cfg.cells) cells.push_back({{"id", c.id}, {"path", c.path}});
  nlohmann::json regimes = nlohmann::json::array();
  for (Regime r : cfg.regimes) regimes.push_back(std::string(to_string(r)));
  nlohmann::json transfers = nlohmann::json::array();
  for (const auto& t : cfg.transfers) {
    transfers.push_back({{"source", t.source},
                         {"targets", t.targets},
                         {"method", std::string(to_string(t.regime))},
                         {"k", t.k},
                         {"train_end", t.train_end}});
  }
  return {
      {"cells", cells},
      {"methods", regimes},
      {"ks", cfg.ks},
      {"train_ends", cfg.train_ends},
      {"model",
       {{"lookback", cfg.model.lookback},
        {"horizon", cfg.model.horizon},
        {"ma_window", cfg.model.ma_window},
        {"ridge", cfg.model.ridge},
        {"individual", cfg.model.individual}}},
      {"seed", cfg.seed},
      {"shap_n_perm", cfg.shap_n_perm},
      {"transfers", transfers},
      {"verify_leakage", cfg.verify_leakage},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"cells", "methods",     "ks",         "train_ends",
                                              "model", "seed",        "shap_n_perm", "transfers",
                                              "verify_leakage"};
  if (!j.is_object()) throw config_error("top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw config_error("unknown key '" + key + "'");
  }
  ExperimentConfig cfg;
  try {
    for (const auto& c : j.at("cells")) {
      cfg.cells.push_back({c.at("id").get<std::string>(), c.at("path").get<std::string>()});
    }
    if (j.contains("methods")) {
      cfg.regimes.clear();
      for (const auto& m : j.at("methods")) {
        const auto r = parse_regime(m.get<std::string>());
        if (!r) throw config_error("unknown method '" + m.get<std::string>() + "'");
        cfg.regimes.push_back(*r);
      }
    }
    if (j.contains("ks")) cfg.ks = j.at("ks").get<std::vector<std::size_t>>();
    if (j.contains("train_ends")) cfg.train_ends = j.at("train_ends").get<std::vector<int>>();
    if (j.contains("model")) {
      const auto& m = j.at("model");
      for (const auto& [key, _] : m.items()) {
        if (key != "lookback" && key != "horizon" && key != "ma_window" && key != "ridge" &&
            key != "individual") {
          throw config_error("unknown model key '" + key + "'");
        }
      }
      cfg.model.lookback = m.value("lookback", cfg.model.lookback);
      cfg.model.horizon = m.value("horizon", cfg.model.horizon);
      cfg.model.ma_window = m.value("ma_window", cfg.model.ma_window);
      cfg.model.ridge = m.value("ridge", cfg.model.ridge);
      cfg.model.individual = m.value("individual", cfg.model.individual);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.shap_n_perm = j.value("shap_n_perm", cfg.shap_n_perm);
    cfg.verify_leakage = j.value("verify_leakage", cfg.verify_leakage);
    if (j.contains("transfers")) {
      for (const auto& t : j.at("transfers")) {
        TransferSpec spec;
        spec.source = t.at("source").get<std::string>();
        spec.targets = t.at("targets").get<std::vector<std::string>>();
        const auto r = parse_regime(t.value("method", std::string("pcc")));
        if (!r || *r == Regime::kAll) throw config_error("transfer method must be pcc or shap");
        spec.regime = *r;
        spec.k = t.value("k", spec.k);
        spec.train_end = t.value("train_end", spec.train_end);
        cfg.transfers.push_back(std::move(spec));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(e.what());
  }
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.cells.empty()) throw config_error("no cells");
  std::set<std::string> ids;
  for (const auto& c : cfg.cells) {
    if (c.id.empty()) throw config_error("cell with empty id");
    if (!ids.insert(c.id).second) throw config_error("duplicate cell '" + c.id + "'");
  }
  check_model_config(cfg.model);
  const int minimum = cfg.model.lookback + cfg.model.horizon;
  auto check_k = [](std::size_t k) {
    if (k < 1 || k > kFeatureCount) {
      throw config_error("k must lie in [1, 20], got " + std::to_string(k));
    }
  };
  auto check_te = [&](int te) {
    if (te < minimum) {
      throw config_error("train_end " + std::to_string(te) + " below minimum length L+H = " +
                         std::to_string(minimum));
    }
  };
  for (std::size_t k : cfg.ks) check_k(k);
  for (int te : cfg.train_ends) check_te(te);
  if (cfg.shap_n_perm < 1) throw config_error("shap_n_perm must be >= 1");
  for (const auto& t : cfg.transfers) {
    if (!ids.count(t.source)) throw config_error("transfer source '" + t.source + "' not a cell");
    for (const auto& target : t.targets) {
      if (!ids.count(target)) throw config_error("transfer target '" + target + "' not a cell");
      if (target == t.source) {
        throw config_error("transfer source and target are both '" + target + "'");
      }
    }
    check_k(t.k);
    check_te(t.train_end);
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TableSet load_tables(const ExperimentConfig& cfg, const std::filesystem::path& base_dir) {
  TableSet tables;
  for (const auto& c : cfg.cells) {
    std::filesystem::path path(c.path);
    if (path.is_relative()) path = base_dir / path;
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open");
    std::string header;
    std::getline(in, header);
    in.close();
    if (header.rfind("cycle_index,F1,", 0) == 0) {
      tables[c.id] = load_feature_csv(path);
    } else {
      tables[c.id] = extract_feature_table(load_cell_csv(path, c.id));
    }
  }
  return tables;
}

std::string RunRecord::id() const {
  std::string s = kind + "_" + cell;
  if (!source.empty()) s += "_from_" + source;
  s += "_" + std::string(to_string(regime));
  if (regime != Regime::kAll) s += "_k" + std::to_string(k);
  s += "_te" + std::to_string(train_end);
  return s;
}

DLinearModel fit_run_model(const ExperimentConfig& cfg, const FeatureTable& table, Regime regime,
                           std::size_t k, int train_end) {
  const auto channels = channels_for(cfg, table, regime, k, train_end, nullptr);
  return fit_on_channels(cfg, table, channels, train_end);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const TableSet& tables) {
  validate(cfg);
  ExperimentReport report;
  RunContext ctx{cfg, tables, report.selections};
  for (const auto& cell : cfg.cells) {
    for (int te : cfg.train_ends) {
      for (Regime regime : cfg.regimes) {
        const std::vector<std::size_t> ks =
            regime == Regime::kAll ? std::vector<std::size_t>{0} : cfg.ks;
        for (std::size_t k : ks) {
          RunRecord run;
          run.kind = "grid";
          run.cell = cell.id;
          run.regime = regime;
          run.k = k;
          run.train_end = te;
          execute(ctx, run);
          report.runs.push_back(std::move(run));
        }
      }
    }
  }
  for (const auto& t : cfg.transfers) {
    for (const auto& target : t.targets) {
      RunRecord run;
      run.kind = "transfer";
      run.cell = target;
      run.source = t.source;
      run.regime = t.regime;
      run.k = t.k;
      run.train_end = t.train_end;
      execute(ctx, run);
      report.runs.push_back(std::move(run));
    }
  }
  finish(report, cfg, tables);
  add_ranking_agreement(report);
  return report;
}

ExperimentReport cross_cell_transfer(const ExperimentConfig& cfg, const TableSet& tables,
                                     const TransferSpec& transfer) {
  for (const auto& target : transfer.targets) {
    if (target == transfer.source) {
      throw PreconditionError("transfer source and target are both '" + target + "'");
    }
  }
  if (transfer.regime == Regime::kAll) {
    throw PreconditionError("transfer needs a selection method (pcc or shap)");
  }
  ExperimentReport report;
  RunContext ctx{cfg, tables, report.selections};
  for (const auto& target : transfer.targets) {
    RunRecord run;
    run.kind = "transfer";
    run.cell = target;
    run.source = transfer.source;
    run.regime = transfer.regime;
    run.k = transfer.k;
    run.train_end = transfer.train_end;
    execute(ctx, run);
    report.runs.push_back(std::move(run));
  }
  ExperimentConfig echo = cfg;
  echo.transfers = {transfer};
  finish(report, echo, tables);
  return report;
}

ExperimentReport training_cycle_sweep(const ExperimentConfig& cfg, const TableSet& tables,
                                      const std::string& cell, std::span<const int> train_ends,
                                      std::span<const Regime> regimes, std::size_t k) {
  ExperimentReport report;
  RunContext ctx{cfg, tables, report.selections};
  for (int te : train_ends) {
    for (Regime regime : regimes) {
      RunRecord run;
      run.kind = "grid";
      run.cell = cell;
      run.regime = regime;
      run.k = regime == Regime::kAll ? 0 : k;
      run.train_end = te;
      execute(ctx, run);
      report.runs.push_back(std::move(run));
    }
  }
  ExperimentConfig echo = cfg;
  echo.train_ends.assign(train_ends.begin(), train_ends.end());
  echo.regimes.assign(regimes.begin(), regimes.end());
  echo.ks = {k};
  echo.transfers.clear();
  finish(report, echo, tables);
  return report;
}

nlohmann::json to_json(const RunRecord& run) {
  nlohmann::json j = {
      {"id", run.id()},
      {"kind", run.kind},
      {"cell", run.cell},
      {"method", std::string(to_string(run.regime))},
      {"k", run.k},
      {"train_end", run.train_end},
      {"status", run.ok ? "ok" : "error"},
  };
  if (!run.source.empty()) j["source"] = run.source;
  if (!run.ok) {
    j["error"] = run.error;
    return j;
  }
  j["features"] = feature_names(run.features);
  j["train_windows"] = run.train_windows;
  j["rmse"] = run.rmse;
  j["baselines"] = {{"persistence_rmse", number_or_null(run.persistence_rmse)},
                    {"pointwise_ridge_rmse", number_or_null(run.pointwise_ridge_rmse)}};
  if (run.leakage_ok) j["leakage_check"] = *run.leakage_ok ? "pass" : "fail";
  j["series"] = {{"cycle", run.cycles}, {"actual", run.actual}, {"predicted", run.predicted}};
  return j;
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  nlohmann::json selections = nlohmann::json::object();
  for (const auto& [key, sel] : report.selections) selections[key] = to_json(sel);
  nlohmann::json soh = nlohmann::json::object();
  for (const auto& [cell, s] : report.soh) {
    soh[cell] = {{"cycle", s.cycle_index}, {"soh", s.soh}};
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& a : report.ranking) {
    ranking.push_back({{"cell", a.cell},
                       {"method", std::string(to_string(a.regime))},
                       {"variant", a.variant},
                       {"top3", feature_names(a.top3)},
                       {"reference", feature_names(a.reference)},
                       {"overlap", a.overlap}});
  }
  return {
      {"version", report.version},
      {"config_hash", report.config_hash},
      {"seed", report.config.seed},
      {"config", to_json(report.config)},
      {"runs", runs},
      {"selections", selections},
      {"soh", soh},
      {"ranking_agreement", ranking},
  };
}

std::vector<std::string> emit_plot_data(const ExperimentReport& report,
                                        const std::filesystem::path& out_dir) {
  FileWriter w(out_dir);
  w.write("report.json", to_json(report).dump(2) + "\n");

  const auto& tes = report.config.train_ends;
  int ref_te = 0;
  if (!tes.empty()) {
    ref_te = std::find(tes.begin(), tes.end(), 70) != tes.end()
                 ? 70
                 : *std::max_element(tes.begin(), tes.end());
  }

  for (const auto& [cell, series] : report.soh) {
    const auto run = std::find_if(report.runs.begin(), report.runs.end(), [&](const RunRecord& r) {
      return r.kind == "grid" && r.cell == cell && r.regime == Regime::kAll &&
             r.train_end == ref_te && r.ok;
    });
    if (run != report.runs.end()) {
      std::map<int, double> pred;
      for (std::size_t i = 0; i < run->cycles.size(); ++i) pred[run->cycles[i]] = run->predicted[i];
      std::ostringstream out;
      out << "cycle,actual_soh,predicted_soh\n";
      for (std::size_t i = 0; i < series.size(); ++i) {
        const int c = series.cycle_index[i];
        out << c << ',' << format_double(series.soh[i]) << ','
            << (pred.count(c) ? format_double(pred.at(c)) : "") << '\n';
      }
      w.write("soh_" + cell + ".csv", out.str());
    }

    for (Regime regime : {Regime::kPcc, Regime::kShap}) {
      const auto sel = report.selections.find(selection_key(cell, regime, ref_te));
      if (sel == report.selections.end()) continue;
      std::ostringstream out;
      out << (regime == Regime::kPcc ? "feature_id,pcc\n" : "feature_id,mean_abs_shap\n");
      for (std::size_t i = 0; i < sel->second.scores.size(); ++i) {
        out << feature_name(i) << ','
            << (sel->second.degenerate[i] ? "" : csv_number(sel->second.scores[i])) << '\n';
      }
      w.write((regime == Regime::kPcc ? "pcc_" : "shap_") + cell + ".csv", out.str());
    }
  }

  std::ostringstream by_k;
  std::ostringstream by_te;
  std::ostringstream transfer;
  by_k << "cell,method,k,train_end,rmse\n";
  by_te << "cell,method,k,train_end,train_windows,rmse\n";
  transfer << "source,target,method,k,train_end,features,rmse\n";
  for (const auto& r : report.runs) {
    const std::string rmse_field = r.ok ? csv_number(r.rmse) : "";
    if (r.kind == "transfer") {
      std::string feats;
      for (std::size_t f : r.features) feats += (feats.empty() ? "" : " ") + feature_name(f);
      transfer << r.source << ',' << r.cell << ',' << to_string(r.regime) << ',' << r.k << ','
               << r.train_end << ',' << feats << ',' << rmse_field << '\n';
    } else {
      if (r.train_end == ref_te) {
        by_k << r.cell << ',' << to_string(r.regime) << ',' << r.k << ',' << r.train_end << ','
             << rmse_field << '\n';
      }
      by_te << r.cell << ',' << to_string(r.regime) << ',' << r.k << ',' << r.train_end << ','
            << r.train_windows << ',' << rmse_field << '\n';
    }
  }
  w.write("rmse_vs_k.csv", by_k.str());
  w.write("transfer.csv", transfer.str());
  w.write("rmse_vs_train_end.csv", by_te.str());

  for (const auto& r : report.runs) {
    if (!r.ok) continue;
    std::ostringstream out;
    out << "cycle,actual_soh,predicted_soh\n";
    for (std::size_t i = 0; i < r.cycles.size(); ++i) {
      out << r.cycles[i] << ',' << format_double(r.actual[i]) << ','
          << format_double(r.predicted[i]) << '\n';
    }
    w.write("predictions/" + r.id() + ".csv", out.str());
  }

  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : w.files()) files.push_back({{"path", f}, {"config_hash", report.config_hash}});
  const nlohmann::json manifest = {{"config_hash", report.config_hash},
                                   {"version", report.version},
                                   {"files", files}};
  w.write("manifest.json", manifest.dump(2) + "\n");
  return w.files();
}

}  // namespace sohkit
