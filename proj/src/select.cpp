#include "sohkit/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "sohkit/error.hpp"
#include "sohkit/kernels.hpp"
#include "sohkit/numfmt.hpp"
#include "sohkit/ridge.hpp"

namespace sohkit {
namespace {

void check_k(std::size_t k) {
  if (k < 1 || k > kFeatureCount) {
    throw PreconditionError("k must lie in [1, " + std::to_string(kFeatureCount) + "], got " +
                            std::to_string(k));
  }
}

bool is_constant(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *lo == *hi;
}

bool column_usable(const FeatureTable& table, std::size_t feature) {
  if (!table.column_complete(feature)) return false;
  const auto col = table.column(feature);
  return !is_constant(col);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Unbiased draw in [0, n) by rejection; mt19937_64 output is fully specified,
// unlike std::uniform_int_distribution.
std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % bound);
}

FeatureTable sorted_by_cycle(const FeatureTable& table) {
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.rows[a].cycle_index < table.rows[b].cycle_index;
  });
  FeatureTable out;
  for (std::size_t r : order) {
    out.rows.push_back(table.rows[r]);
    out.soh.push_back(table.soh[r]);
  }
  return out;
}

SelectionReport make_report(SelectionMethod method, std::vector<double> scores,
                            std::vector<bool> degenerate, std::size_t k,
                            const FeatureTable& table) {
  SelectionReport report;
  report.method = method;
  report.ranks = rank_by_magnitude(scores, degenerate);
  report.scores = std::move(scores);
  report.degenerate = std::move(degenerate);
  report.k = k;
  report.selected.assign(report.ranks.begin(),
                         report.ranks.begin() + static_cast<std::ptrdiff_t>(k));
  report.rows_used = table.size();
  for (const auto& r : table.rows) report.last_cycle = std::max(report.last_cycle, r.cycle_index);
  return report;
}

}  // namespace

std::string_view to_string(SelectionMethod method) {
  return method == SelectionMethod::kPcc ? "pcc" : "shap";
}

std::optional<SelectionMethod> parse_selection_method(std::string_view name) {
  if (name == "pcc") return SelectionMethod::kPcc;
  if (name == "shap") return SelectionMethod::kShap;
  return std::nullopt;
}

std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw PreconditionError("pearson_correlation needs two arrays of equal length >= 2, got " +
                            std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (is_constant(x) || is_constant(y)) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const auto s = kernels::centered_cross_sums(x, kernels::sum(x) / n, y, kernels::sum(y) / n);
  if (s.sxx <= 0.0 || s.syy <= 0.0) return std::nullopt;
  const double r = s.sxy / std::sqrt(s.sxx * s.syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<std::size_t> rank_by_magnitude(std::span<const double> scores,
                                           const std::vector<bool>& degenerate) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool da = degenerate[a];
    const bool db = degenerate[b];
    if (da != db) return db;
    return std::abs(scores[a]) > std::abs(scores[b]);
  });
  return order;
}

SelectionReport rank_by_pcc(const FeatureTable& table, std::size_t k) {
  check_k(k);
  if (table.size() < 2) {
    throw PreconditionError("rank_by_pcc needs at least 2 rows, got " +
                            std::to_string(table.size()));
  }
  std::vector<double> scores(kFeatureCount, 0.0);
  std::vector<bool> degenerate(kFeatureCount, true);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!table.column_complete(i)) continue;
    const auto col = table.column(i);
    if (const auto r = pearson_correlation(col, table.soh)) {
      scores[i] = *r;
      degenerate[i] = false;
    }
  }
  return make_report(SelectionMethod::kPcc, std::move(scores), std::move(degenerate), k, table);
}

double LinearSurrogate::predict(std::span<const double> z) const {
  return bias + kernels::dot(weights, z);
}

std::vector<double> LinearSurrogate::standardize(const FeatureVector& row) const {
  std::vector<double> z(feature_ids.size());
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    z[j] = (row.values[feature_ids[j]] - center[j]) / scale[j];
  }
  return z;
}

LinearSurrogate fit_linear_surrogate(const FeatureTable& table, double ridge) {
  if (table.size() < 2) {
    throw PreconditionError("fit_linear_surrogate needs at least 2 rows, got " +
                            std::to_string(table.size()));
  }
  LinearSurrogate m;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!column_usable(table, i)) continue;
    const auto col = table.column(i);
    const double mu = mean(col);
    const double sd = std::sqrt(population_variance(col));
    if (!(sd > 0.0)) continue;
    m.feature_ids.push_back(i);
    m.center.push_back(mu);
    m.scale.push_back(sd);
  }

  const auto n = static_cast<Eigen::Index>(table.size());
  const auto d = static_cast<Eigen::Index>(m.feature_ids.size());
  Eigen::MatrixXd z(n, d);
  Eigen::MatrixXd y(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto zr = m.standardize(table.rows[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < d; ++j) z(r, j) = zr[static_cast<std::size_t>(j)];
    y(r, 0) = table.soh[static_cast<std::size_t>(r)];
  }

  const RidgeFit fit = fit_ridge(z, y, ridge);
  m.bias = fit.bias(0);
  m.weights.resize(static_cast<std::size_t>(d));
  m.background_mean.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    m.weights[static_cast<std::size_t>(j)] = fit.weights(j, 0);
    m.background_mean[static_cast<std::size_t>(j)] = z.col(j).mean();
  }
  return m;
}

std::vector<double> shapley_exact_linear(const LinearSurrogate& model, std::span<const double> z) {
  if (z.size() != model.dimension()) {
    throw PreconditionError("instance has " + std::to_string(z.size()) +
                            " values, surrogate expects " + std::to_string(model.dimension()));
  }
  std::vector<double> phi(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    phi[i] = model.weights[i] * (z[i] - model.background_mean[i]);
  }
  return phi;
}

PermutationDraw draw_permutation(std::uint64_t seed, std::uint64_t index, std::size_t n_features,
                                 std::size_t n_background) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  PermutationDraw draw;
  draw.background_row = uniform_below(rng, n_background);
  draw.order.resize(n_features);
  std::iota(draw.order.begin(), draw.order.end(), 0);
  for (std::size_t i = n_features; i > 1; --i) {
    std::swap(draw.order[i - 1], draw.order[uniform_below(rng, i)]);
  }
  return draw;
}

ShapleyEstimate shapley_permutation_mc(const Predictor& f, std::span<const double> x,
                                       const std::vector<std::vector<double>>& background,
                                       int n_perm, std::uint64_t seed) {
  if (n_perm < 1) throw PreconditionError("n_perm must be >= 1, got " + std::to_string(n_perm));
  if (background.empty()) throw PreconditionError("background set is empty");
  const std::size_t d = x.size();
  for (const auto& row : background) {
    if (row.size() != d) {
      throw PreconditionError("background row has " + std::to_string(row.size()) +
                              " values, instance has " + std::to_string(d));
    }
  }

  auto evaluate = [&](std::span<const double> z, int perm, std::ptrdiff_t inserted) {
    double value = 0.0;
    try {
      value = f(z);
    } catch (const std::exception& e) {
      throw Error("predictor failed at permutation " + std::to_string(perm) +
                  (inserted < 0 ? std::string(" on the background row")
                                : " after inserting feature " + std::to_string(inserted)) +
                  ": " + e.what());
    }
    if (!std::isfinite(value)) {
      throw Error("predictor returned a non-finite value at permutation " + std::to_string(perm));
    }
    return value;
  };

  ShapleyEstimate est;
  est.prediction = evaluate(x, -1, -1);
  est.permutation_totals.reserve(static_cast<std::size_t>(n_perm));
  est.permutation_baselines.reserve(static_cast<std::size_t>(n_perm));

  // Welford accumulators per feature.
  std::vector<double> mean_c(d, 0.0);
  std::vector<double> m2_c(d, 0.0);
  std::vector<double> z(d);
  std::vector<double> contrib(d);

  for (int p = 0; p < n_perm; ++p) {
    const PermutationDraw draw =
        draw_permutation(seed, static_cast<std::uint64_t>(p), d, background.size());
    const auto& base = background[draw.background_row];
    std::copy(base.begin(), base.end(), z.begin());
    const double baseline = evaluate(z, p, -1);
    double previous = baseline;
    double total = 0.0;
    for (std::size_t feature : draw.order) {
      z[feature] = x[feature];
      const double current = evaluate(z, p, static_cast<std::ptrdiff_t>(feature));
      contrib[feature] = current - previous;
      total += contrib[feature];
      previous = current;
    }
    est.permutation_totals.push_back(total);
    est.permutation_baselines.push_back(baseline);

    const double count = static_cast<double>(p + 1);
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = contrib[i] - mean_c[i];
      mean_c[i] += delta / count;
      m2_c[i] += delta * (contrib[i] - mean_c[i]);
    }
  }

  est.phi = mean_c;
  est.std_error.assign(d, 0.0);
  if (n_perm > 1) {
    const double n = static_cast<double>(n_perm);
    for (std::size_t i = 0; i < d; ++i) {
      est.std_error[i] = std::sqrt(m2_c[i] / (n - 1.0) / n);
    }
  }
  return est;
}

SelectionReport global_shap_ranking(const FeatureTable& input, std::size_t k,
                                    const ShapConfig& config) {
  check_k(k);
  const FeatureTable table = sorted_by_cycle(input);
  const LinearSurrogate model = fit_linear_surrogate(table, config.ridge);

  std::vector<std::vector<double>> background;
  background.reserve(table.size());
  for (const auto& row : table.rows) background.push_back(model.standardize(row));

  const Predictor f = [&model](std::span<const double> z) { return model.predict(z); };
  const std::size_t d = model.dimension();
  std::vector<double> abs_sum(d, 0.0);
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& z = background[r];
    std::vector<double> phi;
    if (config.exact) {
      phi = shapley_exact_linear(model, z);
    } else {
      const std::uint64_t instance_seed =
          splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(table.rows[r].cycle_index)));
      phi = shapley_permutation_mc(f, z, background, config.n_perm, instance_seed).phi;
    }
    for (std::size_t j = 0; j < d; ++j) abs_sum[j] += std::abs(phi[j]);
  }

  std::vector<double> scores(kFeatureCount, 0.0);
  std::vector<bool> degenerate(kFeatureCount, true);
  for (std::size_t j = 0; j < d; ++j) {
    scores[model.feature_ids[j]] = abs_sum[j] / static_cast<double>(table.size());
    degenerate[model.feature_ids[j]] = false;
  }
  SelectionReport report =
      make_report(SelectionMethod::kShap, std::move(scores), std::move(degenerate), k, table);
  report.config = config;
  return report;
}

nlohmann::json to_json(const SelectionReport& report) {
  nlohmann::json j;
  j["method"] = std::string(to_string(report.method));
  j["k"] = report.k;
  j["config"] = {{"seed", report.config.seed},
                 {"n_perm", report.config.n_perm},
                 {"ridge", report.config.ridge},
                 {"exact", report.config.exact},
                 {"rows_used", report.rows_used},
                 {"last_cycle", report.last_cycle}};
  nlohmann::json scores = nlohmann::json::array();
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    scores.push_back({{"feature", feature_name(i)},
                      {"score", report.scores[i]},
                      {"degenerate", static_cast<bool>(report.degenerate[i])}});
  }
  j["scores"] = std::move(scores);
  nlohmann::json ranks = nlohmann::json::array();
  for (std::size_t i : report.ranks) ranks.push_back(feature_name(i));
  j["ranks"] = std::move(ranks);
  nlohmann::json selected = nlohmann::json::array();
  for (std::size_t i : report.selected) selected.push_back(feature_name(i));
  j["selected"] = std::move(selected);
  return j;
}

SelectionReport selection_from_json(const nlohmann::json& j) {
  auto feature = [](const nlohmann::json& v) {
    const auto idx = feature_index(v.get<std::string>());
    if (!idx) throw ParseError("unknown feature id '" + v.get<std::string>() + "'");
    return *idx;
  };
  try {
    SelectionReport r;
    const auto method = parse_selection_method(j.at("method").get<std::string>());
    if (!method) throw ParseError("unknown selection method");
    r.method = *method;
    r.k = j.at("k").get<std::size_t>();
    const auto& cfg = j.at("config");
    r.config.seed = cfg.at("seed").get<std::uint64_t>();
    r.config.n_perm = cfg.at("n_perm").get<int>();
    r.config.ridge = cfg.at("ridge").get<double>();
    r.config.exact = cfg.at("exact").get<bool>();
    r.rows_used = cfg.at("rows_used").get<std::size_t>();
    r.last_cycle = cfg.at("last_cycle").get<int>();
    for (const auto& s : j.at("scores")) {
      r.scores.push_back(s.at("score").get<double>());
      r.degenerate.push_back(s.at("degenerate").get<bool>());
    }
    for (const auto& v : j.at("ranks")) r.ranks.push_back(feature(v));
    for (const auto& v : j.at("selected")) r.selected.push_back(feature(v));
    if (r.selected.size() != r.k) throw ParseError("selected list does not have k entries");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed selection report: ") + e.what());
  }
}

void write_selection_csv(const SelectionReport& report, std::ostream& out) {
  std::vector<std::size_t> rank_of(report.scores.size(), 0);
  for (std::size_t pos = 0; pos < report.ranks.size(); ++pos) rank_of[report.ranks[pos]] = pos + 1;
  out << "feature_id,score,rank,selected,degenerate\n";
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    const bool chosen =
        std::find(report.selected.begin(), report.selected.end(), i) != report.selected.end();
    out << feature_name(i) << ',' << format_double(report.scores[i]) << ',' << rank_of[i] << ','
        << (chosen ? 1 : 0) << ',' << (report.degenerate[i] ? 1 : 0) << '\n';
  }
}

}  // namespace sohkit
