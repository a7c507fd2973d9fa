#pragma once

// Feature ranking by Pearson correlation with SOH and by Shapley-value
// attribution on a ridge-regularized linear surrogate.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sohkit/features.hpp"

namespace sohkit {

enum class SelectionMethod { kPcc, kShap };

std::string_view to_string(SelectionMethod method);
std::optional<SelectionMethod> parse_selection_method(std::string_view name);

struct ShapConfig {
  std::uint64_t seed = 42;
  int n_perm = 200;
  double ridge = 1e-3;
  // Closed-form attribution instead of permutation sampling.
  bool exact = false;

  bool operator==(const ShapConfig&) const = default;
};

struct SelectionReport {
  SelectionMethod method = SelectionMethod::kPcc;
  std::vector<double> scores;          // PCC: signed r; SHAP: mean |phi|
  std::vector<bool> degenerate;        // constant or incomplete column
  std::vector<std::size_t> ranks;      // feature indices, most important first
  std::vector<std::size_t> selected;   // ranks[0..k)
  std::size_t k = 0;
  ShapConfig config;
  std::size_t rows_used = 0;
  int last_cycle = 0;

  bool operator==(const SelectionReport&) const = default;
};

nlohmann::json to_json(const SelectionReport& report);
SelectionReport selection_from_json(const nlohmann::json& j);
// feature_id,score,rank,selected,degenerate
void write_selection_csv(const SelectionReport& report, std::ostream& out);

// r in [-1, 1]; nullopt when either input is constant.
std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y);

// Descending |score|; ties by ascending index; degenerate entries last.
std::vector<std::size_t> rank_by_magnitude(std::span<const double> scores,
                                           const std::vector<bool>& degenerate);

SelectionReport rank_by_pcc(const FeatureTable& table, std::size_t k);

struct LinearSurrogate {
  std::vector<std::size_t> feature_ids;  // table columns, in input order
  std::vector<double> weights;           // on standardized inputs
  double bias = 0.0;
  std::vector<double> background_mean;   // standardized space
  std::vector<double> center;            // z = (x - center) / scale
  std::vector<double> scale;

  std::size_t dimension() const { return weights.size(); }
  double predict(std::span<const double> z) const;
  std::vector<double> standardize(const FeatureVector& row) const;
};

// Degenerate columns (constant or not computable somewhere) are left out.
LinearSurrogate fit_linear_surrogate(const FeatureTable& table, double ridge);

// phi_i = w_i * (z_i - mu_i); sums to f(z) - f(mu).
std::vector<double> shapley_exact_linear(const LinearSurrogate& model, std::span<const double> z);

using Predictor = std::function<double(std::span<const double>)>;

struct ShapleyEstimate {
  std::vector<double> phi;
  std::vector<double> std_error;
  // Per permutation: sum of marginal contributions and f(background row).
  std::vector<double> permutation_totals;
  std::vector<double> permutation_baselines;
  double prediction = 0.0;  // f(x)
};

struct PermutationDraw {
  std::size_t background_row = 0;
  std::vector<std::size_t> order;
};

// Random stream for permutation `index` depends only on (seed, index).
PermutationDraw draw_permutation(std::uint64_t seed, std::uint64_t index, std::size_t n_features,
                                 std::size_t n_background);

// Features enter in a random order; absent features take the values of one
// background row drawn per permutation.
ShapleyEstimate shapley_permutation_mc(const Predictor& f, std::span<const double> x,
                                       const std::vector<std::vector<double>>& background,
                                       int n_perm, std::uint64_t seed);

// Fits the surrogate on `table` (callers pass the training slice), attributes
// every row against the table itself as background, scores mean |phi|.
SelectionReport global_shap_ranking(const FeatureTable& table, std::size_t k,
                                    const ShapConfig& config);

}  // namespace sohkit
