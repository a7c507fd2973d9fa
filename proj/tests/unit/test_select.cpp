#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "shapley_bruteforce.hpp"
#include "sohkit/error.hpp"
#include "sohkit/select.hpp"
#include "table_builders.hpp"

using namespace sohkit;
using sohkit::testkit::make_table;
using sohkit::testkit::random_table;

namespace {

LinearSurrogate manual_surrogate(std::vector<double> w, std::vector<double> mu, double bias = 0.0) {
  LinearSurrogate m;
  m.weights = std::move(w);
  m.background_mean = std::move(mu);
  m.bias = bias;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    m.feature_ids.push_back(i);
    m.center.push_back(0.0);
    m.scale.push_back(1.0);
  }
  return m;
}

}  // namespace

TEST(Pcc, HandValues) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_DOUBLE_EQ(*pearson_correlation(x, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(*pearson_correlation(x, std::vector<double>{3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(
      *pearson_correlation(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8);
}

TEST(Pcc, DegenerateAndMismatchedInputs) {
  EXPECT_FALSE(pearson_correlation(std::vector<double>{5, 5, 5}, std::vector<double>{1, 2, 3}));
  EXPECT_THROW(pearson_correlation(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}),
               PreconditionError);
  EXPECT_THROW(pearson_correlation(std::vector<double>{1}, std::vector<double>{1}),
               PreconditionError);
}

TEST(Pcc, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng() % 50;
    std::vector<double> x(n), y(n), ax(n);
    const double a = u(rng), b = g(rng) * 5.0, sign = (trial % 2) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
      ax[i] = sign * a * x[i] + b;
    }
    const double r = *pearson_correlation(x, y);
    EXPECT_NEAR(*pearson_correlation(y, x), r, 1e-14);
    EXPECT_NEAR(*pearson_correlation(ax, y), sign * r, 1e-12);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(RankByPcc, SelfCorrelatedFeatureRanksFirst) {
  const FeatureTable t = random_table(40, 22, [](const FeatureVector& r) { return r.values[0]; });
  const SelectionReport rep = rank_by_pcc(t, 3);
  EXPECT_EQ(rep.ranks.front(), 0u);
  EXPECT_DOUBLE_EQ(rep.scores[0], 1.0);
  EXPECT_EQ(rep.selected.size(), 3u);
  EXPECT_EQ(rep.ranks.size(), kFeatureCount);
  EXPECT_EQ(rep.rows_used, 40u);
  EXPECT_EQ(rep.last_cycle, 40);
}

TEST(RankByPcc, TiesGoToLowerIndexAndDegenerateColumnsGoLast) {
  FeatureTable t = random_table(30, 23, [](const FeatureVector& r) { return r.values[4]; });
  for (auto& row : t.rows) {
    row.values[9] = row.values[4];  // same |r| as F5
    row.values[1] = 7.0;            // constant
  }
  t.rows[3].status[2] = FeatureStatus::kMissing;
  const SelectionReport rep = rank_by_pcc(t, 2);
  EXPECT_EQ(rep.selected, (std::vector<std::size_t>{4, 9}));
  EXPECT_TRUE(rep.degenerate[1]);
  EXPECT_TRUE(rep.degenerate[2]);
  const auto pos = [&](std::size_t f) {
    return std::find(rep.ranks.begin(), rep.ranks.end(), f) - rep.ranks.begin();
  };
  EXPECT_EQ(pos(1), 18);
  EXPECT_EQ(pos(2), 19);
}

TEST(RankByPcc, KOutOfRangeIsRejected) {
  const FeatureTable t = random_table(10, 24, [](const FeatureVector& r) { return r.values[0]; });
  EXPECT_THROW(rank_by_pcc(t, 0), PreconditionError);
  EXPECT_THROW(rank_by_pcc(t, 21), PreconditionError);
}

TEST(Surrogate, RecoversRealizableTargetWithoutPenalty) {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> g;
  const FeatureTable t = make_table(
      25, [&](std::size_t, std::size_t i) { return i == 0 ? g(rng) : 3.0; },
      [](const FeatureVector& r) { return 2.0 * r.values[0] + 0.1; });
  const LinearSurrogate m = fit_linear_surrogate(t, 0.0);
  ASSERT_EQ(m.feature_ids, std::vector<std::size_t>{0});
  for (std::size_t r = 0; r < t.size(); ++r) {
    EXPECT_NEAR(m.predict(m.standardize(t.rows[r])), t.soh[r], 1e-9);
  }
}

TEST(Surrogate, HugePenaltyPredictsTheMean) {
  const FeatureTable t = random_table(30, 26, [](const FeatureVector& r) { return r.values[3]; });
  const LinearSurrogate m = fit_linear_surrogate(t, 1e12);
  double mean_soh = 0;
  for (double s : t.soh) mean_soh += s;
  mean_soh /= static_cast<double>(t.size());
  for (double w : m.weights) EXPECT_NEAR(w, 0.0, 1e-9);
  EXPECT_NEAR(m.bias, mean_soh, 1e-9);
}

TEST(ShapleyExact, HandValuesAndAxioms) {
  const auto m = manual_surrogate({2.0, -1.0}, {1.0, 1.0});
  const auto phi = shapley_exact_linear(m, std::vector<double>{3.0, 1.0});
  EXPECT_DOUBLE_EQ(phi[0], 4.0);
  EXPECT_DOUBLE_EQ(phi[1], 0.0);
  EXPECT_DOUBLE_EQ(phi[0] + phi[1], m.predict(std::vector<double>{3, 1}) -
                                        m.predict(std::vector<double>{1, 1}));

  const auto dummy = manual_surrogate({0.0, 1.5}, {0.0, 0.0});
  EXPECT_EQ(shapley_exact_linear(dummy, std::vector<double>{9.0, 2.0})[0], 0.0);

  const auto at_mean = shapley_exact_linear(m, std::vector<double>{1.0, 1.0});
  EXPECT_EQ(at_mean[0], 0.0);
  EXPECT_EQ(at_mean[1], 0.0);
  EXPECT_THROW(shapley_exact_linear(m, std::vector<double>{1.0}), PreconditionError);
}

TEST(ShapleyExact, MatchesCoalitionEnumeration) {
  const auto m = manual_surrogate({2.0, -1.0}, {1.0, 1.0});
  const Predictor f = [&](std::span<const double> z) { return m.predict(z); };
  const auto brute = testkit::shapley_brute_force(f, {3.0, 1.0}, {{1.0, 1.0}});
  EXPECT_NEAR(brute[0], 4.0, 1e-12);
  EXPECT_NEAR(brute[1], 0.0, 1e-12);
}

TEST(ShapleyBruteForce, InteractionGameHandValues) {
  // Oracle: tests/oracles/hand_values.py
  const Predictor f = [](std::span<const double> z) { return z[0] * z[1] + z[2]; };
  const auto phi = testkit::shapley_brute_force(f, {2, 3, 5}, {{1, 1, 1}});
  EXPECT_NEAR(phi[0], 2.0, 1e-12);
  EXPECT_NEAR(phi[1], 3.0, 1e-12);
  EXPECT_NEAR(phi[2], 4.0, 1e-12);
}

TEST(ShapleyMc, SinglePermutationIsHandTraceable) {
  const Predictor f = [](std::span<const double> z) { return z[0] * z[1]; };
  const std::vector<double> x{2.0, 3.0};
  const ShapleyEstimate est = shapley_permutation_mc(f, x, {{1.0, 1.0}}, 1, 99);
  const PermutationDraw draw = draw_permutation(99, 0, 2, 1);
  if (draw.order[0] == 0) {
    EXPECT_DOUBLE_EQ(est.phi[0], 1.0);  // f(2,1) - f(1,1)
    EXPECT_DOUBLE_EQ(est.phi[1], 4.0);  // f(2,3) - f(2,1)
  } else {
    EXPECT_DOUBLE_EQ(est.phi[1], 2.0);  // f(1,3) - f(1,1)
    EXPECT_DOUBLE_EQ(est.phi[0], 3.0);  // f(2,3) - f(1,3)
  }
  EXPECT_EQ(est.std_error[0], 0.0);
  EXPECT_DOUBLE_EQ(est.prediction, 6.0);
}

TEST(ShapleyMc, ConstantPredictorGivesZero) {
  const Predictor f = [](std::span<const double>) { return 0.42; };
  for (int n_perm : {1, 5, 50}) {
    const auto est = shapley_permutation_mc(f, std::vector<double>{1, 2, 3},
                                            {{0, 0, 0}, {5, 5, 5}}, n_perm, 1);
    for (double p : est.phi) EXPECT_EQ(p, 0.0);
  }
}

TEST(ShapleyMc, EveryPermutationIsEfficient) {
  const Predictor f = [](std::span<const double> z) {
    return std::sin(z[0]) * z[1] + z[2] * z[2] - z[3];
  };
  std::mt19937_64 rng(27);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> bg(10, std::vector<double>(4));
  for (auto& row : bg)
    for (auto& v : row) v = g(rng);
  const std::vector<double> x{0.3, -1.2, 2.0, 0.5};
  const auto est = shapley_permutation_mc(f, x, bg, 200, 5);
  for (std::size_t p = 0; p < est.permutation_totals.size(); ++p) {
    EXPECT_NEAR(est.permutation_totals[p], est.prediction - est.permutation_baselines[p], 1e-10);
  }
}

TEST(ShapleyMc, ConvergesToCoalitionEnumerationWithBackgroundSet) {
  const Predictor f = [](std::span<const double> z) { return z[0] * z[1] + 0.5 * z[2] - z[0]; };
  std::mt19937_64 rng(28);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> bg(6, std::vector<double>(3));
  for (auto& row : bg)
    for (auto& v : row) v = g(rng);
  const std::vector<double> x{1.5, -0.7, 2.2};
  const auto exact = testkit::shapley_brute_force(f, x, bg);
  const auto est = shapley_permutation_mc(f, x, bg, 4000, 17);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(est.phi[i], exact[i], 4.0 * est.std_error[i] + 1e-12) << "feature " << i;
  }
}

TEST(ShapleyMc, SeedDeterminesTheEstimate) {
  const Predictor f = [](std::span<const double> z) { return z[0] * z[1] + z[2]; };
  const std::vector<std::vector<double>> bg{{0, 0, 0}, {1, 2, 3}, {-1, 0.5, 2}};
  const std::vector<double> x{1, 1, 1};
  const auto a = shapley_permutation_mc(f, x, bg, 30, 7);
  const auto b = shapley_permutation_mc(f, x, bg, 30, 7);
  const auto c = shapley_permutation_mc(f, x, bg, 30, 8);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_NE(a.phi, c.phi);
}

TEST(ShapleyMc, PredictorFailureCarriesContext) {
  const Predictor f = [](std::span<const double> z) {
    if (z[1] > 5.0) throw std::runtime_error("out of domain");
    return z[0];
  };
  try {
    shapley_permutation_mc(f, std::vector<double>{1.0, 9.0}, {{0.0, 0.0}}, 3, 1);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("permutation"), std::string::npos) << msg;
    EXPECT_NE(msg.find("out of domain"), std::string::npos) << msg;
  }
}

TEST(ShapleyMc, BadArgumentsAreRejected) {
  const Predictor f = [](std::span<const double> z) { return z[0]; };
  EXPECT_THROW(shapley_permutation_mc(f, std::vector<double>{1.0}, {{0.0}}, 0, 1),
               PreconditionError);
  EXPECT_THROW(shapley_permutation_mc(f, std::vector<double>{1.0}, {}, 5, 1), PreconditionError);
  EXPECT_THROW(shapley_permutation_mc(f, std::vector<double>{1.0}, {{0.0, 1.0}}, 5, 1),
               PreconditionError);
}

TEST(DrawPermutation, IsAPermutationAndDependsOnlyOnSeedAndIndex) {
  for (std::uint64_t idx = 0; idx < 50; ++idx) {
    const auto a = draw_permutation(3, idx, 7, 11);
    auto sorted = a.order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_LT(a.background_row, 11u);
    const auto b = draw_permutation(3, idx, 7, 11);
    EXPECT_EQ(a.order, b.order);
    EXPECT_EQ(a.background_row, b.background_row);
  }
}

TEST(GlobalShap, SingleInformativeFeatureRanksFirst) {
  const FeatureTable t =
      random_table(50, 29, [](const FeatureVector& r) { return 1.0 - 0.05 * r.values[1]; });
  ShapConfig cfg;
  cfg.n_perm = 50;
  const SelectionReport rep = global_shap_ranking(t, 3, cfg);
  EXPECT_EQ(rep.ranks.front(), 1u);
  EXPECT_EQ(rep.method, SelectionMethod::kShap);
  EXPECT_EQ(rep.config.seed, 42u);
}

TEST(GlobalShap, RowOrderDoesNotChangeTheReport) {
  FeatureTable t = random_table(
      40, 30, [](const FeatureVector& r) { return r.values[0] + 0.5 * r.values[5] - r.values[7]; });
  ShapConfig cfg;
  cfg.n_perm = 40;
  const SelectionReport a = global_shap_ranking(t, 5, cfg);
  FeatureTable shuffled;
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = (i * 17) % order.size();
  for (std::size_t r : order) {
    shuffled.rows.push_back(t.rows[r]);
    shuffled.soh.push_back(t.soh[r]);
  }
  const SelectionReport b = global_shap_ranking(shuffled, 5, cfg);
  EXPECT_EQ(a, b);
}

TEST(GlobalShap, ExactAndSampledAgreeOnTheRanking) {
  const FeatureTable t = random_table(60, 31, [](const FeatureVector& r) {
    return 3.0 * r.values[2] - 2.0 * r.values[11] + r.values[17];
  });
  ShapConfig cfg;
  cfg.n_perm = 300;
  const SelectionReport mc = global_shap_ranking(t, 3, cfg);
  cfg.exact = true;
  const SelectionReport exact = global_shap_ranking(t, 3, cfg);
  EXPECT_EQ(mc.selected, exact.selected);
  EXPECT_EQ(exact.selected, (std::vector<std::size_t>{2, 11, 17}));
}

TEST(SelectionReport, JsonRoundTripAndCsvShape) {
  const FeatureTable t = random_table(20, 32, [](const FeatureVector& r) { return r.values[6]; });
  const SelectionReport rep = rank_by_pcc(t, 4);
  EXPECT_EQ(selection_from_json(nlohmann::json::parse(to_json(rep).dump())), rep);

  std::ostringstream csv;
  write_selection_csv(rep, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "feature_id,score,rank,selected,degenerate");
  int rows = 0, selected = 0;
  while (std::getline(in, line)) {
    ++rows;
    selected += line.ends_with(",1,0") ? 1 : 0;
  }
  EXPECT_EQ(rows, 20);
  EXPECT_EQ(selected, 4);
}

TEST(SelectionReport, MalformedJsonIsParseError) {
  EXPECT_THROW(selection_from_json(nlohmann::json::parse(R"({"method":"pcc"})")), ParseError);
  EXPECT_THROW(selection_from_json(nlohmann::json::parse(R"({"method":"xyz","k":1})")), ParseError);
}
