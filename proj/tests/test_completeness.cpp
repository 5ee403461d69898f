#include "radnerlab/completeness.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace radnerlab;

namespace {

struct Priced {
    Economy econ;
    Grid g;
    ADEquilibrium eq;
    PricingSolution p;

    explicit Priced(Economy e, int nodes = 201, int steps = 100)
        : econ(std::move(e)), g(build_grid(econ.region(), std::vector<int>(econ.dims(), nodes), econ.horizon(), steps,
                                           econ.diffusion().x0)) {
        std::vector<double> lambda(econ.agent_count(), 1.0);
        eq = assemble_equilibrium(econ, lambda, g);
        p = price_all_assets(econ, eq, g);
    }
};

Economy rank_economy(const std::string& terminal, double lo, double hi) {
    auto doc = testing_support::config_json("log1.json");
    doc["assets"][1]["terminal"] = terminal;
    doc["rank_region"] = {{"lo", {lo}}, {"hi", {hi}}};
    return load_economy(doc);
}

} // namespace

TEST(NormalizePrices, DuplicateAssetIsFlat) {
    Priced f(testing_support::config_economy("log1.json"), 81, 20);
    f.p.prices[1] = f.p.prices[0];
    fill_jacobians(f.g, f.p);
    auto np = normalize_prices(f.p, f.g);
    for (double v : np.ratio[0].data) EXPECT_EQ(v, 1.0);
    for (double v : np.jacobian[0][0].data) EXPECT_EQ(v, 0.0);
}

TEST(NormalizePrices, TerminalRatioIsPayoffRatio) {
    Priced f(testing_support::config_economy("log1.json"), 101, 20);
    auto np = normalize_prices(f.p, f.g);
    ASSERT_EQ(np.ratio.size(), 1u);
    for (std::size_t n = 0; n < f.g.node_count; ++n) {
        const double x = f.g.axes[0][n];
        EXPECT_NEAR(np.ratio[0](f.g.time_steps(), n), std::exp(x), 1e-15 * std::exp(x));
    }
}

TEST(NormalizePrices, QuotientRuleGapShrinksWithSpacing) {
    Priced coarse(testing_support::config_economy("log1.json"), 101, 20);
    Priced fine(testing_support::config_economy("log1.json"), 201, 20);
    const double a = normalize_prices(coarse.p, coarse.g).quotient_rule_gap;
    const double b = normalize_prices(fine.p, fine.g).quotient_rule_gap;
    EXPECT_GT(a / b, 3.0) << a << " " << b;
}

TEST(NormalizePrices, RejectsNonpositiveNumeraire) {
    Priced f(testing_support::config_economy("log1.json"), 41, 10);
    f.p.prices[0](3, 7) = 0.0;
    EXPECT_THROW(normalize_prices(f.p, f.g), SolveError);
}

TEST(VolatilityMatrix, Examples) {
    std::vector<double> one{1.0};
    auto v = volatility_matrix(one, std::vector<double>{2.0}, std::vector<double>{2.0});
    EXPECT_EQ(v(0, 0), 1.0);

    std::vector<double> sigma{1.0, 0.5, 0.0, 2.0};
    auto flat = volatility_matrix(sigma, std::vector<double>{1.0, 3.0}, std::vector<double>(4, 0.0));
    EXPECT_EQ(flat.norm(), 0.0);
    EXPECT_EQ(flat.determinant(), 0.0);

    std::vector<double> id{1.0, 0.0, 0.0, 1.0};
    auto ident = volatility_matrix(id, std::vector<double>{1.0, 1.0}, id);
    EXPECT_TRUE(ident.isIdentity());
    EXPECT_EQ(ident.determinant(), 1.0);

    EXPECT_THROW(volatility_matrix(one, std::vector<double>{0.0}, one), SolveError);
}

TEST(VolatilityMatrix, DeterminantFactorizes) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> pos(0.2, 3.0);
    for (int K = 1; K <= 3; ++K) {
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> sigma(K * K), dr(K * K), r(K);
            for (auto& v : sigma) v = u(rng);
            for (auto& v : dr) v = u(rng);
            double prod = 1.0;
            for (auto& v : r) {
                v = pos(rng) * (u(rng) < 0.0 ? -1.0 : 1.0);
                prod *= v;
            }
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> S(sigma.data(), K, K);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> D(dr.data(), K, K);
            const double expected = D.determinant() * S.determinant() / prod;
            const double det = volatility_matrix(sigma, r, dr).determinant();
            ASSERT_NEAR(det, expected, 1e-12 * (1.0 + std::abs(expected)));
        }
    }
}

TEST(VolatilityMatrix, AssetPermutationKeepsAbsoluteDeterminant) {
    std::vector<double> sigma{1.0, 0.2, -0.4, 1.5};
    std::vector<double> r{0.7, 1.9};
    std::vector<double> dr{0.3, -1.1, 2.0, 0.4};
    std::vector<double> r_swapped{r[1], r[0]};
    std::vector<double> dr_swapped{dr[2], dr[3], dr[0], dr[1]};
    const double a = volatility_matrix(sigma, r, dr).determinant();
    const double b = volatility_matrix(sigma, r_swapped, dr_swapped).determinant();
    EXPECT_NEAR(b, -a, 1e-15);
    EXPECT_NEAR(std::abs(b), std::abs(a), 1e-15);
}

TEST(TerminalRank, MonotoneExponential) {
    auto rc = terminal_rank_check(rank_economy("exp(x1)", 0.0, 1.0));
    EXPECT_EQ(rc.min_abs_det, 1.0);
    ASSERT_EQ(rc.argmin.size(), 1u);
    EXPECT_EQ(rc.argmin[0], 0.0);
}

TEST(TerminalRank, ConstantPayoff) {
    EXPECT_EQ(terminal_rank_check(rank_economy("3", 0.0, 1.0)).min_abs_det, 0.0);
}

TEST(TerminalRank, DuplicatedRow) {
    nlohmann::json doc = {
        {"diffusion",
         {{"K", 2},
          {"b", {"0", "0"}},
          {"sigma", nlohmann::json::array({nlohmann::json::array({"1", "0"}), nlohmann::json::array({"0", "1"})})},
          {"x0", {0.0, 0.0}}}},
        {"agents", {{{"gamma", 1}, {"entitlement", "1"}, {"shares", {1, 1, 1}}}}},
        {"assets", {{{"terminal", "1"}}, {{"terminal", "x1 + 5"}}, {{"terminal", "x1 + 5"}}}},
        {"T", 1.0},
        {"region", {{"lo", {-1.0, -1.0}}, {"hi", {1.0, 1.0}}}},
        {"rank_region", {{"lo", {-0.5, -0.5}}, {"hi", {0.5, 0.5}}}}};
    EXPECT_EQ(terminal_rank_check(load_economy(doc)).min_abs_det, 0.0);
}

TEST(TerminalRank, NonpositiveBondPayoffIsAnError) {
    auto doc = testing_support::config_json("log1.json");
    doc["assets"][0]["terminal"] = "x1";
    EXPECT_THROW(terminal_rank_check(load_economy(doc)), Error);
}

TEST(CompletenessReport, Log1IsComplete) {
    Priced f(testing_support::config_economy("log1.json"));
    auto rep = completeness_report(f.econ, f.p, f.g);
    EXPECT_TRUE(rep.complete);
    EXPECT_EQ(rep.verdict(), "COMPLETE-ON-GRID");
    EXPECT_EQ(rep.nodes_below, 0u);
    EXPECT_GT(rep.min_abs_det, 0.0);
    EXPECT_EQ(rep.nodes_checked, (f.g.node_count - 2) * f.g.times.size());
    // at T, with psi folded into both prices, det = Dh sigma / h = 1 for h = exp(x)
    EXPECT_NEAR(rep.terminal_min_scaled_det, 1.0, 1e-3);
    EXPECT_NEAR(rep.terminal_max_scaled_det, 1.0, 1e-3);
    EXPECT_EQ(rep.condition_quantiles.size(), 5u);
}

TEST(CompletenessReport, RedundantAssetIsIncomplete) {
    Priced f(testing_support::config_economy("redundant.json"), 101, 50);
    auto rep = completeness_report(f.econ, f.p, f.g);
    EXPECT_FALSE(rep.complete);
    EXPECT_EQ(rep.verdict(), "INCOMPLETE-ON-GRID");
    EXPECT_EQ(rep.terminal_max_scaled_det, 0.0);
    EXPECT_GT(rep.nodes_below, 0u);
    EXPECT_FALSE(rep.witnesses.empty());
    EXPECT_LE(rep.witnesses.size(), 20u);
    EXPECT_EQ(rep.terminal_rank.min_abs_det, 0.0);
}

TEST(CompletenessReport, InfiniteThresholdFlagsEverything) {
    Priced f(testing_support::config_economy("log1.json"), 61, 20);
    auto rep = completeness_report(f.econ, f.p, f.g, std::numeric_limits<double>::infinity());
    EXPECT_FALSE(rep.complete);
    EXPECT_EQ(rep.nodes_below, rep.nodes_checked);
    EXPECT_EQ(rep.fraction_below, 1.0);
}

TEST(CompletenessReport, TerminalJacobianMatchesSymbolicPayoffRatio) {
    Priced f(testing_support::config_economy("log1.json"), 401, 50);
    auto np = normalize_prices(f.p, f.g);
    const double h = f.g.spacing[0];
    for (std::size_t n = 1; n + 1 < f.g.node_count; ++n) {
        const double x = f.g.axes[0][n];
        if (!f.econ.rank_region().contains(std::vector<double>{x})) continue;
        EXPECT_LE(std::abs(np.jacobian[0][0](f.g.time_steps(), n) - std::exp(x)), 5.0 * h * h);
    }
}
