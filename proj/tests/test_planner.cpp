#include "radnerlab/planner.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace radnerlab;
using testing_support::brownian_economy;

namespace {

CrraUtility crra(double gamma, double rho = 0.0) {
    CrraUtility u;
    u.gamma = gamma;
    u.rho = rho;
    return u;
}

nlohmann::json two_assets() {
    return nlohmann::json::array({{{"terminal", "1"}}, {{"dividend", "exp(x1)"}, {"terminal", "exp(x1)"}}});
}

// Agents with different risk aversion, so the sharing rule is genuinely nonlinear.
Economy mixed_economy() {
    nlohmann::json agents = nlohmann::json::array();
    agents.push_back({{"gamma", 1}, {"rho", 0.05}, {"entitlement", "0.1"}, {"shares", {1, 0.4}}});
    agents.push_back({{"gamma", 3}, {"rho", 0.02}, {"entitlement", "0.05 + 0.01*cos(x1)"}, {"shares", {0, 0.6}}});
    return load_economy(brownian_economy(agents, two_assets(), -4.0, 4.0));
}

} // namespace

TEST(InverseMarginal, Examples) {
    EXPECT_DOUBLE_EQ(inverse_marginal(crra(2.0), 0.0, 4.0), 0.5);
    EXPECT_DOUBLE_EQ(inverse_marginal(crra(1.0), 0.0, 2.0), 0.5);
    EXPECT_NEAR(inverse_marginal(crra(1.0, 0.1), 10.0, 1.0), std::exp(-1.0), 1e-15);
    EXPECT_THROW(inverse_marginal(crra(1.0), 0.0, 0.0), DomainError);
}

TEST(InverseMarginal, InvertsMarginalUtility) {
    for (double gamma : {0.5, 1.0, 2.0, 7.0}) {
        auto u = crra(gamma, 0.03);
        for (double c : {0.01, 0.3, 1.0, 12.0}) {
            EXPECT_NEAR(inverse_marginal(u, 2.0, u.marginal(2.0, c)), c, 1e-13 * c);
        }
    }
}

TEST(SharingRule, SymmetricLogAgents) {
    std::vector<CrraUtility> u{crra(1.0), crra(1.0)};
    std::vector<double> lambda{1.0, 1.0};
    auto r = sharing_rule(u, lambda, 0.0, 2.0);
    EXPECT_NEAR(r.allocation[0], 1.0, 1e-13);
    EXPECT_NEAR(r.allocation[1], 1.0, 1e-13);
    EXPECT_NEAR(r.mu, 1.0, 1e-13);
}

TEST(SharingRule, LogClosedForm) {
    std::vector<CrraUtility> u{crra(1.0), crra(1.0)};
    std::vector<double> lambda{1.0, 2.0};
    auto r = sharing_rule(u, lambda, 0.0, 3.0);
    EXPECT_NEAR(r.allocation[0], 1.0, 1e-13);
    EXPECT_NEAR(r.allocation[1], 2.0, 1e-13);
    EXPECT_NEAR(r.mu, 1.0, 1e-13);
}

TEST(SharingRule, CrraClosedForm) {
    std::vector<CrraUtility> u{crra(2.0), crra(2.0)};
    std::vector<double> lambda{1.0, 4.0};
    auto r = sharing_rule(u, lambda, 0.0, 3.0);
    EXPECT_NEAR(r.allocation[0], 1.0, 1e-13);
    EXPECT_NEAR(r.allocation[1], 2.0, 1e-13);
    EXPECT_NEAR(r.mu, 1.0, 1e-12);
}

TEST(SharingRule, FeasibleAndFirstOrderForMixedPreferences) {
    std::vector<CrraUtility> u{crra(0.7, 0.1), crra(2.0), crra(5.0, 0.3)};
    std::vector<double> lambda{1.0, 0.2, 30.0};
    for (double agg : {1e-3, 0.1, 1.0, 50.0, 1e4}) {
        auto r = sharing_rule(u, lambda, 0.8, agg);
        double sum = std::accumulate(r.allocation.begin(), r.allocation.end(), 0.0);
        EXPECT_NEAR(sum, agg, 1e-10 * agg);
        for (std::size_t i = 0; i < u.size(); ++i) {
            EXPECT_NEAR(lambda[i] * u[i].marginal(0.8, r.allocation[i]), r.mu, 1e-10 * r.mu);
        }
    }
}

TEST(SharingRule, ScaleInvariance) {
    std::vector<CrraUtility> u{crra(1.0, 0.1), crra(2.5), crra(0.6)};
    std::vector<double> lambda{1.0, 3.0, 0.4};
    std::vector<double> doubled{2.0, 6.0, 0.8};
    for (double agg : {0.05, 1.0, 20.0}) {
        auto a = sharing_rule(u, lambda, 0.5, agg);
        auto b = sharing_rule(u, doubled, 0.5, agg);
        EXPECT_NEAR(b.mu, 2.0 * a.mu, 1e-12 * 2.0 * a.mu);
        for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(b.allocation[i], a.allocation[i], 1e-12 * agg);
    }
}

TEST(SharingRule, AllocationsIncreaseWithAggregate) {
    std::vector<CrraUtility> u{crra(1.0), crra(3.0), crra(0.5, 0.2)};
    std::vector<double> lambda{1.0, 2.0, 0.5};
    std::vector<double> prev(3, 0.0);
    for (double agg = 0.01; agg < 100.0; agg *= 1.3) {
        auto r = sharing_rule(u, lambda, 1.0, agg);
        for (int i = 0; i < 3; ++i) {
            EXPECT_GT(r.allocation[i], prev[i]) << "agg " << agg;
            prev[i] = r.allocation[i];
        }
    }
}

TEST(BudgetResiduals, SingleAgentIsZero) {
    auto econ = testing_support::config_economy("log1.json");
    std::vector<double> lambda{1.0};
    auto r = budget_residuals(econ, lambda, {500, 50, 3});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_NEAR(r[0], 0.0, 1e-14);
}

TEST(BudgetResiduals, SymmetricAgents) {
    nlohmann::json agents = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
        agents.push_back({{"gamma", 2}, {"rho", 0.1}, {"entitlement", "0.05"}, {"shares", {0.5, 0.5}}});
    }
    auto econ = load_economy(brownian_economy(agents, two_assets()));
    std::vector<double> lambda{1.0, 1.0};
    auto r = budget_residuals(econ, lambda, {2000, 50, 3});
    EXPECT_NEAR(r[0], 0.0, 1e-12);
    EXPECT_NEAR(r[1], 0.0, 1e-12);
}

TEST(BudgetResiduals, WalrasLaw) {
    auto econ = mixed_economy();
    BudgetQuadrature quad(econ, {1000, 40, 5});
    for (double l2 : {0.1, 1.0, 4.0, 25.0}) {
        std::vector<double> lambda{1.0, l2};
        auto ev = quad.evaluate(lambda);
        double scale = std::abs(ev.residuals[0]) + ev.wealth[0] + ev.wealth[1];
        EXPECT_NEAR(ev.residuals[0] + ev.residuals[1], 0.0, 1e-12 * scale);
    }
}

TEST(BudgetResiduals, DecreaseInOwnWeight) {
    auto econ = mixed_economy();
    BudgetQuadrature quad(econ, {1000, 40, 5});
    double prev = -std::numeric_limits<double>::infinity();
    for (double l2 : {0.1, 0.5, 2.0, 10.0}) {
        std::vector<double> lambda{1.0, l2};
        double r2 = quad.evaluate(lambda).residuals[1];
        EXPECT_GT(r2, prev);
        prev = r2;
    }
}

namespace {

Grid small_grid(const Economy& econ) {
    return build_grid(econ.region(), {41}, econ.horizon(), 20, econ.diffusion().x0);
}

NegishiOptions quick_negishi() {
    NegishiOptions opt;
    opt.quad = {2000, 50, 3};
    return opt;
}

} // namespace

TEST(Negishi, SingleAgentMarginalUtility) {
    auto econ = testing_support::config_economy("log1.json");
    auto g = small_grid(econ);
    auto eq = negishi_solve(econ, quick_negishi(), g);
    EXPECT_TRUE(eq.converged);
    ASSERT_EQ(eq.lambda.size(), 1u);
    EXPECT_EQ(eq.lambda[0], 1.0);
    for (std::size_t node = 0; node < g.node_count; ++node) {
        auto x = g.coordinates(node);
        for (std::size_t m = 0; m < g.times.size(); ++m) {
            const double t = g.times[m];
            const double psi = std::exp(-0.1 * t) / econ.aggregate().flow(t, x);
            EXPECT_NEAR(eq.psi(m, node), psi, 1e-12 * psi);
        }
        const double lump = std::exp(-0.1) / econ.aggregate().lump(1.0, x);
        EXPECT_NEAR(eq.psi_terminal[node], lump, 1e-12 * lump);
    }
}

TEST(Negishi, IdenticalAgentsSplitEvenly) {
    nlohmann::json agents = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
        agents.push_back({{"gamma", 1}, {"rho", 0.1}, {"entitlement", "0.05"}, {"shares", {0.5, 0.5}}});
    }
    auto econ = load_economy(brownian_economy(agents, two_assets()));
    auto g = small_grid(econ);
    auto eq = negishi_solve(econ, quick_negishi(), g);
    EXPECT_TRUE(eq.converged);
    EXPECT_NEAR(eq.lambda[1], 1.0, 1e-10);
    for (std::size_t node = 0; node < g.node_count; node += 7) {
        EXPECT_NEAR(eq.allocation[0](5, node), eq.allocation[1](5, node), 1e-10 * eq.allocation[0](5, node));
    }
}

TEST(Negishi, ProportionalEndowments) {
    auto econ = testing_support::config_economy("proportional.json");
    auto g = small_grid(econ);
    auto eq = negishi_solve(econ, quick_negishi(), g);
    EXPECT_TRUE(eq.converged);
    EXPECT_NEAR(eq.lambda[1], 7.0 / 3.0, 1e-5);
    for (std::size_t node = 0; node < g.node_count; node += 5) {
        auto x = g.coordinates(node);
        const double eps = econ.aggregate().flow(0.5, x);
        EXPECT_NEAR(eq.allocation[0](10, node), 0.3 * eps, 1e-5 * eps);
        EXPECT_NEAR(eq.allocation[1](10, node), 0.7 * eps, 1e-5 * eps);
    }
}

TEST(Negishi, EquilibriumIsFeasibleAndSatisfiesFirstOrderConditions) {
    auto econ = mixed_economy();
    auto g = small_grid(econ);
    auto eq = negishi_solve(econ, quick_negishi(), g);
    EXPECT_TRUE(eq.converged);
    for (double r : eq.residuals) EXPECT_LT(std::abs(r), 1e-6);
    for (std::size_t node = 0; node < g.node_count; ++node) {
        auto x = g.coordinates(node);
        for (std::size_t m = 0; m < g.times.size(); ++m) {
            const double t = g.times[m];
            const double eps = econ.aggregate().flow(t, x);
            const double psi = eq.psi(m, node);
            ASSERT_GT(psi, 0.0);
            double sum = 0.0;
            for (int i = 0; i < 2; ++i) {
                const double c = eq.allocation[i](m, node);
                sum += c;
                EXPECT_NEAR(eq.lambda[i] * eq.utilities[i].marginal(t, c), psi, 1e-10 * psi);
            }
            EXPECT_NEAR(sum, eps, 1e-10 * eps);
        }
        double lump = 0.0;
        for (int i = 0; i < 2; ++i) lump += eq.allocation_terminal[i][node];
        EXPECT_NEAR(lump, econ.aggregate().lump(1.0, x), 1e-10 * lump);
    }
}
