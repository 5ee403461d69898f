#pragma once

// Pointwise social planner and Negishi weights. For weights lambda the
// planner allocation at aggregate `agg` solves
//     lambda^i u^i_c(t, x^i) = mu,   sum_i x^i = agg,
// and mu is the state price. Negishi weights are the lambda for which every
// agent's Arrow-Debreu budget E int psi (c^i - eps^i) dnu vanishes.

#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace radnerlab {

/// The c with u_c(t, c) = y, i.e. c = (y exp(rho t))^(-1/gamma).
inline double inverse_marginal(const CrraUtility& u, double t, double y) {
    if (!(y > 0.0)) throw DomainError("inverse marginal utility needs y > 0", std::to_string(y));
    return std::exp(-(std::log(y) + u.rho * t) / u.gamma);
}

struct SharingOptions {
    double tolerance = 1e-13;  // |sum x - agg| / agg
    int max_iterations = 200;
};

struct SharingResult {
    std::vector<double> allocation;
    double mu = 0.0;
    int iterations = 0;
};

/// Solves the planner first-order conditions for mu by a bracketed Newton
/// iteration in log mu (bisection whenever Newton leaves the bracket).
/// Writes x^i into `allocation` and returns mu.
inline double sharing_rule_into(std::span<const CrraUtility> u, std::span<const double> lambda, double t,
                                double agg, std::span<double> allocation, const SharingOptions& opt = {},
                                int* iterations = nullptr) {
    if (!(agg > 0.0) || !std::isfinite(agg)) {
        throw DomainError("sharing rule needs a positive aggregate", std::to_string(agg));
    }
    const std::size_t I = u.size();
    if (I == 1) {
        allocation[0] = agg;
        if (iterations) *iterations = 0;
        return lambda[0] * u[0].marginal(t, agg);
    }
    // log x^i(z) = -(z + rho_i t - log lambda_i) / gamma_i with z = log mu
    std::vector<double> shift(I);
    for (std::size_t i = 0; i < I; ++i) {
        if (!(lambda[i] > 0.0)) throw DomainError("Negishi weights must be positive", std::to_string(lambda[i]));
        shift[i] = u[i].rho * t - std::log(lambda[i]);
    }
    auto excess = [&](double z, double& slope) {
        double sum = 0.0;
        slope = 0.0;
        for (std::size_t i = 0; i < I; ++i) {
            double x = std::exp(-(z + shift[i]) / u[i].gamma);
            allocation[i] = x;
            sum += x;
            slope -= x / u[i].gamma;
        }
        return sum - agg;
    };

    // bracket from lambda^i u^i_c(t, agg/I)
    double z_lo = std::numeric_limits<double>::infinity();
    double z_hi = -std::numeric_limits<double>::infinity();
    const double share = agg / static_cast<double>(I);
    for (std::size_t i = 0; i < I; ++i) {
        double z = std::log(lambda[i]) + std::log(u[i].marginal(t, share));
        z_lo = std::min(z_lo, z);
        z_hi = std::max(z_hi, z);
    }
    double slope = 0.0;
    double step = 1.0;
    while (excess(z_lo, slope) < 0.0) z_lo -= (step *= 2.0);
    step = 1.0;
    while (excess(z_hi, slope) > 0.0) z_hi += (step *= 2.0);

    double z = 0.5 * (z_lo + z_hi);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        double f = excess(z, slope);
        if (std::abs(f) <= opt.tolerance * agg) {
            if (iterations) *iterations = it;
            return std::exp(z);
        }
        if (f > 0.0) {
            z_lo = z;
        } else {
            z_hi = z;
        }
        double next = z - f / slope;
        if (!(next > z_lo && next < z_hi)) next = 0.5 * (z_lo + z_hi);
        if (next == z) {
            // bracket exhausted at double resolution
            if (iterations) *iterations = it;
            excess(z, slope);
            return std::exp(z);
        }
        z = next;
    }
    throw ConvergenceError("sharing rule did not converge; log-mu bracket [" + std::to_string(z_lo) + ", " +
                           std::to_string(z_hi) + "]");
}

inline SharingResult sharing_rule(std::span<const CrraUtility> u, std::span<const double> lambda, double t,
                                  double agg, const SharingOptions& opt = {}) {
    SharingResult r;
    r.allocation.resize(u.size());
    r.mu = sharing_rule_into(u, lambda, t, agg, r.allocation, opt, &r.iterations);
    return r;
}

inline SharingResult sharing_rule(const Economy& econ, std::span<const double> lambda, double t, double agg,
                                  const SharingOptions& opt = {}) {
    auto u = econ.utilities();
    return sharing_rule(u, lambda, t, agg, opt);
}

/// Monte Carlo settings for expectations over [0, T] from x0.
struct QuadratureConfig {
    int n_paths = 10000;
    int steps = 200;
    std::uint64_t seed = 1;
};

/// Endowments sampled once on shared paths (common random numbers), so the
/// budget map is a smooth function of lambda.
class BudgetQuadrature {
public:
    BudgetQuadrature(const Economy& econ, const QuadratureConfig& q)
        : utilities_(econ.utilities()), agents_(econ.agent_count()) {
        const int K = econ.dims();
        const double T = econ.horizon();
        const double dt = T / q.steps;
        n_paths_ = q.n_paths;
        const std::size_t per_path = static_cast<std::size_t>(q.steps) + 2;
        nodes_.reserve(per_path * q.n_paths);
        values_.reserve(per_path * q.n_paths * (agents_ + 1));
        for_each_path(econ.diffusion(), econ.diffusion().x0, 0.0, T, q.steps, q.n_paths, q.seed,
                      [&](int, std::span<const double> states) {
                          for (int m = 0; m <= q.steps; ++m) {
                              const double t = T * m / q.steps;
                              auto x = states.subspan(static_cast<std::size_t>(m) * K, K);
                              double w = (m == 0 || m == q.steps) ? 0.5 * dt : dt;
                              nodes_.push_back({t, w});
                              values_.push_back(econ.aggregate().flow(t, x));
                              for (int i = 0; i < agents_; ++i) values_.push_back(econ.individual(i).flow(t, x));
                          }
                          auto x = states.subspan(static_cast<std::size_t>(q.steps) * K, K);
                          nodes_.push_back({T, 1.0});
                          values_.push_back(econ.aggregate().lump(T, x));
                          for (int i = 0; i < agents_; ++i) values_.push_back(econ.individual(i).lump(T, x));
                      });
    }

    struct Evaluation {
        std::vector<double> residuals;  // E int psi (c^i - eps^i) dnu
        std::vector<double> wealth;     // E int psi eps^i dnu
    };

    Evaluation evaluate(std::span<const double> lambda) const {
        Evaluation ev;
        ev.residuals.assign(agents_, 0.0);
        ev.wealth.assign(agents_, 0.0);
        std::vector<double> alloc(agents_);
        const std::size_t stride = static_cast<std::size_t>(agents_) + 1;
        for (std::size_t n = 0; n < nodes_.size(); ++n) {
            const double* v = values_.data() + n * stride;
            double mu = sharing_rule_into(utilities_, lambda, nodes_[n].t, v[0], alloc);
            const double w = nodes_[n].weight * mu;
            for (int i = 0; i < agents_; ++i) {
                ev.residuals[i] += w * (alloc[i] - v[1 + i]);
                ev.wealth[i] += w * v[1 + i];
            }
        }
        for (int i = 0; i < agents_; ++i) {
            ev.residuals[i] /= n_paths_;
            ev.wealth[i] /= n_paths_;
        }
        return ev;
    }

private:
    struct QuadNode {
        double t;
        double weight;
    };
    std::vector<CrraUtility> utilities_;
    int agents_;
    int n_paths_ = 0;
    std::vector<QuadNode> nodes_;
    std::vector<double> values_;  // per node: eps, eps^1..eps^I
};

/// r_i = E int_0^T psi (c^i - eps^i) dnu: trapezoid flow on the path grid plus the lump at T.
inline std::vector<double> budget_residuals(const Economy& econ, std::span<const double> lambda,
                                            const QuadratureConfig& quad) {
    return BudgetQuadrature(econ, quad).evaluate(lambda).residuals;
}

struct NegishiOptions {
    double tolerance = 1e-6;  // max_i |r_i| / E int psi eps^i
    QuadratureConfig quad;
    int max_iterations = 50;
    double fd_step = 1e-6;  // in log lambda
};

/// Arrow-Debreu equilibrium on a grid. psi and allocations are stored for the
/// flow at every time node (the value at t = T is the left limit) and for the
/// lump at T separately.
struct ADEquilibrium {
    std::vector<double> lambda;
    std::vector<CrraUtility> utilities;
    SpaceTimeField psi;
    std::vector<double> psi_terminal;
    std::vector<SpaceTimeField> allocation;
    std::vector<std::vector<double>> allocation_terminal;
    std::vector<double> residuals;  // relative budget residuals at lambda
    bool converged = false;
    int iterations = 0;
    std::vector<int> degenerate_agents;

    /// Sharing rule at these weights (the mu(t, agg), x^i(t, agg) maps).
    SharingResult sharing(double t, double agg) const { return sharing_rule(utilities, lambda, t, agg); }
};

/// Pointwise psi and allocations away from grid nodes.
class StatePrices {
public:
    StatePrices(const Economy& econ, std::span<const double> lambda)
        : econ_(econ), utilities_(econ.utilities()), lambda_(lambda.begin(), lambda.end()),
          alloc_(lambda.size()) {}

    /// Flow psi at (t, x); fills allocation() as a side effect.
    double flow(double t, std::span<const double> x) {
        return sharing_rule_into(utilities_, lambda_, t, econ_.aggregate().flow(t, x), alloc_);
    }

    double lump(std::span<const double> x) {
        const double T = econ_.horizon();
        return sharing_rule_into(utilities_, lambda_, T, econ_.aggregate().lump(T, x), alloc_);
    }

    std::span<const double> allocation() const { return alloc_; }

private:
    const Economy& econ_;
    std::vector<CrraUtility> utilities_;
    std::vector<double> lambda_;
    std::vector<double> alloc_;
};

/// Evaluates psi and c^i at every grid node for the given weights.
inline ADEquilibrium assemble_equilibrium(const Economy& econ, std::span<const double> lambda, const Grid& g) {
    const int I = econ.agent_count();
    ADEquilibrium eq;
    eq.lambda.assign(lambda.begin(), lambda.end());
    eq.utilities = econ.utilities();
    eq.psi = SpaceTimeField::like(g);
    eq.allocation.assign(I, SpaceTimeField::like(g));
    eq.psi_terminal.assign(g.node_count, 0.0);
    eq.allocation_terminal.assign(I, std::vector<double>(g.node_count));
    StatePrices prices(econ, lambda);
    std::vector<double> x(g.dims());
    for (std::size_t node = 0; node < g.node_count; ++node) {
        g.coordinates(node, x);
        for (std::size_t m = 0; m < g.times.size(); ++m) {
            eq.psi(m, node) = prices.flow(g.times[m], x);
            for (int i = 0; i < I; ++i) eq.allocation[i](m, node) = prices.allocation()[i];
        }
        eq.psi_terminal[node] = prices.lump(x);
        for (int i = 0; i < I; ++i) eq.allocation_terminal[i][node] = prices.allocation()[i];
    }
    return eq;
}

/// Damped Newton iteration on log lambda^2..I (lambda^1 = 1) with a
/// finite-difference Jacobian of the relative budget residuals.
inline ADEquilibrium negishi_solve(const Economy& econ, const NegishiOptions& opt, const Grid& g) {
    const int I = econ.agent_count();
    BudgetQuadrature quad(econ, opt.quad);
    std::vector<double> lambda(I, 1.0);

    auto relative = [&](const BudgetQuadrature::Evaluation& ev) {
        std::vector<double> r(I);
        for (int i = 0; i < I; ++i) r[i] = ev.residuals[i] / ev.wealth[i];
        return r;
    };
    auto max_abs = [](const std::vector<double>& r) {
        double m = 0.0;
        for (double v : r) m = std::max(m, std::abs(v));
        return m;
    };

    auto ev = quad.evaluate(lambda);
    std::vector<double> r = relative(ev);
    int iterations = 0;
    bool converged = max_abs(r) <= opt.tolerance;
    const int n = I - 1;
    while (!converged && iterations < opt.max_iterations) {
        ++iterations;
        Eigen::MatrixXd J(n, n);
        Eigen::VectorXd F(n);
        for (int i = 0; i < n; ++i) F[i] = r[i + 1];
        for (int j = 0; j < n; ++j) {
            std::vector<double> bumped = lambda;
            bumped[j + 1] *= std::exp(opt.fd_step);
            auto rb = relative(quad.evaluate(bumped));
            for (int i = 0; i < n; ++i) J(i, j) = (rb[i + 1] - r[i + 1]) / opt.fd_step;
        }
        Eigen::VectorXd dz = J.fullPivLu().solve(-F);
        if (!dz.allFinite()) break;
        // backtrack on the residual norm
        double damping = 1.0;
        bool improved = false;
        for (int k = 0; k < 30; ++k) {
            std::vector<double> trial = lambda;
            for (int j = 0; j < n; ++j) trial[j + 1] *= std::exp(damping * dz[j]);
            auto ev_trial = quad.evaluate(trial);
            auto r_trial = relative(ev_trial);
            if (max_abs(r_trial) < max_abs(r)) {
                lambda = trial;
                ev = ev_trial;
                r = r_trial;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if (!improved) break;
        converged = max_abs(r) <= opt.tolerance;
    }

    ADEquilibrium eq = assemble_equilibrium(econ, lambda, g);
    eq.residuals = r;
    eq.converged = converged;
    eq.iterations = iterations;
    double total = 0.0;
    for (double w : ev.wealth) total += w;
    for (int i = 0; i < I; ++i) {
        if (!(ev.wealth[i] > 1e-12 * total)) eq.degenerate_agents.push_back(i);
    }
    return eq;
}

} // namespace radnerlab
