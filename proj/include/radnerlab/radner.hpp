#pragma once

// Sequential-trade implementation of the Arrow-Debreu allocation. Values are
// in state-price deflated units, the same units as the asset prices s^k, so
// an agent's financial wealth is W^i = v^i + n^i . s with
//   v^i(t, x) = E[ int_t^T (c^i - eps^i) psi dnu | X_t = x ].

#include "radnerlab/completeness.hpp"
#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"
#include "radnerlab/planner.hpp"
#include "radnerlab/pricing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace radnerlab {

/// Present value of the net trade (c^i - eps^i) of agent i on the grid.
inline SpaceTimeField net_trade_value(const Economy& econ, const ADEquilibrium& eq, int agent, const Grid& g,
                                      double theta = 0.5) {
    const double T = g.horizon();
    const auto& endow = econ.individual(agent);
    SpaceTimeField source = SpaceTimeField::like(g);
    std::vector<double> terminal(g.node_count);
    std::vector<double> x(g.dims());
    for (std::size_t node = 0; node < g.node_count; ++node) {
        g.coordinates(node, x);
        for (std::size_t m = 0; m < g.times.size(); ++m) {
            source(m, node) = (eq.allocation[agent](m, node) - endow.flow(g.times[m], x)) * eq.psi(m, node);
        }
        terminal[node] = (eq.allocation_terminal[agent][node] - endow.lump(T, x)) * eq.psi_terminal[node];
    }
    return solve_feynman_kac(econ.diffusion(), source, terminal, g, theta);
}

/// E[ int_t^T e^i psi dnu | X_t = x ]: the value of agent i's remaining entitlement.
inline SpaceTimeField entitlement_value(const Economy& econ, const ADEquilibrium& eq, int agent, const Grid& g,
                                        double theta = 0.5) {
    const double T = g.horizon();
    const Expr& e = econ.agents()[agent].entitlement;
    const Expr& e_lump = econ.entitlement_lump(agent);
    SpaceTimeField source = SpaceTimeField::like(g);
    std::vector<double> terminal(g.node_count);
    std::vector<double> x(g.dims());
    for (std::size_t node = 0; node < g.node_count; ++node) {
        g.coordinates(node, x);
        for (std::size_t m = 0; m < g.times.size(); ++m) source(m, node) = e(g.times[m], x) * eq.psi(m, node);
        terminal[node] = e_lump(T, x) * eq.psi_terminal[node];
    }
    return solve_feynman_kac(econ.diffusion(), source, terminal, g, theta);
}

/// Solves (Dr sigma)^T theta_risky = sigma^T grad(w), theta_0 = w - sum_k theta_k r^k,
/// with w = value / s0. Returns false when the volatility matrix is singular,
/// judged by |det(diag(1/r) Dr sigma)| / prod row norms(sigma) < singular_tol.
inline bool solve_portfolio(std::span<const double> sigma, std::span<const double> r, std::span<const double> dr,
                            double w, std::span<const double> grad_w, std::span<double> theta,
                            double singular_tol = 1e-12) {
    const int K = static_cast<int>(r.size());
    Eigen::MatrixXd V = volatility_matrix(sigma, r, dr);
    if (!(std::abs(V.determinant()) / dispersion_scale(sigma, K) >= singular_tol)) return false;
    Eigen::MatrixXd A(K, K);
    Eigen::MatrixXd S(K, K);
    Eigen::VectorXd gw(K);
    for (int k = 0; k < K; ++k) {
        gw(k) = grad_w[k];
        for (int l = 0; l < K; ++l) {
            A(k, l) = dr[k * K + l];
            S(k, l) = sigma[k * K + l];
        }
    }
    Eigen::MatrixXd M = (A * S).transpose();
    Eigen::VectorXd risky = M.partialPivLu().solve(S.transpose() * gw);
    double bond = w;
    for (int k = 0; k < K; ++k) {
        theta[k + 1] = risky(k);
        bond -= risky(k) * r[k];
    }
    theta[0] = bond;
    return true;
}

/// Portfolio (K+1 entries) replicating the value field v at grid node (m, node).
inline std::vector<double> replicating_portfolio(const DiffusionSpec& d, const PricingSolution& p,
                                                 const NormalizedPrices& np, const Grid& g, const SpaceTimeField& v,
                                                 std::size_t m, std::size_t node, double singular_tol = 1e-12) {
    const int K = g.dims();
    std::vector<double> ratio(g.node_count);
    for (std::size_t n = 0; n < g.node_count; ++n) ratio[n] = v(m, n) / p.prices[0](m, n);
    std::vector<double> x(K), sigma(K * K), r(K), dr(K * K), grad(K), theta(K + 1);
    g.coordinates(node, x);
    d.dispersion_at(x, sigma);
    for (int k = 0; k < K; ++k) {
        r[k] = np.ratio[k](m, node);
        grad[k] = first_derivative_at(g, ratio, k, node);
        for (int l = 0; l < K; ++l) dr[k * K + l] = np.jacobian[k][l](m, node);
    }
    if (!solve_portfolio(sigma, r, dr, ratio[node], grad, theta, singular_tol)) {
        std::string where = "t=" + detail::format_number(g.times[m]) + " x=(";
        for (int j = 0; j < K; ++j) where += (j ? "," : "") + detail::format_number(x[j]);
        throw SolveError("volatility matrix is singular at node " + where + ")");
    }
    return theta;
}

/// theta[k] fields replicating each value field; NaN marks singular nodes.
struct PortfolioFields {
    std::vector<std::vector<SpaceTimeField>> theta;  // [field][asset]
    std::size_t singular_nodes = 0;
};

inline PortfolioFields portfolio_fields(const DiffusionSpec& d, const PricingSolution& p, const Grid& g,
                                        std::span<const SpaceTimeField> values, double singular_tol = 1e-12) {
    const int K = g.dims();
    const std::size_t F = values.size();
    auto np = normalize_prices(p, g);
    PortfolioFields out;
    out.theta.assign(F, std::vector<SpaceTimeField>(K + 1, SpaceTimeField::like(g)));
    std::vector<double> sigmas(g.node_count * K * K);
    std::vector<double> x(K);
    for (std::size_t node = 0; node < g.node_count; ++node) {
        g.coordinates(node, x);
        d.dispersion_at(x, std::span<double>(sigmas).subspan(node * K * K, K * K));
    }
    std::vector<std::vector<double>> ratio(F, std::vector<double>(g.node_count));
    std::vector<double> r(K), dr(K * K), grad(K), theta(K + 1);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t m = 0; m < g.times.size(); ++m) {
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t n = 0; n < g.node_count; ++n) ratio[f][n] = values[f](m, n) / p.prices[0](m, n);
        }
        for (std::size_t node = 0; node < g.node_count; ++node) {
            std::span<const double> sigma(sigmas.data() + node * K * K, K * K);
            for (int k = 0; k < K; ++k) {
                r[k] = np.ratio[k](m, node);
                for (int l = 0; l < K; ++l) dr[k * K + l] = np.jacobian[k][l](m, node);
            }
            bool singular = false;
            for (std::size_t f = 0; f < F && !singular; ++f) {
                for (int k = 0; k < K; ++k) grad[k] = first_derivative_at(g, ratio[f], k, node);
                if (!solve_portfolio(sigma, r, dr, ratio[f][node], grad, theta, singular_tol)) {
                    singular = true;
                    break;
                }
                for (int k = 0; k <= K; ++k) out.theta[f][k](m, node) = theta[k];
            }
            if (singular) {
                ++out.singular_nodes;
                for (std::size_t f = 0; f < F; ++f) {
                    for (int k = 0; k <= K; ++k) out.theta[f][k](m, node) = nan;
                }
            }
        }
    }
    return out;
}

struct RadnerOptions {
    int n_paths = 2000;
    int steps = 100;
    std::uint64_t seed = 1;
    int sample_paths = 0;          // number of leading paths recorded in full
    double exit_limit = 0.01;      // fraction of paths allowed to leave the region
    double exclusion_limit = 0.001;
    double singular_tol = 1e-12;
};

struct AgentOutcome {
    std::vector<double> rms_error;  // RMS of V - W over valid paths, per step
    double terminal_rms = 0.0;
    double mid_rms = 0.0;
    double max_abs_error = 0.0;
    double initial_gap = 0.0;    // v^i(0, x0): the budget gap left by the weights
    double initial_value = 0.0;  // W^i(0, x0)
    double admissibility_min = std::numeric_limits<double>::infinity();
    double max_share_deviation = 0.0;  // max |theta^i - n^i| seen on paths
};

struct SamplePath {
    std::vector<double> states;  // [step][dim]
    std::vector<double> theta;   // [agent][step][asset]
    std::vector<double> value;   // [agent][step]
    std::vector<double> target;  // [agent][step]
};

struct RadnerOutcome {
    int n_paths = 0;
    int steps = 0;
    std::vector<double> times;
    std::vector<AgentOutcome> agents;
    std::vector<double> clearing_by_step;  // max over paths of |sum theta^i - N|_inf / |N|_inf
    double clearing_max = 0.0;
    double consumption_clearing_max = 0.0;  // on the grid, relative to eps
    std::size_t singular_nodes = 0;
    int exits = 0;
    int excluded = 0;
    int valid_paths = 0;
    bool valid = true;
    std::string invalid_reason;
    std::vector<SamplePath> samples;
};

/// Replicates every agent's wealth along simulated paths and accumulates the
/// discrete budget identity
///   V_{m+1} = V_m + theta_m . (G_{m+1} - G_m) + trapezoid((e^i - c^i) psi) dt,
/// starting from V_0 = W^i(0, x0). Portfolios are computed on grid nodes and
/// interpolated multilinearly to path states.
class RadnerSimulator {
public:
    RadnerSimulator(const Economy& econ, const ADEquilibrium& eq, const PricingSolution& p, const Grid& g,
                    double singular_tol = 1e-12)
        : econ_(econ), eq_(eq), p_(p), g_(g), I_(econ.agent_count()), A_(econ.asset_count()) {
        for (int i = 0; i < I_; ++i) {
            net_.push_back(net_trade_value(econ, eq, i, g, p.theta));
            pv_.push_back(entitlement_value(econ, eq, i, g, p.theta));
        }
        auto pf = portfolio_fields(econ.diffusion(), p, g, net_, singular_tol);
        theta_ = std::move(pf.theta);
        singular_nodes_ = pf.singular_nodes;
        supply_ = econ.supplies();
    }

    const std::vector<SpaceTimeField>& net_values() const { return net_; }
    const std::vector<std::vector<SpaceTimeField>>& portfolios() const { return theta_; }

    RadnerOutcome run(const RadnerOptions& opt) const {
        auto out = prepare(opt.n_paths, opt.steps);
        const auto& d = econ_.diffusion();
        for_each_path(d, d.x0, 0.0, g_.horizon(), opt.steps, opt.n_paths, opt.seed,
                      [&](int p, std::span<const double> states) { visit(out, opt, p, states); });
        return finish(std::move(out), opt);
    }

    RadnerOutcome run(const PathBundle& paths, const RadnerOptions& opt) const {
        RadnerOptions o = opt;
        o.n_paths = paths.n_paths;
        o.steps = paths.steps;
        auto out = prepare(paths.n_paths, paths.steps);
        const std::size_t per = static_cast<std::size_t>(paths.steps + 1) * paths.dims;
        for (int p = 0; p < paths.n_paths; ++p) {
            visit(out, o, p, std::span<const double>(paths.states.data() + per * p, per));
        }
        return finish(std::move(out), o);
    }

private:
    RadnerOutcome prepare(int n_paths, int steps) const {
        RadnerOutcome out;
        out.n_paths = n_paths;
        out.steps = steps;
        for (int m = 0; m <= steps; ++m) out.times.push_back(g_.horizon() * m / steps);
        out.agents.assign(I_, AgentOutcome{});
        for (auto& a : out.agents) a.rms_error.assign(steps + 1, 0.0);
        out.clearing_by_step.assign(steps + 1, 0.0);
        out.singular_nodes = singular_nodes_;
        const auto& x0 = econ_.diffusion().x0;
        for (int i = 0; i < I_; ++i) {
            out.agents[i].initial_gap = interpolate(g_, net_[i], 0.0, x0);
            out.agents[i].initial_value = wealth_target(i, 0.0, x0);
        }
        // consumption clearing at grid nodes
        std::vector<double> x(g_.dims());
        for (std::size_t node = 0; node < g_.node_count; ++node) {
            g_.coordinates(node, x);
            for (std::size_t m = 0; m < g_.times.size(); ++m) {
                double sum = 0.0;
                for (int i = 0; i < I_; ++i) sum += eq_.allocation[i](m, node);
                double eps = econ_.aggregate().flow(g_.times[m], x);
                out.consumption_clearing_max = std::max(out.consumption_clearing_max, std::abs(sum - eps) / eps);
            }
            double sum = 0.0;
            for (int i = 0; i < I_; ++i) sum += eq_.allocation_terminal[i][node];
            double eps = econ_.aggregate().lump(g_.horizon(), x);
            out.consumption_clearing_max = std::max(out.consumption_clearing_max, std::abs(sum - eps) / eps);
        }
        return out;
    }

    double wealth_target(int i, double t, std::span<const double> x) const {
        double w = interpolate(g_, net_[i], t, x);
        for (int k = 0; k < A_; ++k) {
            const double n = econ_.agents()[i].shares[k];
            if (n != 0.0) w += n * interpolate(g_, p_.prices[k], t, x);
        }
        return w;
    }

    void visit(RadnerOutcome& out, const RadnerOptions& opt, int p, std::span<const double> states) const {
        const int K = g_.dims();
        const int M = out.steps;
        const double T = g_.horizon();
        const double dt = T / M;
        StatePrices sp(econ_, eq_.lambda);
        bool exited = false;
        for (int m = 0; m <= M && !exited; ++m) {
            if (!econ_.region().contains(states.subspan(static_cast<std::size_t>(m) * K, K))) exited = true;
        }
        if (exited) ++out.exits;

        // per path buffers, committed only if the path is usable
        std::vector<double> theta(static_cast<std::size_t>(I_) * (M + 1) * A_);
        std::vector<double> value(static_cast<std::size_t>(I_) * (M + 1));
        std::vector<double> target(value.size());
        std::vector<double> margin(value.size());
        std::vector<double> gains(A_), next_gains(A_), acc(A_, 0.0), rate(A_), next_rate(A_);
        std::vector<double> net(I_), next_net(I_);
        std::vector<double> clearing(M + 1);

        auto flows = [&](int m, std::span<const double> x, std::span<double> r, std::span<double> nt) {
            const double t = out.times[m];
            const double psi = sp.flow(t, x);
            r[0] = 0.0;
            for (int k = 1; k < A_; ++k) r[k] = econ_.dividend_flow(k)(t, x) * psi;
            for (int i = 0; i < I_; ++i) {
                nt[i] = (econ_.agents()[i].entitlement(t, x) - sp.allocation()[i]) * psi;
            }
        };

        for (int m = 0; m <= M; ++m) {
            const double t = out.times[m];
            auto x = states.subspan(static_cast<std::size_t>(m) * K, K);
            flows(m, x, next_rate, next_net);
            if (m > 0) {
                for (int k = 0; k < A_; ++k) acc[k] += 0.5 * (rate[k] + next_rate[k]) * dt;
            }
            for (int k = 0; k < A_; ++k) next_gains[k] = interpolate(g_, p_.prices[k], t, x) + acc[k];
            double worst = 0.0;
            std::vector<double> total(A_, 0.0);
            for (int i = 0; i < I_; ++i) {
                const std::size_t at = static_cast<std::size_t>(i) * (M + 1) + m;
                if (m == 0) {
                    value[at] = out.agents[i].initial_value;
                } else {
                    double v = value[at - 1];
                    for (int k = 0; k < A_; ++k) v += theta[(at - 1) * A_ + k] * (next_gains[k] - gains[k]);
                    v += 0.5 * (net[i] + next_net[i]) * dt;
                    value[at] = v;
                }
                target[at] = wealth_target(i, t, x);
                margin[at] = value[at] + interpolate(g_, pv_[i], t, x);
                for (int k = 0; k < A_; ++k) {
                    double th = interpolate(g_, theta_[i][k], t, x);
                    if (!std::isfinite(th)) {
                        ++out.excluded;
                        return;
                    }
                    th += econ_.agents()[i].shares[k];
                    theta[at * A_ + k] = th;
                    total[k] += th;
                }
            }
            double scale = 0.0;
            for (int k = 0; k < A_; ++k) {
                worst = std::max(worst, std::abs(total[k] - supply_[k]));
                scale = std::max(scale, std::abs(supply_[k]));
            }
            clearing[m] = worst / (scale > 0.0 ? scale : 1.0);
            std::swap(gains, next_gains);
            std::swap(rate, next_rate);
            std::swap(net, next_net);
        }

        ++out.valid_paths;
        for (int m = 0; m <= M; ++m) out.clearing_by_step[m] = std::max(out.clearing_by_step[m], clearing[m]);
        for (int i = 0; i < I_; ++i) {
            auto& a = out.agents[i];
            for (int m = 0; m <= M; ++m) {
                const std::size_t at = static_cast<std::size_t>(i) * (M + 1) + m;
                const double err = value[at] - target[at];
                a.rms_error[m] += err * err;
                a.max_abs_error = std::max(a.max_abs_error, std::abs(err));
                a.admissibility_min = std::min(a.admissibility_min, margin[at]);
                for (int k = 0; k < A_; ++k) {
                    a.max_share_deviation = std::max(
                        a.max_share_deviation, std::abs(theta[at * A_ + k] - econ_.agents()[i].shares[k]));
                }
            }
        }
        if (p < opt.sample_paths) {
            SamplePath s;
            s.states.assign(states.begin(), states.end());
            s.theta = std::move(theta);
            s.value = std::move(value);
            s.target = std::move(target);
            out.samples.push_back(std::move(s));
        }
    }

    RadnerOutcome finish(RadnerOutcome out, const RadnerOptions& opt) const {
        const int M = out.steps;
        for (auto& a : out.agents) {
            for (double& v : a.rms_error) v = out.valid_paths > 0 ? std::sqrt(v / out.valid_paths) : 0.0;
            a.terminal_rms = a.rms_error[M];
            a.mid_rms = a.rms_error[M / 2];
        }
        for (double c : out.clearing_by_step) out.clearing_max = std::max(out.clearing_max, c);
        const double n = static_cast<double>(out.n_paths);
        if (out.exits > opt.exit_limit * n) {
            out.valid = false;
            out.invalid_reason = std::to_string(out.exits) + " of " + std::to_string(out.n_paths) +
                                 " paths left the region";
        } else if (out.excluded > opt.exclusion_limit * n) {
            out.valid = false;
            out.invalid_reason = std::to_string(out.excluded) + " paths crossed singular volatility nodes";
        }
        return out;
    }

    const Economy& econ_;
    const ADEquilibrium& eq_;
    const PricingSolution& p_;
    const Grid& g_;
    int I_;
    int A_;
    std::vector<SpaceTimeField> net_;
    std::vector<SpaceTimeField> pv_;
    std::vector<std::vector<SpaceTimeField>> theta_;
    std::size_t singular_nodes_ = 0;
    std::vector<double> supply_;
};

inline RadnerOutcome simulate_radner(const Economy& econ, const ADEquilibrium& eq, const PricingSolution& p,
                                     const Grid& g, const RadnerOptions& opt) {
    return RadnerSimulator(econ, eq, p, g, opt.singular_tol).run(opt);
}

inline RadnerOutcome simulate_radner(const Economy& econ, const ADEquilibrium& eq, const PricingSolution& p,
                                     const Grid& g, const PathBundle& paths, const RadnerOptions& opt = {}) {
    return RadnerSimulator(econ, eq, p, g, opt.singular_tol).run(paths, opt);
}

} // namespace radnerlab
