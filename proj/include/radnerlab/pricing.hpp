#pragma once

#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"
#include "radnerlab/planner.hpp"
#include "radnerlab/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace radnerlab {

struct FeynmanKacOptions {
    double theta = 0.5;
    bool rannacher = true;  // first interval as two implicit Euler half steps
    double blowup_factor = 1e8;
};

/// Solves  ds/dt + L s + m = 0 on [0, T) x box,  s(T, .) = terminal,
/// backward in time with a Douglas ADI theta-scheme. For K = 1 this is the
/// plain theta-scheme (Crank-Nicolson at theta = 1/2). Mixed derivatives are
/// explicit. Lateral boundaries use the zero-second-derivative closure: the
/// diffusion term vanishes there and the drift uses the one-sided difference.
class FeynmanKacSolver {
public:
    FeynmanKacSolver(const GeneratorCoefficients& c, const Grid& g) : c_(c), g_(g) {
        const int K = g.dims();
        lower_.assign(K, std::vector<double>(g.node_count));
        diag_.assign(K, std::vector<double>(g.node_count));
        upper_.assign(K, std::vector<double>(g.node_count));
        for (int j = 0; j < K; ++j) {
            const double h = g.spacing[j];
            const std::size_t n = g.size(j);
            for (std::size_t node = 0; node < g.node_count; ++node) {
                const std::size_t i = g.index(node, j);
                const double b = c.b(node, j);
                if (i == 0) {
                    lower_[j][node] = 0.0;
                    diag_[j][node] = -b / h;
                    upper_[j][node] = b / h;
                } else if (i + 1 == n) {
                    lower_[j][node] = -b / h;
                    diag_[j][node] = b / h;
                    upper_[j][node] = 0.0;
                } else {
                    const double a = c.a(node, j, j);
                    lower_[j][node] = 0.5 * a / (h * h) - 0.5 * b / h;
                    diag_[j][node] = -a / (h * h);
                    upper_[j][node] = 0.5 * a / (h * h) + 0.5 * b / h;
                }
            }
        }
        for (int i = 0; i < K; ++i) {
            for (int j = i + 1; j < K; ++j) {
                for (std::size_t node = 0; node < g.node_count; ++node) {
                    if (c.a(node, i, j) != 0.0) {
                        mixed_pairs_.push_back({i, j});
                        break;
                    }
                }
            }
        }
    }

    SpaceTimeField solve(const SpaceTimeField& source, std::span<const double> terminal,
                         const FeynmanKacOptions& opt = {}) {
        if (!(opt.theta >= 0.0 && opt.theta <= 1.0)) throw ConfigError("theta must lie in [0, 1]");
        const std::size_t M = g_.time_steps();
        const std::size_t N = g_.node_count;
        if (terminal.size() != N || source.nodes != N || source.time_nodes != M + 1) {
            throw ConfigError("Feynman-Kac data do not match the grid");
        }
        double scale = 1.0;
        for (double v : terminal) scale = std::max(scale, std::abs(v));
        double src = 0.0;
        for (double v : source.data) {
            if (!std::isfinite(v)) throw SolveError("source is not finite on the grid");
            src = std::max(src, std::abs(v));
        }
        scale += g_.horizon() * src;
        const double limit = opt.blowup_factor * scale;

        SpaceTimeField s = SpaceTimeField::like(g_);
        std::copy(terminal.begin(), terminal.end(), s.at(M).begin());
        std::vector<double> mid(N);
        for (std::size_t m = M; m-- > 0;) {
            const double dt = g_.times[m + 1] - g_.times[m];
            if (m + 1 == M && opt.rannacher && opt.theta < 1.0) {
                std::vector<double> half(N);
                for (std::size_t n = 0; n < N; ++n) mid[n] = 0.5 * (source(m + 1, n) + source(m, n));
                step(s.at(M), source.at(M), mid, 0.5 * dt, 1.0, half);
                step(half, mid, source.at(m), 0.5 * dt, 1.0, s.at(m));
            } else {
                step(s.at(m + 1), source.at(m + 1), source.at(m), dt, opt.theta, s.at(m));
            }
            for (double v : s.at(m)) {
                if (!std::isfinite(v) || std::abs(v) > limit) {
                    throw SolveError("Feynman-Kac solution exploded at time node " + std::to_string(m));
                }
            }
        }
        return s;
    }

private:
    // A_j u along dimension j (boundary closure included)
    void apply_dim(int j, std::span<const double> u, std::span<double> out) const {
        const std::size_t s = g_.strides[j];
        const std::size_t n = g_.size(j);
        for (std::size_t node = 0; node < g_.node_count; ++node) {
            const std::size_t i = g_.index(node, j);
            double v = diag_[j][node] * u[node];
            if (i > 0) v += lower_[j][node] * u[node - s];
            if (i + 1 < n) v += upper_[j][node] * u[node + s];
            out[node] = v;
        }
    }

    void apply_mixed(std::span<const double> u, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (auto [i, j] : mixed_pairs_) {
            const std::size_t si = g_.strides[i];
            const std::size_t sj = g_.strides[j];
            const double hij = 4.0 * g_.spacing[i] * g_.spacing[j];
            for (std::size_t node = 0; node < g_.node_count; ++node) {
                if (g_.on_boundary(node, i) || g_.on_boundary(node, j)) continue;
                out[node] += c_.a(node, i, j) *
                             (u[node + si + sj] - u[node + si - sj] - u[node - si + sj] + u[node - si - sj]) / hij;
            }
        }
    }

    // (I - coef A_j) y = rhs along every line of dimension j, in place
    void implicit_solve(int j, double coef, std::span<double> rhs) {
        const std::size_t s = g_.strides[j];
        const std::size_t n = g_.size(j);
        lo_.resize(n);
        di_.resize(n);
        up_.resize(n);
        line_.resize(n);
        for (std::size_t start = 0; start < g_.node_count; ++start) {
            if (g_.index(start, j) != 0) continue;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t node = start + i * s;
                lo_[i] = -coef * lower_[j][node];
                di_[i] = 1.0 - coef * diag_[j][node];
                up_[i] = -coef * upper_[j][node];
                line_[i] = rhs[node];
            }
            thomas_.solve(lo_, di_, up_, line_);
            for (std::size_t i = 0; i < n; ++i) rhs[start + i * s] = line_[i];
        }
    }

    // one step from u (later time) to out (earlier time), dt > 0
    void step(std::span<const double> u, std::span<const double> m_later, std::span<const double> m_earlier,
              double dt, double theta, std::span<double> out) {
        const std::size_t N = g_.node_count;
        const int K = g_.dims();
        work_.resize(N);
        std::vector<std::vector<double>> per_dim(K, std::vector<double>(N));
        apply_mixed(u, work_);
        for (int j = 0; j < K; ++j) {
            apply_dim(j, u, per_dim[j]);
            for (std::size_t n = 0; n < N; ++n) work_[n] += per_dim[j][n];
        }
        for (std::size_t n = 0; n < N; ++n) {
            out[n] = u[n] + dt * (work_[n] + (1.0 - theta) * m_later[n] + theta * m_earlier[n]);
        }
        if (theta == 0.0) return;
        for (int j = 0; j < K; ++j) {
            for (std::size_t n = 0; n < N; ++n) out[n] -= theta * dt * per_dim[j][n];
            implicit_solve(j, theta * dt, out);
        }
    }

    const GeneratorCoefficients& c_;
    const Grid& g_;
    std::vector<std::vector<double>> lower_, diag_, upper_;
    std::vector<std::pair<int, int>> mixed_pairs_;
    TridiagonalSolver thomas_;
    std::vector<double> lo_, di_, up_, line_, work_;
};

inline SpaceTimeField solve_feynman_kac(const DiffusionSpec& d, const SpaceTimeField& source,
                                        std::span<const double> terminal, const Grid& g, double theta = 0.5) {
    auto coeffs = generator_coefficients(d, g);
    FeynmanKacOptions opt;
    opt.theta = theta;
    return FeynmanKacSolver(coeffs, g).solve(source, terminal, opt);
}

/// Spatial Jacobian of a space-time field: one field per dimension.
inline std::vector<SpaceTimeField> spatial_gradient(const Grid& g, const SpaceTimeField& f) {
    std::vector<SpaceTimeField> grad(g.dims(), SpaceTimeField::like(g));
    for (int l = 0; l < g.dims(); ++l) {
        for (std::size_t m = 0; m < g.times.size(); ++m) first_derivative(g, f.at(m), l, grad[l].at(m));
    }
    return grad;
}

struct ResidualStats {
    double max_abs = 0.0;
    double rms = 0.0;
};

/// |ds/dt + L s + m| at interior nodes and interior times, centered in time.
inline ResidualStats pde_residual(const GeneratorCoefficients& c, const Grid& g, const SpaceTimeField& s,
                                  const SpaceTimeField& source) {
    ResidualStats r;
    std::size_t count = 0;
    const std::size_t M = g.time_steps();
    for (std::size_t m = 1; m < M; ++m) {
        auto Ls = apply_generator(c, s.at(m), g);
        const double dt2 = g.times[m + 1] - g.times[m - 1];
        for (std::size_t n = 0; n < g.node_count; ++n) {
            if (!g.interior(n)) continue;
            double res = (s(m + 1, n) - s(m - 1, n)) / dt2 + Ls[n] + source(m, n);
            r.max_abs = std::max(r.max_abs, std::abs(res));
            r.rms += res * res;
            ++count;
        }
    }
    if (count > 0) r.rms = std::sqrt(r.rms / static_cast<double>(count));
    return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// E[ int_t^T m(s, X_s) ds + terminal(X_T) | X_t = x ] with trapezoid time integral.
inline McEstimate mc_expectation(const DiffusionSpec& d,
                                 const std::function<double(double, std::span<const double>)>& source,
                                 const std::function<double(std::span<const double>)>& terminal, double t,
                                 std::span<const double> x, double T, int n_paths, int steps, std::uint64_t seed) {
    if (!(t < T)) throw ConfigError("mc_expectation needs t < T");
    const int K = d.dims;
    const double dt = (T - t) / steps;
    double mean = 0.0;
    double m2 = 0.0;
    for_each_path(d, x, t, T, steps, n_paths, seed, [&](int p, std::span<const double> states) {
        double integral = 0.0;
        double prev = source(t, states.subspan(0, K));
        for (int m = 1; m <= steps; ++m) {
            double cur = source(t + (T - t) * m / steps, states.subspan(static_cast<std::size_t>(m) * K, K));
            integral += 0.5 * (prev + cur) * dt;
            prev = cur;
        }
        double value = integral + terminal(states.subspan(static_cast<std::size_t>(steps) * K, K));
        double delta = value - mean;
        mean += delta / (p + 1);
        m2 += delta * (value - mean);
    });
    McEstimate r;
    r.estimate = mean;
    r.std_error = n_paths > 1 ? std::sqrt(m2 / (n_paths - 1) / n_paths) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Equilibrium prices

struct PricingSolution {
    std::vector<SpaceTimeField> prices;                 // s^k, k = 0..K
    std::vector<std::vector<SpaceTimeField>> jacobian;  // [k][l] = ds^k/dx_l
    std::vector<SpaceTimeField> sources;                // m^k = g^k psi on [0, T)
    std::vector<std::vector<double>> terminals;         // g^k(T) psi(T)
    double theta = 0.5;
    std::size_t time_steps = 0;
    std::vector<ResidualStats> residuals;
    double min_price = 0.0;
    double min_numeraire = 0.0;
};

inline void fill_jacobians(const Grid& g, PricingSolution& p) {
    p.jacobian.clear();
    for (const auto& s : p.prices) p.jacobian.push_back(spatial_gradient(g, s));
}

/// Present values s^k(t, x) = E[ int_t^T g^k psi dnu | X_t = x ] of every asset.
inline PricingSolution price_all_assets(const Economy& econ, const ADEquilibrium& eq, const Grid& g,
                                        const FeynmanKacOptions& opt = {}) {
    const int K = econ.dims();
    PricingSolution p;
    p.theta = opt.theta;
    p.time_steps = g.time_steps();
    auto coeffs = generator_coefficients(econ.diffusion(), g);
    FeynmanKacSolver solver(coeffs, g);
    std::vector<double> x(K);
    for (int k = 0; k <= K; ++k) {
        SpaceTimeField source = SpaceTimeField::like(g);
        std::vector<double> terminal(g.node_count);
        for (std::size_t node = 0; node < g.node_count; ++node) {
            g.coordinates(node, x);
            if (k > 0) {
                for (std::size_t m = 0; m < g.times.size(); ++m) {
                    source(m, node) = econ.dividend_flow(k)(g.times[m], x) * eq.psi(m, node);
                }
            }
            terminal[node] = econ.dividend_lump(k)(g.horizon(), x) * eq.psi_terminal[node];
        }
        p.prices.push_back(solver.solve(source, terminal, opt));
        p.residuals.push_back(pde_residual(coeffs, g, p.prices.back(), source));
        p.sources.push_back(std::move(source));
        p.terminals.push_back(std::move(terminal));
    }
    p.min_price = std::numeric_limits<double>::infinity();
    for (const auto& s : p.prices) {
        for (double v : s.data) p.min_price = std::min(p.min_price, v);
    }
    p.min_numeraire = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < g.times.size(); ++m) {
        for (std::size_t node = 0; node < g.node_count; ++node) {
            if (g.interior(node)) p.min_numeraire = std::min(p.min_numeraire, p.prices[0](m, node));
        }
    }
    if (!(p.min_numeraire > 0.0)) {
        throw SolveError("numeraire price s0 is not positive on the grid interior (min " +
                         std::to_string(p.min_numeraire) + ")");
    }
    fill_jacobians(g, p);
    return p;
}

// ---------------------------------------------------------------------------
// Gains processes

struct GainsOptions {
    int n_paths = 10000;
    int steps = 200;
    std::uint64_t seed = 1;
    int record_every = 1;  // record G at every k-th step (T is always recorded)
};

/// G^k_t = s^k(t, X_t) + int_[0,t) m^k(s, X_s) ds sampled at recorded times.
struct GainsSample {
    int n_paths = 0;
    int n_assets = 0;
    std::vector<double> times;
    std::vector<int> steps;          // path step index of each recorded time
    std::vector<double> values;      // [path][record][asset]
    std::vector<double> initial;     // s^k(0, x0) by interpolation

    double value(int path, std::size_t record, int asset) const {
        return values[(static_cast<std::size_t>(path) * times.size() + record) * n_assets + asset];
    }
};

/// `rate(t, x, out)` writes the dividend value flow m^k(t, x) for each asset.
template <class Rate>
GainsSample build_gains(const DiffusionSpec& d, const Grid& g, std::span<const SpaceTimeField> prices, Rate&& rate,
                        const GainsOptions& opt) {
    const int K = d.dims;
    const int A = static_cast<int>(prices.size());
    const double T = g.horizon();
    const double dt = T / opt.steps;
    GainsSample gs;
    gs.n_paths = opt.n_paths;
    gs.n_assets = A;
    for (int m = 0; m <= opt.steps; ++m) {
        if (m % opt.record_every == 0 || m == opt.steps) {
            gs.steps.push_back(m);
            gs.times.push_back(T * m / opt.steps);
        }
    }
    for (int k = 0; k < A; ++k) gs.initial.push_back(interpolate(g, prices[k], 0.0, d.x0));
    gs.values.resize(static_cast<std::size_t>(opt.n_paths) * gs.times.size() * A);
    std::vector<double> prev(A), cur(A), accumulated(A);
    for_each_path(d, d.x0, 0.0, T, opt.steps, opt.n_paths, opt.seed, [&](int p, std::span<const double> states) {
        std::fill(accumulated.begin(), accumulated.end(), 0.0);
        std::size_t rec = 0;
        for (int m = 0; m <= opt.steps; ++m) {
            const double t = T * m / opt.steps;
            auto x = states.subspan(static_cast<std::size_t>(m) * K, K);
            rate(t, x, std::span<double>(cur));
            if (m > 0) {
                for (int k = 0; k < A; ++k) accumulated[k] += 0.5 * (prev[k] + cur[k]) * dt;
            }
            std::swap(prev, cur);
            if (rec < gs.steps.size() && gs.steps[rec] == m) {
                for (int k = 0; k < A; ++k) {
                    gs.values[(static_cast<std::size_t>(p) * gs.times.size() + rec) * A + k] =
                        interpolate(g, prices[k], t, x) + accumulated[k];
                }
                ++rec;
            }
        }
    });
    return gs;
}

/// Gains of the equilibrium prices, m^k = g^k psi evaluated pointwise.
inline GainsSample equilibrium_gains(const Economy& econ, const ADEquilibrium& eq, const PricingSolution& p,
                                     const Grid& g, const GainsOptions& opt) {
    StatePrices sp(econ, eq.lambda);
    const int A = econ.asset_count();
    return build_gains(econ.diffusion(), g, p.prices,
                       [&](double t, std::span<const double> x, std::span<double> out) {
                           const double psi = sp.flow(t, x);
                           out[0] = 0.0;
                           for (int k = 1; k < A; ++k) out[k] = econ.dividend_flow(k)(t, x) * psi;
                       },
                       opt);
}

struct DriftEntry {
    int asset = 0;
    double t1 = 0.0;
    double t2 = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    bool flagged = false;
};

struct DriftReport {
    std::vector<DriftEntry> entries;
    double bias_allowance = 0.0;
    int flags = 0;
};

/// Tests E[G_t2 - G_t1] = 0 for consecutive recorded times and for (0, T).
/// A pair is flagged when |mean| - allowance > 3 stderr (plus a 1e-12 relative rounding floor).
inline DriftReport martingale_drift_test(const GainsSample& gs, double bias_allowance = 0.0) {
    DriftReport r;
    r.bias_allowance = bias_allowance;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i + 1 < gs.times.size(); ++i) pairs.emplace_back(i, i + 1);
    if (gs.times.size() > 2) pairs.emplace_back(0, gs.times.size() - 1);
    for (int k = 0; k < gs.n_assets; ++k) {
        for (auto [a, b] : pairs) {
            double mean = 0.0;
            double m2 = 0.0;
            double scale = 0.0;
            for (int p = 0; p < gs.n_paths; ++p) {
                scale = std::max({scale, std::abs(gs.value(p, a, k)), std::abs(gs.value(p, b, k))});
                double inc = gs.value(p, b, k) - gs.value(p, a, k);
                double delta = inc - mean;
                mean += delta / (p + 1);
                m2 += delta * (inc - mean);
            }
            DriftEntry e;
            e.asset = k;
            e.t1 = gs.times[a];
            e.t2 = gs.times[b];
            e.mean = mean;
            e.std_error = gs.n_paths > 1 ? std::sqrt(m2 / (gs.n_paths - 1) / gs.n_paths) : 0.0;
            // rounding floor: deterministic gains have a zero standard error
            e.flagged = std::abs(mean) - bias_allowance > 3.0 * e.std_error + 1e-12 * scale;
            r.flags += e.flagged ? 1 : 0;
            r.entries.push_back(e);
        }
    }
    return r;
}

} // namespace radnerlab
