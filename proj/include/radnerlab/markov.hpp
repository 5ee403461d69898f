#pragma once

#include "radnerlab/economy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace radnerlab {

/// Uniform tensor grid over a box times a uniform time grid on [0, T].
/// Spatial nodes are numbered with dimension 0 varying fastest.
struct Grid {
    std::vector<std::vector<double>> axes;
    std::vector<double> spacing;
    std::vector<double> times;
    std::vector<std::size_t> strides;
    std::size_t node_count = 0;
    std::size_t x0_node = 0;            // nearest node to x0
    std::vector<double> x0_offset;      // x0 - coordinates(x0_node)

    int dims() const { return static_cast<int>(axes.size()); }
    std::size_t time_steps() const { return times.size() - 1; }
    double horizon() const { return times.back(); }
    double dt() const { return times[1] - times[0]; }
    std::size_t size(int j) const { return axes[j].size(); }

    std::size_t index(std::size_t node, int j) const { return (node / strides[j]) % axes[j].size(); }

    void coordinates(std::size_t node, std::span<double> out) const {
        for (int j = 0; j < dims(); ++j) out[j] = axes[j][index(node, j)];
    }

    std::vector<double> coordinates(std::size_t node) const {
        std::vector<double> x(axes.size());
        coordinates(node, x);
        return x;
    }

    bool on_boundary(std::size_t node, int j) const {
        std::size_t i = index(node, j);
        return i == 0 || i + 1 == axes[j].size();
    }

    bool interior(std::size_t node) const {
        for (int j = 0; j < dims(); ++j) {
            if (on_boundary(node, j)) return false;
        }
        return true;
    }

    bool contains(std::span<const double> x) const {
        for (int j = 0; j < dims(); ++j) {
            if (x[j] < axes[j].front() || x[j] > axes[j].back()) return false;
        }
        return true;
    }
};

/// Grid function over all time nodes: value(m, node).
struct SpaceTimeField {
    std::size_t nodes = 0;
    std::size_t time_nodes = 0;
    std::vector<double> data;

    SpaceTimeField() = default;
    SpaceTimeField(std::size_t n, std::size_t m, double fill = 0.0)
        : nodes(n), time_nodes(m), data(n * m, fill) {}

    static SpaceTimeField like(const Grid& g, double fill = 0.0) {
        return {g.node_count, g.times.size(), fill};
    }

    double& operator()(std::size_t m, std::size_t node) { return data[m * nodes + node]; }
    double operator()(std::size_t m, std::size_t node) const { return data[m * nodes + node]; }

    std::span<double> at(std::size_t m) { return {data.data() + m * nodes, nodes}; }
    std::span<const double> at(std::size_t m) const { return {data.data() + m * nodes, nodes}; }
    std::span<const double> terminal() const { return at(time_nodes - 1); }
};

inline Grid build_grid(const Box& region, const std::vector<int>& nodes_per_dim, double T, int time_steps,
                       std::span<const double> x0 = {}) {
    const int K = region.dims();
    if (region.degenerate()) throw ConfigError("grid region is degenerate");
    if (K > 3) throw ConfigError("grids support K <= 3");
    if (static_cast<int>(nodes_per_dim.size()) != K) throw ConfigError("nodes_per_dim must have K entries");
    if (time_steps < 1) throw ConfigError("time_steps must be >= 1");
    if (!(T > 0.0)) throw ConfigError("grid horizon must be > 0");
    Grid g;
    g.node_count = 1;
    for (int j = 0; j < K; ++j) {
        const int n = nodes_per_dim[j];
        if (n < 3) throw ConfigError("nodes_per_dim must be >= 3");
        std::vector<double> axis(n);
        const double h = (region.hi[j] - region.lo[j]) / (n - 1);
        for (int i = 0; i < n; ++i) axis[i] = region.lo[j] + h * i;
        axis.back() = region.hi[j];
        g.strides.push_back(g.node_count);
        g.node_count *= static_cast<std::size_t>(n);
        g.axes.push_back(std::move(axis));
        g.spacing.push_back(h);
    }
    g.times.resize(static_cast<std::size_t>(time_steps) + 1);
    for (int m = 0; m <= time_steps; ++m) g.times[m] = T * m / time_steps;
    g.times.back() = T;

    g.x0_offset.assign(K, 0.0);
    if (!x0.empty()) {
        if (!region.contains(x0)) throw ConfigError("x0 lies outside the grid box");
        for (int j = 0; j < K; ++j) {
            auto i = static_cast<std::size_t>(std::lround((x0[j] - region.lo[j]) / g.spacing[j]));
            i = std::min(i, g.axes[j].size() - 1);
            g.x0_node += i * g.strides[j];
            g.x0_offset[j] = x0[j] - g.axes[j][i];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Path simulation

/// Materialized Euler-Maruyama trajectories, layout [path][step][dim].
struct PathBundle {
    int dims = 0;
    int steps = 0;
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> times;
    std::vector<double> states;      // n_paths * (steps+1) * dims
    std::vector<double> increments;  // n_paths * steps * dims, Brownian increments dW

    std::span<const double> state(int path, int step) const {
        return {states.data() + (static_cast<std::size_t>(path) * (steps + 1) + step) * dims,
                static_cast<std::size_t>(dims)};
    }

    std::span<const double> increment(int path, int step) const {
        return {increments.data() + (static_cast<std::size_t>(path) * steps + step) * dims,
                static_cast<std::size_t>(dims)};
    }

    /// path,time,x1..xK
    void write_csv(std::ostream& out) const {
        out << "path,time";
        for (int j = 1; j <= dims; ++j) out << ",x" << j;
        out << '\n';
        char buf[32];
        for (int p = 0; p < n_paths; ++p) {
            for (int m = 0; m <= steps; ++m) {
                out << p;
                std::snprintf(buf, sizeof buf, ",%.17g", times[m]);
                out << buf;
                for (double v : state(p, m)) {
                    std::snprintf(buf, sizeof buf, ",%.17g", v);
                    out << buf;
                }
                out << '\n';
            }
        }
    }
};

/// Independent engine for path `path` of a run seeded with `seed`.
inline std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
    // splitmix64 finalizer over (seed, path)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (path + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return std::mt19937_64(z);
}

/// Workspace for one Euler-Maruyama trajectory; reused across paths.
class EulerStepper {
public:
    explicit EulerStepper(const DiffusionSpec& d)
        : d_(d), drift_(d.dims), sigma_(static_cast<std::size_t>(d.dims * d.dims)), xi_(d.dims) {}

    /// Fills `states` ((steps+1)*K) and optionally `increments` (steps*K) for one path.
    void run(std::mt19937_64& rng, std::span<const double> start, double t0, double T, int steps,
             std::span<double> states, std::span<double> increments = {}) {
        const int K = d_.dims;
        const double dt = (T - t0) / steps;
        const double sqdt = std::sqrt(dt);
        std::normal_distribution<double> normal;
        std::copy(start.begin(), start.end(), states.begin());
        for (int m = 0; m < steps; ++m) {
            std::span<const double> x = states.subspan(static_cast<std::size_t>(m) * K, K);
            std::span<double> next = states.subspan(static_cast<std::size_t>(m + 1) * K, K);
            try {
                d_.drift_at(x, drift_);
                d_.dispersion_at(x, sigma_);
            } catch (const DomainError& e) {
                throw Error("path simulation failed at step " + std::to_string(m) + ": " + e.what());
            }
            for (int j = 0; j < K; ++j) xi_[j] = normal(rng);
            for (int i = 0; i < K; ++i) {
                double diffusion = 0.0;
                for (int j = 0; j < K; ++j) diffusion += sigma_[i * K + j] * xi_[j];
                next[i] = x[i] + drift_[i] * dt + diffusion * sqdt;
            }
            if (!increments.empty()) {
                for (int j = 0; j < K; ++j) increments[static_cast<std::size_t>(m) * K + j] = xi_[j] * sqdt;
            }
        }
    }

private:
    const DiffusionSpec& d_;
    std::vector<double> drift_;
    std::vector<double> sigma_;
    std::vector<double> xi_;
};

/// Streams paths one at a time: visit(path_index, states) with states laid out [step][dim].
/// Path p is bit-identical to path p of simulate_paths with the same arguments.
template <class Visitor>
void for_each_path(const DiffusionSpec& d, std::span<const double> start, double t0, double T, int steps,
                   int n_paths, std::uint64_t seed, Visitor&& visit) {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
    EulerStepper stepper(d);
    std::vector<double> states(static_cast<std::size_t>(steps + 1) * d.dims);
    for (int p = 0; p < n_paths; ++p) {
        auto rng = path_engine(seed, static_cast<std::uint64_t>(p));
        try {
            stepper.run(rng, start, t0, T, steps, states);
        } catch (const Error& e) {
            throw Error("path " + std::to_string(p) + ": " + e.what());
        }
        visit(p, std::span<const double>(states));
    }
}

inline PathBundle simulate_paths(const DiffusionSpec& d, double T, int steps, int n_paths, std::uint64_t seed) {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
    PathBundle b;
    b.dims = d.dims;
    b.steps = steps;
    b.n_paths = n_paths;
    b.seed = seed;
    b.times.resize(static_cast<std::size_t>(steps) + 1);
    for (int m = 0; m <= steps; ++m) b.times[m] = T * m / steps;
    const std::size_t per_state = static_cast<std::size_t>(steps + 1) * d.dims;
    const std::size_t per_inc = static_cast<std::size_t>(steps) * d.dims;
    b.states.resize(per_state * n_paths);
    b.increments.resize(per_inc * n_paths);
    EulerStepper stepper(d);
    for (int p = 0; p < n_paths; ++p) {
        auto rng = path_engine(seed, static_cast<std::uint64_t>(p));
        std::span<double> states(b.states.data() + per_state * p, per_state);
        std::span<double> incs(b.increments.data() + per_inc * p, per_inc);
        try {
            stepper.run(rng, d.x0, 0.0, T, steps, states, incs);
        } catch (const Error& e) {
            throw Error("path " + std::to_string(p) + ": " + e.what());
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Finite-difference stencils

/// Drift and diffusion matrix evaluated at every spatial node.
struct GeneratorCoefficients {
    int dims = 0;
    std::vector<double> drift;      // node*K + j
    std::vector<double> diffusion;  // node*K*K + i*K + j, a = sigma sigma^T

    double b(std::size_t node, int j) const { return drift[node * dims + j]; }
    double a(std::size_t node, int i, int j) const {
        return diffusion[node * dims * dims + static_cast<std::size_t>(i * dims + j)];
    }
};

inline GeneratorCoefficients generator_coefficients(const DiffusionSpec& d, const Grid& g) {
    const int K = d.dims;
    GeneratorCoefficients c;
    c.dims = K;
    c.drift.resize(g.node_count * K);
    c.diffusion.resize(g.node_count * K * K);
    std::vector<double> x(K);
    for (std::size_t n = 0; n < g.node_count; ++n) {
        g.coordinates(n, x);
        d.drift_at(x, std::span<double>(c.drift.data() + n * K, K));
        d.diffusion_at(x, std::span<double>(c.diffusion.data() + n * K * K, static_cast<std::size_t>(K * K)));
    }
    return c;
}

/// du/dx_j at one node: central in the interior, second-order one-sided on the boundary.
inline double first_derivative_at(const Grid& g, std::span<const double> u, int j, std::size_t node) {
    const std::size_t s = g.strides[j];
    const double h = g.spacing[j];
    const std::size_t i = g.index(node, j);
    if (i == 0) return (-3.0 * u[node] + 4.0 * u[node + s] - u[node + 2 * s]) / (2.0 * h);
    if (i + 1 == g.size(j)) return (3.0 * u[node] - 4.0 * u[node - s] + u[node - 2 * s]) / (2.0 * h);
    return (u[node + s] - u[node - s]) / (2.0 * h);
}

inline void first_derivative(const Grid& g, std::span<const double> u, int j, std::span<double> out) {
    for (std::size_t node = 0; node < g.node_count; ++node) out[node] = first_derivative_at(g, u, j, node);
}

/// d2u/dx_j^2: central in the interior, one-sided (cubic-exact when 4+ nodes) on the boundary.
inline void second_derivative(const Grid& g, std::span<const double> u, int j, std::span<double> out) {
    const std::size_t s = g.strides[j];
    const std::size_t n = g.size(j);
    const double h2 = g.spacing[j] * g.spacing[j];
    for (std::size_t node = 0; node < g.node_count; ++node) {
        std::size_t i = g.index(node, j);
        if (i == 0) {
            out[node] = n >= 4 ? (2.0 * u[node] - 5.0 * u[node + s] + 4.0 * u[node + 2 * s] - u[node + 3 * s]) / h2
                               : (u[node] - 2.0 * u[node + s] + u[node + 2 * s]) / h2;
        } else if (i + 1 == n) {
            out[node] = n >= 4 ? (2.0 * u[node] - 5.0 * u[node - s] + 4.0 * u[node - 2 * s] - u[node - 3 * s]) / h2
                               : (u[node] - 2.0 * u[node - s] + u[node - 2 * s]) / h2;
        } else {
            out[node] = (u[node + s] - 2.0 * u[node] + u[node - s]) / h2;
        }
    }
}

/// L u = b . grad u + 1/2 tr(a D^2 u) at every node.
inline std::vector<double> apply_generator(const GeneratorCoefficients& c, std::span<const double> u,
                                           const Grid& g) {
    const int K = g.dims();
    std::vector<double> out(g.node_count, 0.0);
    std::vector<double> work(g.node_count);
    std::vector<std::vector<double>> grad(K, std::vector<double>(g.node_count));
    for (int j = 0; j < K; ++j) {
        first_derivative(g, u, j, grad[j]);
        second_derivative(g, u, j, work);
        for (std::size_t n = 0; n < g.node_count; ++n) {
            out[n] += c.b(n, j) * grad[j][n] + 0.5 * c.a(n, j, j) * work[n];
        }
    }
    for (int i = 0; i < K; ++i) {
        for (int j = i + 1; j < K; ++j) {
            const std::size_t si = g.strides[i];
            const std::size_t sj = g.strides[j];
            const double hij = 4.0 * g.spacing[i] * g.spacing[j];
            first_derivative(g, grad[j], i, work);  // boundary fallback
            for (std::size_t n = 0; n < g.node_count; ++n) {
                double mixed = work[n];
                if (!g.on_boundary(n, i) && !g.on_boundary(n, j)) {
                    mixed = (u[n + si + sj] - u[n + si - sj] - u[n - si + sj] + u[n - si - sj]) / hij;
                }
                out[n] += c.a(n, i, j) * mixed;  // a_ij + a_ji halves cancel the 1/2
            }
        }
    }
    return out;
}

inline std::vector<double> apply_generator(const DiffusionSpec& d, std::span<const double> u, const Grid& g) {
    return apply_generator(generator_coefficients(d, g), u, g);
}

// ---------------------------------------------------------------------------
// Interpolation

/// Multilinear interpolation of a spatial field; x is clamped into the box.
inline double interpolate(const Grid& g, std::span<const double> field, std::span<const double> x) {
    const int K = g.dims();
    std::size_t base = 0;
    double w[3];
    std::size_t stride[3];
    for (int j = 0; j < K; ++j) {
        const auto& axis = g.axes[j];
        double pos = (std::clamp(x[j], axis.front(), axis.back()) - axis.front()) / g.spacing[j];
        auto i = static_cast<std::size_t>(pos);
        i = std::min(i, axis.size() - 2);
        w[j] = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
        base += i * g.strides[j];
        stride[j] = g.strides[j];
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << K); ++corner) {
        double weight = 1.0;
        std::size_t node = base;
        for (int j = 0; j < K; ++j) {
            if (corner & (1 << j)) {
                weight *= w[j];
                node += stride[j];
            } else {
                weight *= 1.0 - w[j];
            }
        }
        if (weight != 0.0) acc += weight * field[node];
    }
    return acc;
}

/// Locates t in the time grid: returns m and weight on m+1.
inline std::pair<std::size_t, double> locate_time(const Grid& g, double t) {
    const std::size_t M = g.time_steps();
    double pos = std::clamp(t / g.horizon(), 0.0, 1.0) * static_cast<double>(M);
    auto m = static_cast<std::size_t>(std::floor(pos + 1e-9));
    if (m >= M) return {M, 0.0};
    double w = pos - static_cast<double>(m);
    if (std::abs(w) < 1e-9) w = 0.0;
    return {m, w};
}

inline double interpolate(const Grid& g, const SpaceTimeField& f, double t, std::span<const double> x) {
    auto [m, w] = locate_time(g, t);
    double v = interpolate(g, f.at(m), x);
    if (w == 0.0) return v;
    return (1.0 - w) * v + w * interpolate(g, f.at(m + 1), x);
}

} // namespace radnerlab
