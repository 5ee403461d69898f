#pragma once

// Dynamic completeness diagnostics. With asset 0 as numeraire the normalized
// prices r^k = s^k / s^0 have volatility matrix diag(1/r) Dr sigma; the
// market is complete where its determinant does not vanish. Verdicts are
// relative to the grid and never claim almost-sure invertibility.

#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"
#include "radnerlab/pricing.hpp"
#include "radnerlab/sampling.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace radnerlab {

struct NormalizedPrices {
    std::vector<SpaceTimeField> ratio;                  // r^k, k = 1..K (index k-1)
    std::vector<std::vector<SpaceTimeField>> jacobian;  // [k-1][l] = dr^k/dx_l
    double quotient_rule_gap = 0.0;  // interior max |Dr - (Ds^k - r^k Ds^0)/s^0|, relative
};

inline NormalizedPrices normalize_prices(const PricingSolution& p, const Grid& g) {
    const int K = g.dims();
    NormalizedPrices out;
    const auto& s0 = p.prices[0];
    for (double v : s0.data) {
        if (!(v > 0.0)) throw SolveError("cannot normalize by a nonpositive numeraire price");
    }
    for (int k = 1; k <= K; ++k) {
        SpaceTimeField r = SpaceTimeField::like(g);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = p.prices[k].data[i] / s0.data[i];
        out.jacobian.push_back(spatial_gradient(g, r));
        out.ratio.push_back(std::move(r));
    }
    if (!p.jacobian.empty()) {
        for (int k = 1; k <= K; ++k) {
            for (int l = 0; l < K; ++l) {
                const auto& dr = out.jacobian[k - 1][l];
                for (std::size_t m = 0; m < g.times.size(); ++m) {
                    for (std::size_t n = 0; n < g.node_count; ++n) {
                        if (!g.interior(n)) continue;
                        double quotient = (p.jacobian[k][l](m, n) - out.ratio[k - 1](m, n) * p.jacobian[0][l](m, n)) /
                                          s0(m, n);
                        double gap = std::abs(dr(m, n) - quotient) / std::max(1.0, std::abs(quotient));
                        out.quotient_rule_gap = std::max(out.quotient_rule_gap, gap);
                    }
                }
            }
        }
    }
    return out;
}

/// diag(1/r) * Dr * sigma. `dr` and `sigma` are K x K row-major.
inline Eigen::MatrixXd volatility_matrix(std::span<const double> sigma, std::span<const double> r,
                                         std::span<const double> dr) {
    const int K = static_cast<int>(r.size());
    Eigen::MatrixXd D(K, K);
    Eigen::MatrixXd S(K, K);
    for (int k = 0; k < K; ++k) {
        if (r[k] == 0.0) throw SolveError("normalized price r_" + std::to_string(k + 1) + " is zero");
        for (int l = 0; l < K; ++l) {
            D(k, l) = dr[k * K + l] / r[k];
            S(k, l) = sigma[k * K + l];
        }
    }
    return D * S;
}

/// Volatility matrix at grid node (m, node).
inline Eigen::MatrixXd volatility_matrix(const DiffusionSpec& d, const NormalizedPrices& np, const Grid& g,
                                         std::size_t m, std::size_t node) {
    const int K = g.dims();
    std::vector<double> x(K), sigma(K * K), r(K), dr(K * K);
    g.coordinates(node, x);
    d.dispersion_at(x, sigma);
    for (int k = 0; k < K; ++k) {
        r[k] = np.ratio[k](m, node);
        for (int l = 0; l < K; ++l) dr[k * K + l] = np.jacobian[k][l](m, node);
    }
    return volatility_matrix(sigma, r, dr);
}

/// Product of the row norms of sigma(x); the determinant scale at x.
inline double dispersion_scale(std::span<const double> sigma, int K) {
    double scale = 1.0;
    for (int i = 0; i < K; ++i) {
        double row = 0.0;
        for (int j = 0; j < K; ++j) row += sigma[i * K + j] * sigma[i * K + j];
        scale *= std::sqrt(row);
    }
    return scale;
}

struct RankCheck {
    double min_abs_det = std::numeric_limits<double>::infinity();
    std::vector<double> argmin;
    int samples = 0;
};

/// min |det Dh| over low-discrepancy samples of the rank region, h^k = g^k(T)/g^0(T)
/// differentiated symbolically.
inline RankCheck terminal_rank_check(const Economy& econ, int samples = 512, std::uint64_t seed = 0) {
    const int K = econ.dims();
    const double T = econ.horizon();
    const Expr& g0 = econ.dividend_lump(0);
    std::vector<std::vector<Expr>> dh(K);
    for (int k = 1; k <= K; ++k) {
        Expr h = econ.dividend_lump(k) / g0;
        for (int l = 1; l <= K; ++l) dh[k - 1].push_back(differentiate(h, l));
    }
    RankCheck rc;
    Eigen::MatrixXd J(K, K);
    for (const auto& x : sample_box(econ.rank_region(), samples, seed)) {
        double bond = g0(T, x);
        if (!(bond > 0.0)) {
            throw Error("terminal bond payoff g0(T, x) <= 0 inside the rank region (bond must pay a positive amount there)");
        }
        for (int k = 0; k < K; ++k) {
            for (int l = 0; l < K; ++l) J(k, l) = dh[k][l](T, x);
        }
        double det = std::abs(J.determinant());
        ++rc.samples;
        if (det < rc.min_abs_det) {
            rc.min_abs_det = det;
            rc.argmin = x;
        }
    }
    return rc;
}

struct DetWitness {
    double t = 0.0;
    std::vector<double> x;
    double det = 0.0;
    double scaled_det = 0.0;
};

struct CompletenessReport {
    double threshold = 1e-8;  // multiplier on the row-norm product of sigma
    std::size_t nodes_checked = 0;
    std::size_t nodes_below = 0;
    double fraction_below = 0.0;
    double min_abs_det = std::numeric_limits<double>::infinity();
    double min_scaled_det = std::numeric_limits<double>::infinity();
    DetWitness minimum;
    std::vector<DetWitness> witnesses;  // first flagged nodes
    double terminal_max_scaled_det = 0.0;
    double terminal_min_scaled_det = std::numeric_limits<double>::infinity();
    RankCheck terminal_rank;
    std::vector<double> condition_quantiles;  // 0, 50, 90, 99, 100 percent
    double quotient_rule_gap = 0.0;
    bool complete = false;
    SpaceTimeField det;         // determinant at every node (0 on the spatial boundary)
    SpaceTimeField scaled_det;

    std::string verdict() const { return complete ? "COMPLETE-ON-GRID" : "INCOMPLETE-ON-GRID"; }
};

inline CompletenessReport completeness_report(const Economy& econ, const PricingSolution& p, const Grid& g,
                                              double threshold = 1e-8, std::size_t max_witnesses = 20) {
    const int K = g.dims();
    const std::size_t M = g.time_steps();
    CompletenessReport rep;
    rep.threshold = threshold;
    rep.det = SpaceTimeField::like(g);
    rep.scaled_det = SpaceTimeField::like(g);
    auto np = normalize_prices(p, g);
    rep.quotient_rule_gap = np.quotient_rule_gap;
    std::vector<double> conditions;
    std::vector<double> x(K), sigma(K * K);
    for (std::size_t node = 0; node < g.node_count; ++node) {
        if (!g.interior(node)) continue;
        g.coordinates(node, x);
        econ.diffusion().dispersion_at(x, sigma);
        const double scale = dispersion_scale(sigma, K);
        for (std::size_t m = 0; m <= M; ++m) {
            Eigen::MatrixXd V = volatility_matrix(econ.diffusion(), np, g, m, node);
            const double det = V.determinant();
            const double scaled = std::abs(det) / scale;
            rep.det(m, node) = det;
            rep.scaled_det(m, node) = scaled;
            ++rep.nodes_checked;
            if (std::abs(det) < rep.min_abs_det) rep.min_abs_det = std::abs(det);
            if (scaled < rep.min_scaled_det) {
                rep.min_scaled_det = scaled;
                rep.minimum = {g.times[m], x, det, scaled};
            }
            if (!(scaled >= threshold)) {
                ++rep.nodes_below;
                if (rep.witnesses.size() < max_witnesses) rep.witnesses.push_back({g.times[m], x, det, scaled});
            }
            if (m == M) {
                rep.terminal_max_scaled_det = std::max(rep.terminal_max_scaled_det, scaled);
                rep.terminal_min_scaled_det = std::min(rep.terminal_min_scaled_det, scaled);
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
            const auto& sv = svd.singularValues();
            double smin = sv(sv.size() - 1);
            conditions.push_back(smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity());
        }
    }
    rep.fraction_below =
        rep.nodes_checked ? static_cast<double>(rep.nodes_below) / static_cast<double>(rep.nodes_checked) : 1.0;
    std::sort(conditions.begin(), conditions.end());
    for (double q : {0.0, 0.5, 0.9, 0.99, 1.0}) {
        if (conditions.empty()) break;
        auto idx = static_cast<std::size_t>(std::round(q * static_cast<double>(conditions.size() - 1)));
        rep.condition_quantiles.push_back(conditions[idx]);
    }
    rep.terminal_rank = terminal_rank_check(econ);
    rep.complete = rep.nodes_checked > 0 && rep.nodes_below == 0 && rep.terminal_rank.min_abs_det >= threshold;
    return rep;
}

} // namespace radnerlab
