#pragma once

// Executable checks of the standing assumptions on the declared verification
// region. Everything is sampled: a PASS means no violation was seen on the
// samples, not that the condition holds globally.

#include "radnerlab/completeness.hpp"
#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"
#include "radnerlab/sampling.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace radnerlab {

enum class Verdict { pass, fail, unverifiable };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::unverifiable: return "UNVERIFIABLE";
    }
    return "?";
}

struct AssumptionCheck {
    std::string id;
    std::string title;
    Verdict verdict = Verdict::pass;
    std::string detail;
    nlohmann::ordered_json witness = nlohmann::ordered_json::object();
};

struct ValidationReport {
    int samples = 0;
    std::uint64_t seed = 0;
    std::vector<AssumptionCheck> checks;
    std::vector<std::string> warnings;
    double path_exit_fraction = 0.0;

    /// True when nothing FAILed (UNVERIFIABLE is allowed).
    bool passed() const {
        return std::none_of(checks.begin(), checks.end(), [](const auto& c) { return c.verdict == Verdict::fail; });
    }

    const AssumptionCheck& check(const std::string& id) const {
        for (const auto& c : checks) {
            if (c.id == id) return c;
        }
        throw Error("no check named " + id);
    }

    nlohmann::ordered_json verdicts() const {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& c : checks) j[c.id] = to_string(c.verdict);
        return j;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["verdict"] = passed() ? "PASS" : "FAIL";
        j["samples"] = samples;
        j["seed"] = seed;
        auto& arr = j["checks"] = nlohmann::ordered_json::array();
        for (const auto& c : checks) {
            nlohmann::ordered_json e;
            e["id"] = c.id;
            e["title"] = c.title;
            e["verdict"] = to_string(c.verdict);
            e["detail"] = c.detail;
            e["witness"] = c.witness;
            arr.push_back(e);
        }
        j["path_exit_fraction"] = path_exit_fraction;
        j["warnings"] = warnings;
        return j;
    }
};

namespace detail {

inline nlohmann::ordered_json point_json(double t, const std::vector<double>& x) {
    nlohmann::ordered_json j;
    j["t"] = t;
    j["x"] = x;
    return j;
}

// Runs `body`; evaluation failures become a FAIL carrying the message.
inline AssumptionCheck guarded(std::string id, std::string title, const std::function<void(AssumptionCheck&)>& body) {
    AssumptionCheck c;
    c.id = std::move(id);
    c.title = std::move(title);
    try {
        body(c);
    } catch (const Error& e) {
        c.verdict = Verdict::fail;
        c.detail = e.what();
    }
    return c;
}

} // namespace detail

inline ValidationReport validate_assumptions(const Economy& econ, int samples = 256, std::uint64_t seed = 1,
                                             int exit_paths = 1000, int exit_steps = 100) {
    const int K = econ.dims();
    const double T = econ.horizon();
    const auto& d = econ.diffusion();
    ValidationReport rep;
    rep.samples = samples;
    rep.seed = seed;
    const auto space = sample_box(econ.region(), samples, seed);
    const auto spacetime = sample_time_box(econ.region(), T, samples, seed);

    rep.checks.push_back(detail::guarded("lipschitz", "drift and dispersion are Lipschitz", [&](AssumptionCheck& c) {
        // max difference quotient over all sample pairs
        std::vector<std::vector<double>> coef;
        std::vector<double> b(K), s(K * K);
        for (const auto& x : space) {
            d.drift_at(x, b);
            d.dispersion_at(x, s);
            std::vector<double> v(b);
            v.insert(v.end(), s.begin(), s.end());
            coef.push_back(std::move(v));
        }
        double lip = 0.0;
        for (std::size_t i = 0; i < space.size(); ++i) {
            for (std::size_t j = i + 1; j < space.size(); ++j) {
                double dx = 0.0;
                double df = 0.0;
                for (int l = 0; l < K; ++l) dx += std::pow(space[i][l] - space[j][l], 2);
                for (std::size_t l = 0; l < coef[i].size(); ++l) df += std::pow(coef[i][l] - coef[j][l], 2);
                if (dx > 0.0) lip = std::max(lip, std::sqrt(df / dx));
            }
        }
        c.witness["lipschitz_estimate"] = lip;
        c.verdict = std::isfinite(lip) ? Verdict::pass : Verdict::fail;
    }));

    rep.checks.push_back(detail::guarded("ellipticity", "a = sigma sigma^T is uniformly elliptic", [&](AssumptionCheck& c) {
        std::vector<double> a(K * K);
        double min_eig = std::numeric_limits<double>::infinity();
        std::vector<double> at;
        for (const auto& x : space) {
            d.diffusion_at(x, a);
            Eigen::MatrixXd A(K, K);
            for (int i = 0; i < K; ++i) {
                for (int j = 0; j < K; ++j) A(i, j) = a[i * K + j];
            }
            double e = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues()(0);
            if (e < min_eig) {
                min_eig = e;
                at = x;
            }
        }
        c.witness["min_eigenvalue"] = min_eig;
        c.witness["x"] = at;
        c.verdict = min_eig > 1e-12 ? Verdict::pass : Verdict::fail;
        if (c.verdict == Verdict::fail) c.detail = "a(x) is (nearly) singular";
    }));

    rep.checks.push_back(detail::guarded("coefficient_bounds", "coefficients and their derivatives are bounded",
                                         [&](AssumptionCheck& c) {
        double bmax = 0.0;
        double smax = 0.0;
        double dmax = 0.0;
        std::vector<Expr> derivs;
        for (const auto& e : d.drift) {
            for (int l = 1; l <= K; ++l) derivs.push_back(differentiate(e, l));
        }
        for (const auto& e : d.dispersion) {
            for (int l = 1; l <= K; ++l) derivs.push_back(differentiate(e, l));
        }
        for (const auto& x : space) {
            for (const auto& e : d.drift) bmax = std::max(bmax, std::abs(e(0.0, x)));
            for (const auto& e : d.dispersion) smax = std::max(smax, std::abs(e(0.0, x)));
            for (const auto& e : derivs) dmax = std::max(dmax, std::abs(e(0.0, x)));
        }
        c.witness["max_abs_drift"] = bmax;
        c.witness["max_abs_dispersion"] = smax;
        c.witness["max_abs_derivative"] = dmax;
        c.verdict = std::isfinite(bmax + smax + dmax) ? Verdict::pass : Verdict::fail;
    }));

    rep.checks.push_back(detail::guarded("inada", "CRRA utilities satisfy the Inada conditions", [&](AssumptionCheck& c) {
        auto& arr = c.witness["agents"] = nlohmann::ordered_json::array();
        c.verdict = Verdict::pass;
        for (const auto& a : econ.agents()) {
            arr.push_back({{"gamma", a.utility.gamma}, {"rho", a.utility.rho}});
            if (!(a.utility.gamma > 0.0) || !(a.utility.rho >= 0.0)) c.verdict = Verdict::fail;
        }
    }));

    rep.checks.push_back(detail::guarded("entitlements", "entitlements are strictly positive", [&](AssumptionCheck& c) {
        double lo = std::numeric_limits<double>::infinity();
        nlohmann::ordered_json where;
        for (int i = 0; i < econ.agent_count(); ++i) {
            const Expr& e = econ.agents()[i].entitlement;
            for (const auto& [t, x] : spacetime) {
                double v = e(t, x);
                if (v < lo) {
                    lo = v;
                    where = detail::point_json(t, x);
                    where["agent"] = i;
                }
            }
        }
        c.witness["min_entitlement"] = lo;
        c.witness["at"] = where;
        c.verdict = lo > 0.0 ? Verdict::pass : Verdict::fail;
    }));

    rep.checks.push_back(detail::guarded("dividends", "dividends are nonnegative and asset 0 is a zero-coupon bond",
                                         [&](AssumptionCheck& c) {
        double lo = std::numeric_limits<double>::infinity();
        nlohmann::ordered_json where;
        for (int k = 1; k < econ.asset_count(); ++k) {
            for (const auto& [t, x] : spacetime) {
                double v = econ.assets()[k].dividend(t, x);
                if (v < lo) {
                    lo = v;
                    where = detail::point_json(t, x);
                    where["asset"] = k;
                }
            }
        }
        double bond = std::numeric_limits<double>::infinity();
        for (int k = 0; k < econ.asset_count(); ++k) {
            for (const auto& x : space) {
                double v = econ.dividend_lump(k)(T, x);
                if (k == 0) bond = std::min(bond, v);
                if (v < lo) {
                    lo = v;
                    where = detail::point_json(T, x);
                    where["asset"] = k;
                }
            }
        }
        const Expr& flow0 = econ.assets()[0].dividend;
        const bool zero_coupon = flow0.is_constant() && flow0(0.0, std::vector<double>(K, 0.0)) == 0.0;
        c.witness["min_dividend"] = lo;
        c.witness["at"] = where;
        c.witness["min_bond_payoff"] = bond;
        c.witness["bond_flow_is_zero"] = zero_coupon;
        c.verdict = (lo >= 0.0 && bond > 0.0 && zero_coupon) ? Verdict::pass : Verdict::fail;
        if (!zero_coupon) c.detail = "asset 0 must not pay a flow dividend before T";
        else if (!(bond > 0.0)) c.detail = "terminal bond payoff must be positive";
    }));

    rep.checks.push_back(detail::guarded("aggregate_bounds", "aggregate endowment bounded and bounded away from zero",
                                         [&](AssumptionCheck& c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& [t, x] : spacetime) {
            double v = econ.aggregate().flow(t, x);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (const auto& x : space) {
            double v = econ.aggregate().lump(T, x);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        c.witness["min"] = lo;
        c.witness["max"] = hi;
        c.witness["region_only"] = true;
        c.verdict = (lo > 0.0 && std::isfinite(hi)) ? Verdict::pass : Verdict::fail;
        c.detail = "bounds hold on the verification region only";
    }));

    rep.checks.push_back(detail::guarded("terminal_rank", "terminal payoff ratios have full rank on the rank region",
                                         [&](AssumptionCheck& c) {
        auto rc = terminal_rank_check(econ, samples, seed);
        c.witness["min_abs_det"] = rc.min_abs_det;
        c.witness["x"] = rc.argmin;
        c.witness["samples"] = rc.samples;
        c.verdict = rc.min_abs_det > 1e-12 ? Verdict::pass : Verdict::fail;
        if (c.verdict == Verdict::fail) c.detail = "det Dh vanishes on the rank region";
    }));

    AssumptionCheck analytic;
    analytic.id = "analyticity";
    analytic.title = "entitlements and dividends are analytic";
    analytic.verdict = Verdict::unverifiable;
    analytic.detail = "built from analytic primitives, but analyticity cannot be certified numerically";
    rep.checks.push_back(analytic);

    // truncation bias indicator
    int exits = 0;
    for_each_path(d, d.x0, 0.0, T, exit_steps, exit_paths, seed, [&](int, std::span<const double> states) {
        for (int m = 0; m <= exit_steps; ++m) {
            if (!econ.region().contains(states.subspan(static_cast<std::size_t>(m) * K, K))) {
                ++exits;
                return;
            }
        }
    });
    rep.path_exit_fraction = static_cast<double>(exits) / exit_paths;
    if (rep.path_exit_fraction > 0.01) {
        rep.warnings.push_back(std::to_string(exits) + " of " + std::to_string(exit_paths) +
                               " simulated paths leave the verification region before T");
    }
    return rep;
}

} // namespace radnerlab
