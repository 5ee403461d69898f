#pragma once

#include "radnerlab/error.hpp"
#include "radnerlab/exprlang.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace radnerlab {

/// Axis-aligned box [lo, hi] in R^K.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    int dims() const { return static_cast<int>(lo.size()); }

    bool contains(std::span<const double> x) const {
        for (std::size_t j = 0; j < lo.size(); ++j) {
            if (x[j] < lo[j] || x[j] > hi[j]) return false;
        }
        return true;
    }

    bool degenerate() const {
        for (std::size_t j = 0; j < lo.size(); ++j) {
            if (!(hi[j] > lo[j])) return true;
        }
        return lo.empty();
    }
};

/// dX = b(X) dt + sigma(X) dW in R^K. Coefficients are expressions in x only.
struct DiffusionSpec {
    int dims = 0;
    std::vector<Expr> drift;       // K
    std::vector<Expr> dispersion;  // K*K, row-major
    std::vector<double> x0;

    void drift_at(std::span<const double> x, std::span<double> out) const {
        for (int j = 0; j < dims; ++j) out[j] = drift[j](0.0, x);
    }

    void dispersion_at(std::span<const double> x, std::span<double> out) const {
        for (int j = 0; j < dims * dims; ++j) out[j] = dispersion[j](0.0, x);
    }

    /// a = sigma sigma^T, row-major.
    void diffusion_at(std::span<const double> x, std::span<double> out) const {
        std::vector<double> s(static_cast<std::size_t>(dims * dims));
        dispersion_at(x, s);
        for (int i = 0; i < dims; ++i) {
            for (int j = 0; j < dims; ++j) {
                double acc = 0.0;
                for (int l = 0; l < dims; ++l) acc += s[i * dims + l] * s[j * dims + l];
                out[i * dims + j] = acc;
            }
        }
    }
};

/// u(t, c) = exp(-rho t) c^(1-gamma) / (1-gamma), log utility when gamma == 1.
struct CrraUtility {
    double gamma = 1.0;
    double rho = 0.0;

    double value(double t, double c) const {
        double disc = std::exp(-rho * t);
        if (gamma == 1.0) return disc * std::log(c);
        return disc * std::pow(c, 1.0 - gamma) / (1.0 - gamma);
    }

    double marginal(double t, double c) const { return std::exp(-rho * t) * std::pow(c, -gamma); }
};

struct AgentSpec {
    CrraUtility utility;
    Expr entitlement;
    std::vector<double> shares;  // n^i, K+1 entries
};

struct AssetSpec {
    Expr dividend;  // flow on [0, T)
    Expr terminal;  // lump at T
    bool is_numeraire_bond = false;
};

/// Aggregate endowment split into the flow on [0, T) and the lump at T.
struct AggregateEndowment {
    Expr flow;
    Expr lump;  // function of x (t already pinned to T)
};

/// Immutable economy. Derived endowment expressions are built once on construction.
class Economy {
public:
    Economy(DiffusionSpec diffusion, std::vector<AgentSpec> agents, std::vector<AssetSpec> assets,
            double horizon, Box region, Box rank_region)
        : diffusion_(std::move(diffusion)),
          agents_(std::move(agents)),
          assets_(std::move(assets)),
          horizon_(horizon),
          region_(std::move(region)),
          rank_region_(std::move(rank_region)) {
        check();
        build_derived();
    }

    const DiffusionSpec& diffusion() const { return diffusion_; }
    const std::vector<AgentSpec>& agents() const { return agents_; }
    const std::vector<AssetSpec>& assets() const { return assets_; }
    double horizon() const { return horizon_; }
    const Box& region() const { return region_; }
    const Box& rank_region() const { return rank_region_; }

    int dims() const { return diffusion_.dims; }
    int agent_count() const { return static_cast<int>(agents_.size()); }
    int asset_count() const { return static_cast<int>(assets_.size()); }

    /// N_k = sum_i n^i_k.
    double supply(int k) const {
        double n = 0.0;
        for (const auto& a : agents_) n += a.shares[k];
        return n;
    }

    std::vector<double> supplies() const {
        std::vector<double> n(assets_.size());
        for (int k = 0; k < asset_count(); ++k) n[k] = supply(k);
        return n;
    }

    std::vector<CrraUtility> utilities() const {
        std::vector<CrraUtility> u;
        for (const auto& a : agents_) u.push_back(a.utility);
        return u;
    }

    const AggregateEndowment& aggregate() const { return aggregate_; }

    /// epsilon^i = e^i + n^i . A, flow and lump parts.
    const AggregateEndowment& individual(int i) const { return individual_[i]; }

    /// Asset flow dividend; asset 0 is a zero-coupon bond and pays nothing before T.
    const Expr& dividend_flow(int k) const { return dividend_flow_[k]; }
    const Expr& dividend_lump(int k) const { return dividend_lump_[k]; }
    const Expr& entitlement_lump(int i) const { return entitlement_lump_[i]; }

private:
    void check() const {
        const int K = diffusion_.dims;
        if (K < 1) throw ConfigError("diffusion dimension K must be >= 1");
        if (static_cast<int>(diffusion_.drift.size()) != K ||
            static_cast<int>(diffusion_.dispersion.size()) != K * K ||
            static_cast<int>(diffusion_.x0.size()) != K) {
            throw ConfigError("diffusion coefficients do not match K=" + std::to_string(K));
        }
        for (const auto& e : diffusion_.dispersion) {
            if (uses_time(e)) throw ConfigError("dispersion must not depend on t");
        }
        for (const auto& e : diffusion_.drift) {
            if (uses_time(e)) throw ConfigError("drift must not depend on t");
        }
        if (static_cast<int>(assets_.size()) != K + 1) {
            throw ConfigError("dimension mismatch: " + std::to_string(assets_.size()) +
                              " assets, K+1 = " + std::to_string(K + 1) + " required");
        }
        if (agents_.empty()) throw ConfigError("at least one agent is required");
        for (std::size_t i = 0; i < agents_.size(); ++i) {
            const auto& a = agents_[i];
            if (!(a.utility.gamma > 0.0) || !std::isfinite(a.utility.gamma)) {
                throw ConfigError("agent " + std::to_string(i) +
                                  ": risk aversion gamma must be > 0 (Inada conditions)");
            }
            if (!(a.utility.rho >= 0.0)) {
                throw ConfigError("agent " + std::to_string(i) + ": discount rate must be >= 0");
            }
            if (static_cast<int>(a.shares.size()) != K + 1) {
                throw ConfigError("agent " + std::to_string(i) + ": shares must have K+1 entries");
            }
            for (double n : a.shares) {
                if (!(n >= 0.0)) throw ConfigError("agent " + std::to_string(i) + ": shares must be >= 0");
            }
        }
        if (!(horizon_ > 0.0)) throw ConfigError("horizon T must be > 0");
        if (region_.dims() != K || static_cast<int>(region_.hi.size()) != K || region_.degenerate()) {
            throw ConfigError("verification region must be a nondegenerate box in R^K");
        }
        if (!region_.contains(diffusion_.x0)) throw ConfigError("x0 lies outside the verification region");
        if (rank_region_.dims() != K || static_cast<int>(rank_region_.hi.size()) != K ||
            rank_region_.degenerate()) {
            throw ConfigError("rank region must be a nondegenerate box in R^K");
        }
    }

    static bool uses_time(const Expr& e) {
        struct Visitor {
            static bool visit(const Node& n) {
                if (n.kind == NodeKind::variable) return n.var == time_variable;
                if (n.kind == NodeKind::constant) return false;
                if (visit(*n.lhs)) return true;
                return is_binary(n.kind) && visit(*n.rhs);
            }
        };
        return Visitor::visit(e.root());
    }

    void build_derived() {
        const int K = dims();
        const double T = horizon_;
        for (int k = 0; k <= K; ++k) {
            dividend_flow_.push_back(k == 0 ? Expr::constant(0.0, K) : assets_[k].dividend);
            dividend_lump_.push_back(substitute(assets_[k].terminal, time_variable, T));
        }
        Expr agg_flow = Expr::constant(0.0, K);
        Expr agg_lump = Expr::constant(0.0, K);
        for (const auto& a : agents_) {
            Expr flow = a.entitlement;
            Expr lump = substitute(a.entitlement, time_variable, T);
            entitlement_lump_.push_back(lump);
            for (int k = 0; k <= K; ++k) {
                if (a.shares[k] == 0.0) continue;
                flow = flow + a.shares[k] * dividend_flow_[k];
                lump = lump + a.shares[k] * dividend_lump_[k];
            }
            individual_.push_back({flow, lump});
            agg_flow = agg_flow + a.entitlement;
            agg_lump = agg_lump + entitlement_lump_.back();
        }
        for (int k = 0; k <= K; ++k) {
            double n = supply(k);
            if (n == 0.0) continue;
            agg_flow = agg_flow + n * dividend_flow_[k];
            agg_lump = agg_lump + n * dividend_lump_[k];
        }
        aggregate_ = {agg_flow, agg_lump};
    }

    DiffusionSpec diffusion_;
    std::vector<AgentSpec> agents_;
    std::vector<AssetSpec> assets_;
    double horizon_;
    Box region_;
    Box rank_region_;

    AggregateEndowment aggregate_;
    std::vector<AggregateEndowment> individual_;
    std::vector<Expr> dividend_flow_;
    std::vector<Expr> dividend_lump_;
    std::vector<Expr> entitlement_lump_;
};

/// epsilon_flow = sum e^i + sum_k N_k g^k (asset 0 flow is zero); epsilon_T adds the lumps.
inline AggregateEndowment aggregate_endowment(const Economy& econ) { return econ.aggregate(); }

namespace detail {

inline std::vector<double> read_vector(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array");
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw ConfigError(std::string(what) + " entries must be numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

inline Expr read_expr(const nlohmann::json& j, int K, const std::string& what) {
    std::string text;
    if (j.is_string()) {
        text = j.get<std::string>();
    } else if (j.is_number()) {
        text = format_number(j.get<double>());
    } else {
        throw ConfigError(what + " must be an expression string");
    }
    try {
        return parse(text, K);
    } catch (const ParseError& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
    return j.at(key);
}

inline Box read_box(const nlohmann::json& j, const char* what) {
    Box b{read_vector(require(j, "lo"), what), read_vector(require(j, "hi"), what)};
    if (b.lo.size() != b.hi.size()) throw ConfigError(std::string(what) + ": lo/hi length mismatch");
    return b;
}

} // namespace detail

/// Builds an Economy from the JSON config document. Fails atomically with ConfigError.
inline Economy load_economy(const nlohmann::json& doc) {
    using detail::require;
    try {
        const auto& dj = require(doc, "diffusion");
        if (!require(dj, "K").is_number_integer()) throw ConfigError("K must be an integer");
        const int K = dj.at("K").get<int>();
        if (K < 1) throw ConfigError("K must be >= 1");

        DiffusionSpec d;
        d.dims = K;
        const auto& bj = require(dj, "b");
        if (!bj.is_array() || static_cast<int>(bj.size()) != K) throw ConfigError("b must have K entries");
        for (int j = 0; j < K; ++j) d.drift.push_back(detail::read_expr(bj[j], K, "b[" + std::to_string(j) + "]"));
        const auto& sj = require(dj, "sigma");
        if (!sj.is_array() || static_cast<int>(sj.size()) != K) throw ConfigError("sigma must be K x K");
        for (int i = 0; i < K; ++i) {
            if (!sj[i].is_array() || static_cast<int>(sj[i].size()) != K) {
                throw ConfigError("sigma must be K x K");
            }
            for (int j = 0; j < K; ++j) {
                d.dispersion.push_back(detail::read_expr(
                    sj[i][j], K, "sigma[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
            }
        }
        d.x0 = detail::read_vector(require(dj, "x0"), "x0");

        std::vector<AgentSpec> agents;
        const auto& aj = require(doc, "agents");
        if (!aj.is_array()) throw ConfigError("agents must be an array");
        for (std::size_t i = 0; i < aj.size(); ++i) {
            const auto& a = aj[i];
            std::string tag = "agents[" + std::to_string(i) + "]";
            AgentSpec spec;
            if (!require(a, "gamma").is_number()) throw ConfigError(tag + ".gamma must be a number");
            spec.utility.gamma = a.at("gamma").get<double>();
            spec.utility.rho = a.value("rho", 0.0);
            spec.entitlement = detail::read_expr(require(a, "entitlement"), K, tag + ".entitlement");
            spec.shares = detail::read_vector(require(a, "shares"), (tag + ".shares").c_str());
            agents.push_back(std::move(spec));
        }

        std::vector<AssetSpec> assets;
        const auto& xj = require(doc, "assets");
        if (!xj.is_array()) throw ConfigError("assets must be an array");
        for (std::size_t k = 0; k < xj.size(); ++k) {
            const auto& a = xj[k];
            std::string tag = "assets[" + std::to_string(k) + "]";
            AssetSpec spec;
            spec.dividend = a.contains("dividend") ? detail::read_expr(a["dividend"], K, tag + ".dividend")
                                                   : Expr::constant(0.0, K);
            spec.terminal = detail::read_expr(require(a, "terminal"), K, tag + ".terminal");
            spec.is_numeraire_bond = (k == 0);
            assets.push_back(std::move(spec));
        }

        double T = 0.0;
        if (doc.contains("T")) {
            T = doc.at("T").get<double>();
        } else {
            T = require(doc, "horizon").get<double>();
        }
        Box region = detail::read_box(require(doc, "region"), "region");
        Box rank = detail::read_box(require(doc, "rank_region"), "rank_region");
        return Economy(std::move(d), std::move(agents), std::move(assets), T, std::move(region),
                       std::move(rank));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema violation: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline Economy load_economy_file(const std::string& path) { return load_economy(read_json_file(path)); }

} // namespace radnerlab
