#pragma once

// Stage runner behind the command-line tool. Every stage persists its outputs
// in the output directory; downstream stages reload them, so stages can be
// rerun one at a time. Reports carry no timestamps: identical configs give
// identical bytes.

#include "radnerlab/completeness.hpp"
#include "radnerlab/economy.hpp"
#include "radnerlab/markov.hpp"
#include "radnerlab/planner.hpp"
#include "radnerlab/pricing.hpp"
#include "radnerlab/radner.hpp"
#include "radnerlab/validation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace radnerlab {

inline constexpr int schema_version = 1;

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunConfig {
    nlohmann::json economy;  // resolved economy document
    std::vector<int> nodes;
    int time_steps = 200;
    int mc_paths = 10000;
    int mc_steps = 200;
    std::uint64_t seed = 0;
    double negishi_tolerance = 1e-6;
    int negishi_max_iterations = 50;
    double det_threshold = 1e-8;
    int validation_samples = 256;
    int gains_paths = 10000;
    int gains_steps = 200;
    int gains_record_every = 50;
    int radner_paths = 2000;
    int radner_steps = 100;
    int radner_sample_paths = 0;
    std::string output = "out";

    /// Settings that determine the numbers, in canonical (sorted-key) form.
    nlohmann::json canonical() const {
        nlohmann::json j;
        j["economy"] = economy;
        j["grid"] = {{"nodes", nodes}, {"time_steps", time_steps}};
        j["mc"] = {{"paths", mc_paths}, {"steps", mc_steps}, {"seed", seed}};
        j["negishi"] = {{"tolerance", negishi_tolerance}, {"max_iterations", negishi_max_iterations}};
        j["completeness"] = {{"threshold", det_threshold}};
        j["validation"] = {{"samples", validation_samples}};
        j["gains"] = {{"paths", gains_paths}, {"steps", gains_steps}, {"record_every", gains_record_every}};
        j["radner"] = {{"paths", radner_paths}, {"steps", radner_steps}, {"sample_paths", radner_sample_paths}};
        return j;
    }

    std::string hash() const { return fnv1a_hex(canonical().dump()); }
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    std::optional<double> grid_scale;
};

namespace detail {

inline int positive_int(const nlohmann::json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 1) {
        throw ConfigError(std::string(key) + " must be a positive integer");
    }
    return j.at(key).get<int>();
}

inline double positive_real(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number() || !(j.at(key).get<double>() > 0.0)) {
        throw ConfigError(std::string(key) + " must be a positive number");
    }
    return j.at(key).get<double>();
}

inline nlohmann::json section(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key)) return nlohmann::json::object();
    if (!doc.at(key).is_object()) throw ConfigError(std::string(key) + " must be an object");
    return doc.at(key);
}

} // namespace detail

/// Reads a run config. The economy is given inline or as a path relative to the config file.
inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  const ConfigOverrides& over = {}) {
    using detail::positive_int;
    using detail::positive_real;
    using detail::section;
    RunConfig c;
    try {
        if (!doc.is_object() || !doc.contains("economy")) throw ConfigError("missing field 'economy'");
        const auto& ej = doc.at("economy");
        if (ej.is_string()) {
            c.economy = read_json_file((base_dir / ej.get<std::string>()).string());
        } else if (ej.is_object()) {
            c.economy = ej;
        } else {
            throw ConfigError("economy must be a path or an object");
        }
        const Economy econ = load_economy(c.economy);

        auto grid = section(doc, "grid");
        c.time_steps = positive_int(grid, "time_steps", c.time_steps);
        if (grid.contains("nodes")) {
            const auto& nj = grid.at("nodes");
            if (nj.is_number_integer()) {
                c.nodes.assign(econ.dims(), nj.get<int>());
            } else {
                c.nodes = nj.get<std::vector<int>>();
            }
        } else {
            c.nodes.assign(econ.dims(), 101);
        }
        if (static_cast<int>(c.nodes.size()) != econ.dims()) throw ConfigError("grid.nodes must have K entries");
        for (int n : c.nodes) {
            if (n < 3) throw ConfigError("grid.nodes must be >= 3");
        }

        auto mc = section(doc, "mc");
        c.mc_paths = positive_int(mc, "paths", c.mc_paths);
        c.mc_steps = positive_int(mc, "steps", c.mc_steps);
        if (over.seed) {
            c.seed = *over.seed;
        } else if (mc.contains("seed") && (mc.at("seed").is_number_unsigned() ||
                                           (mc.at("seed").is_number_integer() && mc.at("seed").get<long long>() >= 0))) {
            c.seed = mc.at("seed").get<std::uint64_t>();
        } else {
            throw ConfigError("mc.seed is mandatory (nonnegative integer), or pass --seed");
        }

        auto neg = section(doc, "negishi");
        c.negishi_tolerance = positive_real(neg, "tolerance", c.negishi_tolerance);
        c.negishi_max_iterations = positive_int(neg, "max_iterations", c.negishi_max_iterations);
        auto comp = section(doc, "completeness");
        c.det_threshold = positive_real(comp, "threshold", c.det_threshold);
        auto val = section(doc, "validation");
        c.validation_samples = positive_int(val, "samples", c.validation_samples);
        auto gains = section(doc, "gains");
        c.gains_paths = positive_int(gains, "paths", c.gains_paths);
        c.gains_steps = positive_int(gains, "steps", c.gains_steps);
        c.gains_record_every = positive_int(gains, "record_every", c.gains_record_every);
        auto rad = section(doc, "radner");
        c.radner_paths = positive_int(rad, "paths", c.radner_paths);
        c.radner_steps = positive_int(rad, "steps", c.radner_steps);
        if (rad.contains("sample_paths")) c.radner_sample_paths = rad.at("sample_paths").get<int>();
        if (doc.contains("output")) c.output = doc.at("output").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    if (over.output) c.output = *over.output;
    if (over.grid_scale) {
        const double f = *over.grid_scale;
        if (!(f > 0.0)) throw ConfigError("--grid-scale must be positive");
        for (int& n : c.nodes) n = std::max(3, static_cast<int>(std::lround((n - 1) * f)) + 1);
        c.time_steps = std::max(1, static_cast<int>(std::lround(c.time_steps * f)));
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path, const ConfigOverrides& over = {}) {
    auto doc = read_json_file(path);
    return parse_run_config(doc, std::filesystem::path(path).parent_path(), over);
}

// ---------------------------------------------------------------------------
// Grid-function CSV files

/// Writes rows t, x_1..x_K, columns... for every time node and grid node.
inline void write_field_csv(const std::filesystem::path& file, const Grid& g, const std::vector<std::string>& names,
                            const std::vector<const SpaceTimeField*>& fields) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << "t";
    for (int j = 1; j <= g.dims(); ++j) out << ",x" << j;
    for (const auto& n : names) out << "," << n;
    out << "\n";
    std::vector<double> x(g.dims());
    for (std::size_t m = 0; m < g.times.size(); ++m) {
        for (std::size_t node = 0; node < g.node_count; ++node) {
            g.coordinates(node, x);
            out << format_g17(g.times[m]);
            for (double v : x) out << "," << format_g17(v);
            for (const auto* f : fields) out << "," << format_g17((*f)(m, node));
            out << "\n";
        }
    }
}

/// Flow values at every time node followed by the lump at T (lump column 1).
inline void write_flow_lump_csv(const std::filesystem::path& file, const Grid& g, const SpaceTimeField& flow,
                                const std::vector<double>& lump) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << "t";
    for (int j = 1; j <= g.dims(); ++j) out << ",x" << j;
    out << ",lump,value\n";
    std::vector<double> x(g.dims());
    auto row = [&](double t, std::size_t node, int is_lump, double v) {
        g.coordinates(node, x);
        out << format_g17(t);
        for (double c : x) out << "," << format_g17(c);
        out << "," << is_lump << "," << format_g17(v) << "\n";
    };
    for (std::size_t m = 0; m < g.times.size(); ++m) {
        for (std::size_t node = 0; node < g.node_count; ++node) row(g.times[m], node, 0, flow(m, node));
    }
    for (std::size_t node = 0; node < g.node_count; ++node) row(g.horizon(), node, 1, lump[node]);
}

/// Reads fields written by write_field_csv, checking the coordinates against the grid.
inline std::vector<SpaceTimeField> read_field_csv(const std::filesystem::path& file, const Grid& g,
                                                  std::size_t columns) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string() + " (run the upstream stage first)");
    std::string line;
    std::getline(in, line);
    std::vector<SpaceTimeField> fields(columns, SpaceTimeField::like(g));
    std::vector<double> x(g.dims());
    const std::size_t width = 1 + g.dims() + columns;
    std::vector<double> row(width);
    for (std::size_t m = 0; m < g.times.size(); ++m) {
        for (std::size_t node = 0; node < g.node_count; ++node) {
            if (!std::getline(in, line)) throw Error(file.string() + ": too few rows for the configured grid");
            std::istringstream ss(line);
            std::string cell;
            std::size_t c = 0;
            while (std::getline(ss, cell, ',') && c < width) row[c++] = std::stod(cell);
            if (c != width) throw Error(file.string() + ": malformed row");
            g.coordinates(node, x);
            bool match = std::abs(row[0] - g.times[m]) <= 1e-12 * (1.0 + std::abs(g.times[m]));
            for (int j = 0; j < g.dims(); ++j) match = match && std::abs(row[1 + j] - x[j]) <= 1e-12 * (1.0 + std::abs(x[j]));
            if (!match) throw Error(file.string() + " does not match the configured grid");
            for (std::size_t k = 0; k < columns; ++k) fields[k](m, node) = row[1 + g.dims() + k];
        }
    }
    return fields;
}

inline void write_json(const std::filesystem::path& file, const nlohmann::ordered_json& j) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct StageResult {
    std::string stage;
    bool ok = false;
    std::string verdict;
    std::filesystem::path report;
    nlohmann::ordered_json body;
};

class Pipeline {
public:
    explicit Pipeline(RunConfig cfg)
        : cfg_(std::move(cfg)),
          econ_(load_economy(cfg_.economy)),
          grid_(build_grid(econ_.region(), cfg_.nodes, econ_.horizon(), cfg_.time_steps, econ_.diffusion().x0)),
          out_(cfg_.output) {
        std::filesystem::create_directories(out_);
    }

    const RunConfig& config() const { return cfg_; }
    const Economy& economy() const { return econ_; }
    const Grid& grid() const { return grid_; }
    const std::filesystem::path& output() const { return out_; }

    StageResult validate() {
        auto& v = validation();
        auto j = header("validate");
        j["verdict"] = v.passed() ? "PASS" : "FAIL";
        j["report"] = v.to_json();
        return finish("validate", v.passed(), j, "validation.json");
    }

    StageResult solve_ad() {
        NegishiOptions opt;
        opt.tolerance = cfg_.negishi_tolerance;
        opt.max_iterations = cfg_.negishi_max_iterations;
        opt.quad = {cfg_.mc_paths, cfg_.mc_steps, cfg_.seed};
        ADEquilibrium eq = negishi_solve(econ_, opt, grid_);
        const int I = econ_.agent_count();
        auto j = header("solve-ad");
        j["verdict"] = eq.converged ? "CONVERGED" : "NOT-CONVERGED";
        j["lambda"] = eq.lambda;
        j["budget_residuals"] = eq.residuals;
        j["iterations"] = eq.iterations;
        j["degenerate_agents"] = eq.degenerate_agents;
        double feas = 0.0;
        double foc = 0.0;
        std::vector<double> x(grid_.dims());
        for (std::size_t node = 0; node < grid_.node_count; ++node) {
            grid_.coordinates(node, x);
            for (std::size_t m = 0; m < grid_.times.size(); ++m) {
                const double t = grid_.times[m];
                double sum = 0.0;
                for (int i = 0; i < I; ++i) {
                    const double c = eq.allocation[i](m, node);
                    sum += c;
                    foc = std::max(foc, std::abs(eq.lambda[i] * eq.utilities[i].marginal(t, c) / eq.psi(m, node) - 1.0));
                }
                const double eps = econ_.aggregate().flow(t, x);
                feas = std::max(feas, std::abs(sum - eps) / eps);
            }
        }
        j["feasibility_max_rel"] = feas;
        j["first_order_max_rel"] = foc;
        j["psi_at_x0"] = interpolate(grid_, eq.psi, 0.0, econ_.diffusion().x0);
        write_flow_lump_csv(out_ / "psi.csv", grid_, eq.psi, eq.psi_terminal);
        for (int i = 0; i < I; ++i) {
            write_flow_lump_csv(out_ / ("alloc_" + std::to_string(i + 1) + ".csv"), grid_, eq.allocation[i],
                                eq.allocation_terminal[i]);
        }
        return finish("solve-ad", eq.converged, j, "ad_equilibrium.json");
    }

    StageResult price() {
        const ADEquilibrium eq = load_equilibrium();
        PricingSolution p = price_all_assets(econ_, eq, grid_);
        const int A = econ_.asset_count();
        std::vector<std::string> names;
        std::vector<const SpaceTimeField*> fields;
        for (int k = 0; k < A; ++k) {
            names.push_back("s" + std::to_string(k));
            fields.push_back(&p.prices[k]);
        }
        write_field_csv(out_ / "prices.csv", grid_, names, fields);

        auto j = header("price");
        const auto& x0 = econ_.diffusion().x0;
        StatePrices sp(econ_, eq.lambda);
        auto& assets = j["assets"] = nlohmann::ordered_json::array();
        bool agree = true;
        for (int k = 0; k < A; ++k) {
            const double pde = interpolate(grid_, p.prices[k], 0.0, x0);
            auto mc = mc_expectation(
                econ_.diffusion(),
                [&](double t, std::span<const double> x) {
                    return k == 0 ? 0.0 : econ_.dividend_flow(k)(t, x) * sp.flow(t, x);
                },
                [&](std::span<const double> x) { return econ_.dividend_lump(k)(econ_.horizon(), x) * sp.lump(x); },
                0.0, x0, econ_.horizon(), cfg_.mc_paths, cfg_.mc_steps, cfg_.seed);
            const bool ok = std::abs(pde - mc.estimate) <= 3.0 * mc.std_error + 1e-12 * std::abs(pde);
            agree = agree && ok;
            assets.push_back({{"asset", k},
                              {"pde_price_at_x0", pde},
                              {"mc_price_at_x0", mc.estimate},
                              {"mc_std_error", mc.std_error},
                              {"within_3_std_errors", ok},
                              {"pde_residual_max", p.residuals[k].max_abs},
                              {"pde_residual_rms", p.residuals[k].rms}});
        }
        j["min_price"] = p.min_price;
        j["min_numeraire"] = p.min_numeraire;
        j["theta"] = p.theta;
        j["time_steps"] = p.time_steps;

        GainsOptions go{cfg_.gains_paths, cfg_.gains_steps, cfg_.seed, cfg_.gains_record_every};
        auto drift = martingale_drift_test(equilibrium_gains(econ_, eq, p, grid_, go));
        auto& dj = j["martingale_drift"];
        dj["paths"] = go.n_paths;
        dj["steps"] = go.steps;
        dj["flags"] = drift.flags;
        auto& entries = dj["entries"] = nlohmann::ordered_json::array();
        for (const auto& e : drift.entries) {
            entries.push_back({{"asset", e.asset},
                               {"t1", e.t1},
                               {"t2", e.t2},
                               {"mean", e.mean},
                               {"std_error", e.std_error},
                               {"flagged", e.flagged}});
        }
        const bool ok = agree && drift.flags == 0;
        j["verdict"] = ok ? "PASS" : "FAIL";
        j["smoothness"] = "UNVERIFIABLE: analyticity of prices is reported through PDE residuals only";
        return finish("price", ok, j, "pricing_diag.json");
    }

    StageResult completeness() {
        PricingSolution p = load_prices();
        auto rep = completeness_report(econ_, p, grid_, cfg_.det_threshold);
        write_field_csv(out_ / "det.csv", grid_, {"det", "scaled_det"}, {&rep.det, &rep.scaled_det});
        auto j = header("completeness");
        j["verdict"] = rep.verdict();
        j["threshold"] = rep.threshold;
        j["nodes_checked"] = rep.nodes_checked;
        j["nodes_below_threshold"] = rep.nodes_below;
        j["fraction_below_threshold"] = rep.fraction_below;
        j["min_abs_det"] = rep.min_abs_det;
        j["min_scaled_det"] = rep.min_scaled_det;
        j["minimum_at"] = witness_json(rep.minimum);
        j["terminal_min_scaled_det"] = rep.terminal_min_scaled_det;
        j["terminal_max_scaled_det"] = rep.terminal_max_scaled_det;
        j["terminal_rank"] = {{"min_abs_det_Dh", rep.terminal_rank.min_abs_det},
                              {"x", rep.terminal_rank.argmin},
                              {"samples", rep.terminal_rank.samples}};
        j["condition_number_quantiles"] = {{"levels", {0.0, 0.5, 0.9, 0.99, 1.0}},
                                           {"values", rep.condition_quantiles}};
        j["quotient_rule_gap"] = rep.quotient_rule_gap;
        auto& w = j["witnesses"] = nlohmann::ordered_json::array();
        for (const auto& d : rep.witnesses) w.push_back(witness_json(d));
        j["note"] = "verdict is relative to the grid; almost-sure invertibility is not claimed";
        return finish("completeness", rep.complete, j, "completeness.json");
    }

    StageResult radner() {
        const ADEquilibrium eq = load_equilibrium();
        PricingSolution p = load_prices();
        RadnerOptions opt;
        opt.n_paths = cfg_.radner_paths;
        opt.steps = cfg_.radner_steps;
        opt.seed = cfg_.seed;
        opt.sample_paths = cfg_.radner_sample_paths;
        RadnerSimulator sim(econ_, eq, p, grid_, opt.singular_tol);
        auto out = sim.run(opt);

        auto j = header("radner");
        j["paths"] = out.n_paths;
        j["steps"] = out.steps;
        j["valid_paths"] = out.valid_paths;
        j["exits"] = out.exits;
        j["excluded"] = out.excluded;
        j["singular_nodes"] = out.singular_nodes;
        j["portfolio_clearing_max_rel"] = out.clearing_max;
        j["consumption_clearing_max_rel"] = out.consumption_clearing_max;
        double allowance = 0.0;
        for (const auto& a : out.agents) allowance = std::max(allowance, a.max_abs_error);
        bool ok = out.valid && out.clearing_max <= 1e-6 && out.consumption_clearing_max <= 1e-10;
        auto& agents = j["agents"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < out.agents.size(); ++i) {
            const auto& a = out.agents[i];
            const bool terminal_ok = a.terminal_rms <= 5.0 * a.mid_rms || a.terminal_rms <= 1e-8;
            const bool admissible = a.admissibility_min >= -allowance;
            ok = ok && terminal_ok && admissible;
            agents.push_back({{"agent", i + 1},
                              {"initial_value", a.initial_value},
                              {"initial_budget_gap", a.initial_gap},
                              {"terminal_rms_error", a.terminal_rms},
                              {"mid_rms_error", a.mid_rms},
                              {"max_abs_error", a.max_abs_error},
                              {"terminal_consistent", terminal_ok},
                              {"admissibility_margin_min", a.admissibility_min},
                              {"admissible_within_allowance", admissible},
                              {"max_portfolio_deviation_from_shares", a.max_share_deviation}});
        }
        j["admissibility_allowance"] = allowance;
        j["admissibility_note"] = "sampled surrogate for the lower martingale bound";
        if (!out.valid) j["invalid_reason"] = out.invalid_reason;
        j["verdict"] = ok ? "PASS" : "FAIL";
        if (cfg_.radner_sample_paths > 0) write_radner_samples(out);
        return finish("radner", ok, j, "radner.json");
    }

    std::vector<StageResult> all() {
        std::vector<StageResult> r;
        r.push_back(validate());
        r.push_back(solve_ad());
        r.push_back(price());
        r.push_back(completeness());
        r.push_back(radner());
        return r;
    }

private:
    ValidationReport& validation() {
        if (!validation_) validation_ = validate_assumptions(econ_, cfg_.validation_samples, cfg_.seed);
        return *validation_;
    }

    nlohmann::ordered_json header(const std::string& stage) {
        nlohmann::ordered_json j;
        j["schema_version"] = schema_version;
        j["stage"] = stage;
        j["config_hash"] = cfg_.hash();
        j["seed"] = cfg_.seed;
        j["assumptions"] = validation().verdicts();
        return j;
    }

    StageResult finish(const std::string& stage, bool ok, nlohmann::ordered_json& j, const std::string& file) {
        StageResult r;
        r.stage = stage;
        r.ok = ok;
        r.verdict = j.value("verdict", "");
        r.report = out_ / file;
        write_json(r.report, j);
        r.body = j;
        return r;
    }

    static nlohmann::ordered_json witness_json(const DetWitness& w) {
        return {{"t", w.t}, {"x", w.x}, {"det", w.det}, {"scaled_det", w.scaled_det}};
    }

    ADEquilibrium load_equilibrium() const {
        auto file = out_ / "ad_equilibrium.json";
        if (!std::filesystem::exists(file)) throw Error("missing " + file.string() + " (run solve-ad first)");
        auto doc = read_json_file(file.string());
        if (doc.value("config_hash", "") != cfg_.hash()) {
            throw Error(file.string() + " was produced by a different configuration");
        }
        auto lambda = doc.at("lambda").get<std::vector<double>>();
        if (static_cast<int>(lambda.size()) != econ_.agent_count()) throw Error("lambda has the wrong length");
        ADEquilibrium eq = assemble_equilibrium(econ_, lambda, grid_);
        eq.converged = doc.value("verdict", "") == "CONVERGED";
        eq.residuals = doc.at("budget_residuals").get<std::vector<double>>();
        return eq;
    }

    PricingSolution load_prices() const {
        PricingSolution p;
        p.prices = read_field_csv(out_ / "prices.csv", grid_, econ_.asset_count());
        p.time_steps = grid_.time_steps();
        fill_jacobians(grid_, p);
        return p;
    }

    void write_radner_samples(const RadnerOutcome& out) const {
        std::ofstream f(out_ / "radner_paths.csv");
        const int K = grid_.dims();
        const int I = econ_.agent_count();
        const int A = econ_.asset_count();
        const int M = out.steps;
        f << "path,t";
        for (int j = 1; j <= K; ++j) f << ",x" << j;
        for (int i = 1; i <= I; ++i) {
            for (int k = 0; k < A; ++k) f << ",theta" << i << "_" << k;
            f << ",V" << i << ",W" << i;
        }
        f << "\n";
        for (std::size_t p = 0; p < out.samples.size(); ++p) {
            const auto& s = out.samples[p];
            for (int m = 0; m <= M; ++m) {
                f << p << "," << format_g17(out.times[m]);
                for (int j = 0; j < K; ++j) f << "," << format_g17(s.states[static_cast<std::size_t>(m) * K + j]);
                for (int i = 0; i < I; ++i) {
                    const std::size_t at = static_cast<std::size_t>(i) * (M + 1) + m;
                    for (int k = 0; k < A; ++k) f << "," << format_g17(s.theta[at * A + k]);
                    f << "," << format_g17(s.value[at]) << "," << format_g17(s.target[at]);
                }
                f << "\n";
            }
        }
    }

    RunConfig cfg_;
    Economy econ_;
    Grid grid_;
    std::filesystem::path out_;
    std::optional<ValidationReport> validation_;
};

} // namespace radnerlab
