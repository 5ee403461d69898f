#pragma once

// Small fixtures shared by the unit tests.

#include "radnerlab/economy.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace testing_support {

inline std::string config_path(const std::string& name) { return std::string(RADNERLAB_CONFIG_DIR) + "/" + name; }

inline nlohmann::json config_json(const std::string& name) { return radnerlab::read_json_file(config_path(name)); }

inline radnerlab::Economy config_economy(const std::string& name) {
    return radnerlab::load_economy(config_json(name));
}

/// One-dimensional economy with b = 0, sigma = 1 and the given assets and agents.
inline nlohmann::json brownian_economy(nlohmann::json agents, nlohmann::json assets, double lo = -5.0,
                                       double hi = 5.0) {
    return {{"diffusion", {{"K", 1}, {"b", {"0"}}, {"sigma", {{"1"}}}, {"x0", {0.0}}}},
            {"agents", std::move(agents)},
            {"assets", std::move(assets)},
            {"T", 1.0},
            {"region", {{"lo", {lo}}, {"hi", {hi}}}},
            {"rank_region", {{"lo", {-1.0}}, {"hi", {1.0}}}}};
}

} // namespace testing_support
