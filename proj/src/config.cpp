// SPDX-License-Identifier: Apache-2.0
#include "afc/config.hpp"

#include <cstdlib>
#include <fstream>

namespace afc::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

} // namespace

void Config::set_trap_profile(const std::string& name) {
    auto m = runtime::TrapCostModel::by_name(name);
    if (!m) throw ConfigError("unknown trap cost profile: '" + name + "' (expected 1b or 3b)");
    trap_profile = name;
    trap_model = *m;
}

Config Config::load(const std::optional<std::string>& file_path) {
    Config c;
    if (file_path) {
        std::ifstream in(*file_path);
        if (!in) throw ConfigError("cannot open config file: " + *file_path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(*file_path + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            try {
                if (key == "tpot_ms") c.tpot_ms = std::stod(value);
                else if (key == "ttft_ms") c.ttft_ms = std::stod(value);
                else if (key == "seed") c.seed = std::stoull(value);
                else if (key == "trap_profile") c.set_trap_profile(value);
                else if (key == "swap_ms_per_token") c.trap_model.swap_ms_per_token = std::stod(value);
                else if (key == "recompute_quad_ms_per_token2") c.trap_model.recompute_quad_ms_per_token2 = std::stod(value);
                else if (key == "recompute_lin_ms_per_token") c.trap_model.recompute_lin_ms_per_token = std::stod(value);
                else if (key == "endpoint_url") c.endpoint_url = value;
                else if (key == "auth_header") c.auth_header = value;
                else if (key == "auth_value") c.auth_value = value;
                else if (key == "model") c.model = value;
                else throw ConfigError(*file_path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
            } catch (const std::invalid_argument&) {
                throw ConfigError(*file_path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
            }
        }
    }
    if (auto v = env("AFC_ENDPOINT_URL")) c.endpoint_url = *v;
    if (auto v = env("AFC_AUTH_HEADER")) c.auth_header = *v;
    if (auto v = env("AFC_AUTH_VALUE")) c.auth_value = *v;
    if (auto v = env("AFC_MODEL")) c.model = *v;
    return c;
}

nlohmann::json Config::to_json() const {
    return {{"tpot_ms", tpot_ms},
            {"ttft_ms", ttft_ms},
            {"seed", seed},
            {"trap_profile", trap_profile},
            {"swap_ms_per_token", trap_model.swap_ms_per_token},
            {"recompute_quad_ms_per_token2", trap_model.recompute_quad_ms_per_token2},
            {"recompute_lin_ms_per_token", trap_model.recompute_lin_ms_per_token},
            {"endpoint_url", endpoint_url},
            {"auth_header", auth_header},
            {"auth_value", auth_value.empty() ? "" : "<redacted>"},
            {"model", model}};
}

} // namespace afc::config
