// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "afc/runtime.hpp"

namespace afc::config {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Resolved run configuration. Sources, weakest to strongest: built-in
/// defaults, config file (key = value lines, '#' comments), environment
/// (AFC_ENDPOINT_URL, AFC_AUTH_HEADER, AFC_AUTH_VALUE, AFC_MODEL), then
/// command-line flags applied by the caller.
struct Config {
    double tpot_ms = 5.0;
    double ttft_ms = 0.0;
    std::uint64_t seed = 0;
    std::string trap_profile = "1b";
    runtime::TrapCostModel trap_model = runtime::TrapCostModel::profile_1b();
    std::string endpoint_url;
    std::string auth_header = "Authorization";
    std::string auth_value;
    std::string model = "default";

    static Config load(const std::optional<std::string>& file_path);

    /// Fully-resolved echo for reports; the auth value is redacted.
    nlohmann::json to_json() const;

    void set_trap_profile(const std::string& name); // "1b", "3b"
};

} // namespace afc::config
