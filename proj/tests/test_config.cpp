// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include "afc/config.hpp"

using afc::config::Config;
using afc::config::ConfigError;

namespace {

std::string write_temp(const std::string& body) {
    const std::string path = "/tmp/afc_config_" + std::to_string(::getpid()) + ".conf";
    std::ofstream f(path);
    f << body;
    return path;
}

} // namespace

TEST_CASE("defaults resolve without a file") {
    auto c = Config::load(std::nullopt);
    CHECK(c.tpot_ms == 5.0);
    CHECK(c.trap_profile == "1b");
    CHECK(c.auth_header == "Authorization");
}

TEST_CASE("key = value file with comments") {
    const auto path = write_temp("# run settings\n"
                                 "tpot_ms = 7.5\n"
                                 "ttft_ms = 59\n"
                                 "trap_profile = 3b\n"
                                 "endpoint_url = http://127.0.0.1:9999/v1/stream  # local stub\n"
                                 "model = tiny\n");
    auto c = Config::load(path);
    CHECK(c.tpot_ms == 7.5);
    CHECK(c.ttft_ms == 59.0);
    CHECK(c.trap_profile == "3b");
    CHECK(c.trap_model.swap_ms_per_token == doctest::Approx(0.3));
    CHECK(c.endpoint_url == "http://127.0.0.1:9999/v1/stream");
    CHECK(c.model == "tiny");
    std::remove(path.c_str());
}

TEST_CASE("bad keys and values carry the file position") {
    const auto path = write_temp("tpot_ms = 5\nwhatever = 1\n");
    try {
        Config::load(path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(Config::load(write_temp("trap_profile = 7b\n")), ConfigError);
}

TEST_CASE("environment overrides the file for endpoint settings") {
    const auto path = write_temp("endpoint_url = http://file-wins:1/x\nauth_value = from-file\n");
    setenv("AFC_ENDPOINT_URL", "http://env-wins:2/y", 1);
    setenv("AFC_AUTH_VALUE", "from-env", 1);
    auto c = Config::load(path);
    unsetenv("AFC_ENDPOINT_URL");
    unsetenv("AFC_AUTH_VALUE");
    CHECK(c.endpoint_url == "http://env-wins:2/y");
    CHECK(c.auth_value == "from-env");
    std::remove(path.c_str());
}

TEST_CASE("report echo never leaks the auth value") {
    auto c = Config::load(std::nullopt);
    c.auth_value = "Bearer super-secret";
    auto j = c.to_json();
    CHECK(j["auth_value"] == "<redacted>");
    CHECK(j.dump().find("super-secret") == std::string::npos);
}
