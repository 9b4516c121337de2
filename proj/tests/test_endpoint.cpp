// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "afc/endpoint.hpp"
#include "afc/runtime.hpp"

using namespace afc;
using namespace afc::endpoint;

TEST_CASE("url parsing") {
    auto u = parse_url("http://127.0.0.1:8089/v1/stream");
    CHECK(u.host == "127.0.0.1");
    CHECK(u.port == 8089);
    CHECK(u.path == "/v1/stream");
    auto bare = parse_url("http://example.test");
    CHECK(bare.port == 80);
    CHECK(bare.path == "/");
    CHECK_THROWS_AS(parse_url("ftp://x"), EndpointError);
}

namespace {

const char* kScript =
    "[CALL] j1 [HEAD] lookup_one() [END]"
    "[TRAP][END]"
    "[CALL] j2 [HEAD] lookup_two() [END]"
    "[TRAP][END]"
    "done."
    "[EOS]";

runtime::FunctionRegistry stub_registry() {
    runtime::FunctionRegistry reg;
    reg.add({"lookup_one", 20.0, "first", nullptr});
    reg.add({"lookup_two", 15.0, "second", nullptr});
    return reg;
}

} // namespace

TEST_CASE("naive endpoint session restarts per interrupt and pays TTFT") {
    StubServerConfig sc;
    sc.script = kScript;
    sc.ttft_ms = 60.0;
    sc.tpot_ms = 1.0;
    StubServer server(sc);
    server.start();

    EndpointConfig ec;
    ec.url = server.url();
    EndpointSource source(ec, "");
    auto registry = stub_registry();
    runtime::EngineConfig cfg;
    cfg.naive_restarts = true;
    runtime::LiveSession session(source, registry, cfg);
    auto transcript = session.run();
    server.stop();

    CHECK_FALSE(transcript.error);
    CHECK(transcript.calls == 2);
    CHECK(transcript.interrupts == 2);
    CHECK(source.restarts() == 2); // one fresh request per injected interrupt

    // TTFT gap: the first token after each injection arrives >= 60 ms later.
    Tick inject_at = -1;
    int gaps_checked = 0;
    for (const auto& e : transcript.events) {
        if (e.kind == runtime::EventKind::InterruptInjected) inject_at = e.t;
        else if (e.kind == runtime::EventKind::Token && inject_at >= 0 &&
                 !e.fields.value("injected", false)) {
            CHECK(ms_from_ticks(e.t - inject_at) >= 55.0);
            inject_at = -1;
            ++gaps_checked;
        }
    }
    CHECK(gaps_checked == 2);
    CHECK(runtime::check_transcript(transcript).empty());
}

TEST_CASE("bad auth yields a sanitized error and no token leak") {
    StubServerConfig sc;
    sc.script = kScript;
    sc.auth_header = "Authorization";
    sc.auth_value = "Bearer secret-token-123";
    StubServer server(sc);
    server.start();

    EndpointConfig ec;
    ec.url = server.url();
    ec.auth_value = "Bearer wrong-guess-456";
    ec.max_attempts = 1;
    EndpointSource source(ec, "");
    std::string message;
    try {
        source.next_token();
        FAIL("expected EndpointError");
    } catch (const EndpointError& e) {
        message = e.what();
    }
    server.stop();
    CHECK(message.find("401") != std::string::npos);
    CHECK(message.find("wrong-guess") == std::string::npos);
    CHECK(message.find("secret-token") == std::string::npos);
}

TEST_CASE("connection failure is retried, then reported") {
    EndpointConfig ec;
    ec.url = "http://127.0.0.1:1"; // nothing listens here
    ec.max_attempts = 2;
    ec.backoff_ms = 10;
    EndpointSource source(ec, "");
    CHECK_THROWS_AS(source.next_token(), EndpointError);
}
