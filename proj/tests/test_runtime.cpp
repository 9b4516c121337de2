// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <thread>

#include "afc/runtime.hpp"
#include "helpers.hpp"

using namespace afc;
using namespace afc::runtime;

TEST_CASE("trap cost model profiles and decision rule") {
    const TrapCostModel small = TrapCostModel::profile_1b();
    const TrapCostModel large = TrapCostModel::profile_3b();

    // 300-token context, next interrupt expected in 100 ms.
    CHECK(small.recompute_ms(300) == doctest::Approx(44.7));
    CHECK(small.swap_ms(300) == doctest::Approx(120.0));
    CHECK(handle_trap(300, 100.0, small) == TrapDecision::Recompute);

    CHECK(large.recompute_ms(300) == doctest::Approx(165.0));
    CHECK(large.swap_ms(300) == doctest::Approx(90.0));
    CHECK(handle_trap(300, 100.0, large) == TrapDecision::Swap);

    // Zero wait: any positive cost beats waiting it out.
    CHECK(handle_trap(300, 0.0, small) == TrapDecision::Retain);
    CHECK(handle_trap(300, 0.0, large) == TrapDecision::Retain);

    CHECK_THROWS_AS(handle_trap(300, std::numeric_limits<double>::infinity(), small), NoPendingJobs);
}

TEST_CASE("property: retain region is a down-set in wait") {
    const TrapCostModel m = TrapCostModel::profile_1b();
    Rng rng(404);
    for (int t = 0; t < 500; ++t) {
        const std::int64_t n = rng.uniform_int(0, 3000);
        const double boundary = std::min(m.swap_ms(n), m.recompute_ms(n));
        const double wait = rng.uniform(0.0, 2000.0);
        const bool retain = handle_trap(n, wait, m) == TrapDecision::Retain;
        CHECK(retain == (boundary > wait));
    }
}

TEST_CASE("interrupt queue keeps FIFO order across producers") {
    InterruptQueue q;
    q.push({"a", "1", 0});
    q.push({"b", "2", 1});
    q.push({"c", "3", 2});
    auto drained = q.drain();
    REQUIRE(drained.size() == 3);
    CHECK(drained[0].id == "a");
    CHECK(drained[2].id == "c");
    CHECK(q.empty());

    // Multi-producer hammer: every enqueue lands exactly once.
    std::atomic<int> produced{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w)
        workers.emplace_back([&q, &produced, w] {
            for (int i = 0; i < 250; ++i) {
                q.push({"w" + std::to_string(w), std::to_string(i), i});
                produced.fetch_add(1);
            }
        });
    std::size_t got = 0;
    while (got < 1000) {
        got += q.drain().size();
        std::this_thread::yield();
    }
    for (auto& t : workers) t.join();
    CHECK(got == 1000);
    CHECK(produced.load() == 1000);
}

TEST_CASE("drain_interrupts: all-or-nothing on the critical flag, FIFO order") {
    ScriptSource sink("", 1.0);
    InterruptQueue q;
    q.push({"a", "1", 0});
    q.push({"b", "2", 1});
    q.push({"c", "3", 2});
    CHECK(drain_interrupts(q, /*critical=*/true, sink) == 0); // deferred
    CHECK(q.size() == 3);

    std::vector<std::string> injected_ids;
    const std::size_t n = drain_interrupts(q, false, sink, {}, [&](const cml::CmlBlock& b) {
        injected_ids.push_back(b.interrupt().id);
    });
    CHECK(n == 3);
    CHECK(injected_ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(sink.context().find("[INTR] a [HEAD] 1 [END]") != std::string::npos);
    CHECK(q.empty());
    CHECK(drain_interrupts(q, false, sink) == 0); // empty queue
}

TEST_CASE("leading identifier extraction") {
    CHECK(leading_identifier("put(x, y)") == "put");
    CHECK(leading_identifier("  spaced_name (1)") == "spaced_name");
    CHECK(leading_identifier("9starts_with_digit()") == "");
    CHECK(leading_identifier("") == "");
}

namespace {

taskmodel::TaskGraph two_chain(double e_a = 300.0, double e_b = 50.0) {
    taskmodel::TaskGraph g;
    g.set_tpot_ms(5.0);
    g.add_node({"a", "first_step", 10, e_a, {}});
    g.add_node({"b", "second_step", 10, e_b, {"a"}});
    return g;
}

EngineConfig quiet_config() {
    EngineConfig ec;
    ec.record_transcript = true;
    return ec;
}

} // namespace

TEST_CASE("graph session on a two-node chain: call, trap, interrupt, call, trap, interrupt") {
    auto g = two_chain();
    GraphSource source(g, PickPolicy::Lpt, 1);
    SessionEngine engine(source,
                         [&](const cml::FunctionCall& call) {
                             ResolvedCall rc;
                             rc.known = true;
                             rc.name = leading_identifier(call.body);
                             rc.exec_ms = g.node(*call.id).exec_ms;
                             rc.est_exec_ms = rc.exec_ms;
                             rc.value = "done";
                             return rc;
                         },
                         quiet_config());
    auto transcript = engine.run();

    CHECK(transcript.calls == 2);
    CHECK(transcript.traps == 2);
    CHECK(transcript.interrupts == 2);
    // Block sequence parsed back from the stream.
    cml::Parser parser;
    std::vector<std::string> kinds;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        auto res = parser.feed(tok, injected);
        if (!res.block) continue;
        kinds.push_back(res.block->is_call() ? "call(" + *res.block->call().id + ")"
                        : res.block->is_trap() ? "trap"
                                               : "intr(" + res.block->interrupt().id + ")");
    }
    CHECK(kinds == std::vector<std::string>{"call(a)", "trap", "intr(a)", "call(b)", "trap", "intr(b)"});
    // Gen 50 ms, wait 300, gen 50, wait 50: makespan 450.
    CHECK(transcript.makespan_ms() == doctest::Approx(450.0));
    CHECK(check_transcript(transcript).empty());
}

TEST_CASE("decode_step event sequence and deferred injection") {
    auto g = two_chain();
    GraphSource source(g, PickPolicy::Lpt, 1);
    FunctionRegistry reg = FunctionRegistry::for_graph(g);
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());

    // Steps: tokens of [CALL] a [HEAD] body -> Token; [END] -> CallDetected.
    std::vector<EventKind> seen;
    for (int i = 0; i < 5; ++i) seen.push_back(engine.step());
    CHECK(seen == std::vector<EventKind>{EventKind::Token, EventKind::Token, EventKind::Token,
                                         EventKind::Token, EventKind::CallDetected});
    // Trap block follows; the interrupt is injected only after the trap ends.
    CHECK(engine.step() == EventKind::Token);        // [TRAP]
    CHECK(engine.step() == EventKind::TrapDetected); // [END]
    CHECK(engine.step() == EventKind::InterruptInjected);
    for (int i = 0; i < 4; ++i) CHECK(engine.step() == EventKind::Token); // [CALL] b [HEAD] body
    CHECK(engine.step() == EventKind::CallDetected); // [END] closes call b
}

TEST_CASE("eos with empty queue and no live jobs ends the session") {
    taskmodel::TaskGraph empty;
    GraphSource source(empty, PickPolicy::Lpt, 1);
    FunctionRegistry reg;
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    CHECK(engine.step() == EventKind::SessionEnd);
    CHECK(engine.done());
}

TEST_CASE("unknown function completes with an error interrupt instead of crashing") {
    // The error interrupt lands right after the block closes, so the script
    // carries on with prose instead of trapping.
    ScriptSource source("[CALL] job1 [HEAD] no_such_fn(1) [END] noted, moving on [EOS]", 5.0);
    FunctionRegistry reg; // empty
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();
    CHECK_FALSE(transcript.error);
    bool saw_error_interrupt = false;
    cml::Parser parser;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        auto res = parser.feed(tok, injected);
        if (res.block && res.block->is_interrupt())
            saw_error_interrupt = res.block->interrupt().id == "job1" &&
                                  res.block->interrupt().value.rfind("error: unknown function", 0) == 0;
    }
    CHECK(saw_error_interrupt);
}

TEST_CASE("single-call script: one call, one injection, then session end") {
    ScriptSource source("[CALL] only [HEAD] ping() [END][TRAP][END][EOS]", 5.0);
    FunctionRegistry reg;
    reg.add({"ping", 30.0, "pong", nullptr});
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();
    int calls = 0, injections = 0;
    for (const auto& e : transcript.events) {
        calls += e.kind == EventKind::CallDetected;
        injections += e.kind == EventKind::InterruptInjected;
    }
    CHECK(calls == 1);
    CHECK(injections == 1);
    REQUIRE(!transcript.events.empty());
    CHECK(transcript.events.back().kind == EventKind::SessionEnd);
}

TEST_CASE("anonymous calls complete silently") {
    ScriptSource source("[CALL] ping() [END] closing words [EOS]", 5.0);
    FunctionRegistry reg;
    reg.add({"ping", 10.0, "pong", nullptr});
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();
    CHECK(transcript.calls == 1);
    CHECK(transcript.interrupts == 0);
    CHECK_FALSE(transcript.error);
}

TEST_CASE("completion order follows execution time, not dispatch order") {
    ScriptSource source("[CALL] slow [HEAD] slow_fn() [END][CALL] fast [HEAD] fast_fn() [END][TRAP][END][EOS]",
                        1.0);
    FunctionRegistry reg;
    reg.add({"slow_fn", 50.0, "s", nullptr});
    reg.add({"fast_fn", 10.0, "f", nullptr});
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();
    std::vector<std::string> completions;
    for (const auto& e : transcript.events)
        if (e.kind == EventKind::Completion) completions.push_back(e.fields.at("id").get<std::string>());
    CHECK(completions == std::vector<std::string>{"fast", "slow"});
}

TEST_CASE("florist script: the dependent call dispatches after both interrupts") {
    // search_nearby and put run concurrently; text goes out only once both
    // results are in the context.
    ScriptSource source("Let me handle that. "
                        "[CALL] s [HEAD] search_nearby(radius=2) [END]"
                        "[CALL] p [HEAD] put(note) [END]"
                        "[TRAP][END]"
                        "[CALL] t [HEAD] text(s, p) [END]"
                        "[TRAP][END][EOS]",
                        5.0);
    FunctionRegistry reg;
    reg.add({"search_nearby", 250.0, "florist_list", nullptr});
    reg.add({"put", 100.0, "note_id", nullptr});
    reg.add({"text", 80.0, "sent", nullptr});
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();
    CHECK_FALSE(transcript.error);

    Tick text_dispatch = -1;
    std::vector<Tick> interrupt_times;
    for (const auto& e : transcript.events) {
        if (e.kind == EventKind::Dispatch && e.fields.at("id") == "t") text_dispatch = e.t;
        if (e.kind == EventKind::InterruptInjected && text_dispatch < 0) interrupt_times.push_back(e.t);
    }
    REQUIRE(text_dispatch >= 0);
    REQUIRE(interrupt_times.size() >= 1);
    for (Tick t : interrupt_times) CHECK(text_dispatch >= t);
    CHECK(check_transcript(transcript).empty());
}

TEST_CASE("trap flow: TrapDetected, one decision, then a later injection") {
    auto g = two_chain();
    GraphSource source(g, PickPolicy::Lpt, 1);
    FunctionRegistry reg = FunctionRegistry::for_graph(g);
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    auto transcript = engine.run();

    int decisions = 0;
    bool saw_trap = false, injection_after_trap = false;
    Tick trap_at = 0;
    for (const auto& e : transcript.events) {
        if (e.kind == EventKind::TrapDetected && !saw_trap) {
            saw_trap = true;
            trap_at = e.t;
        } else if (e.kind == EventKind::TrapDecisionMade && saw_trap && decisions == 0) {
            ++decisions;
        } else if (e.kind == EventKind::InterruptInjected && saw_trap && !injection_after_trap) {
            injection_after_trap = e.t >= trap_at;
        }
    }
    CHECK(saw_trap);
    CHECK(decisions == 1);
    CHECK(injection_after_trap);
}

TEST_CASE("trap with nothing in flight is a session error with partial transcript") {
    ScriptSource source("[TRAP][END][EOS]", 5.0);
    FunctionRegistry reg;
    SessionEngine engine(source, make_registry_resolver(reg), quiet_config());
    CHECK_THROWS_AS(engine.run(), SessionError);
    try {
        ScriptSource src2("[TRAP][END][EOS]", 5.0);
        SessionEngine e2(src2, make_registry_resolver(reg), quiet_config());
        e2.run();
    } catch (const SessionError& e) {
        CHECK(e.transcript.error);
        CHECK(!e.transcript.events.empty());
    }
}

TEST_CASE("naive restarts charge TTFT at every injection batch") {
    auto g = two_chain(100.0, 100.0);
    GraphSource source(g, PickPolicy::Lpt, 1);
    FunctionRegistry reg = FunctionRegistry::for_graph(g);
    EngineConfig ec = quiet_config();
    ec.ttft_ticks = ticks_from_ms(310.0);
    ec.naive_restarts = true;
    SessionEngine engine(source, make_registry_resolver(reg), ec);
    auto transcript = engine.run();
    CHECK(transcript.restarts == 2);
    // start ttft + gen 50 + wait 100 + restart 310 + gen 50 + wait 100 + restart 310
    CHECK(transcript.makespan_ms() == doctest::Approx(310 + 50 + 100 + 310 + 50 + 100 + 310));
}

TEST_CASE("wall-clock session: dispatch runs concurrently and respects estimates") {
    ScriptSource source("[CALL] slow [HEAD] slow_fn() [END][CALL] fast [HEAD] fast_fn() [END][TRAP][END][EOS]",
                        0.0);
    FunctionRegistry reg;
    reg.add({"slow_fn", 50.0, "s", nullptr});
    reg.add({"fast_fn", 10.0, "f", nullptr});
    EngineConfig ec;
    LiveSession session(source, reg, ec);
    auto transcript = session.run();
    CHECK_FALSE(transcript.error);
    CHECK(transcript.calls == 2);
    CHECK(transcript.interrupts == 2);
    // fast finishes first even though it was dispatched second
    std::vector<std::string> ids;
    cml::Parser parser;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        auto res = parser.feed(tok, injected);
        if (res.block && res.block->is_interrupt()) ids.push_back(res.block->interrupt().id);
    }
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == "fast");
    CHECK(ids[1] == "slow");
    // ~50 ms wall time for the slow stub
    CHECK(transcript.makespan_ms() >= 45.0);
}

TEST_CASE("wall-clock session runs custom functions and reports exceptions as error values") {
    ScriptSource source("[CALL] j [HEAD] boom() [END][TRAP][END][EOS]", 0.0);
    FunctionRegistry reg;
    FunctionSpec spec;
    spec.name = "boom";
    spec.exec_ms = 1.0;
    spec.fn = [](const std::string&) -> std::string { throw std::runtime_error("exploded"); };
    reg.add(std::move(spec));
    EngineConfig ec;
    LiveSession session(source, reg, ec);
    auto transcript = session.run();
    bool saw = false;
    cml::Parser parser;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        auto res = parser.feed(tok, injected);
        if (res.block && res.block->is_interrupt())
            saw = res.block->interrupt().value.rfind("error: exploded", 0) == 0;
    }
    CHECK(saw);
}

TEST_CASE("check_transcript flags streams with interrupts inside blocks") {
    SessionTranscript bad;
    const auto tok = [&](cml::TokenKind k, const std::string& text, bool injected) {
        bad.events.push_back({0, EventKind::Token,
                              {{"text", text.empty() ? std::string(cml::sentinel_text(k)) : text},
                               {"token_kind", std::string(cml::token_kind_name(k))},
                               {"count", 1},
                               {"injected", injected}}});
    };
    tok(cml::TokenKind::Call, "", false);
    tok(cml::TokenKind::Intr, "", true); // inside the call span
    CHECK(!check_transcript(bad).empty());
}
