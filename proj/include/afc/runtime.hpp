// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "afc/cml.hpp"
#include "afc/rng.hpp"
#include "afc/taskmodel.hpp"
#include "afc/ticks.hpp"

namespace afc::runtime {

// ---------------------------------------------------------------------------
// Trap handling: KV-cache strategy while generation is paused.

/// Latency model for the pause strategies: swapping the cache out scales
/// linearly with context length, recomputing it scales quadratically.
struct TrapCostModel {
    double swap_ms_per_token = 0.4;            // s
    double recompute_quad_ms_per_token2 = 3.3e-4; // a
    double recompute_lin_ms_per_token = 0.05;  // b

    double swap_ms(std::int64_t tokens) const { return swap_ms_per_token * static_cast<double>(tokens); }
    double recompute_ms(std::int64_t tokens) const {
        const double n = static_cast<double>(tokens);
        return recompute_quad_ms_per_token2 * n * n + recompute_lin_ms_per_token * n;
    }
    /// Context length where swap and recompute cost the same: (s - b) / a.
    double crossover_tokens() const {
        return (swap_ms_per_token - recompute_lin_ms_per_token) / recompute_quad_ms_per_token2;
    }
    void validate() const;

    static TrapCostModel profile_1b() { return {0.4, 3.3e-4, 0.05}; }
    static TrapCostModel profile_3b() { return {0.3, 1.5e-3, 0.1}; }
    static std::optional<TrapCostModel> by_name(std::string_view name);
};

enum class TrapDecision : std::uint8_t { Retain, Swap, Recompute };
std::string_view trap_decision_name(TrapDecision d);

class NoPendingJobs : public std::runtime_error {
public:
    NoPendingJobs() : std::runtime_error("trap raised with no function call in flight") {}
};

/// Keep the cache when both strategies cost more than the expected wait;
/// otherwise pick the cheaper of recompute and swap (recompute on ties).
/// An infinite wait (nothing in flight) throws NoPendingJobs.
TrapDecision handle_trap(std::int64_t context_tokens, double expected_wait_ms, const TrapCostModel& model);

// ---------------------------------------------------------------------------
// Interrupt queue: multi-producer (workers), single-consumer (decode loop).

struct PendingInterrupt {
    std::string id;
    std::string value;
    Tick enqueued_at = 0;
};

class InterruptQueue {
public:
    void push(PendingInterrupt intr);
    std::vector<PendingInterrupt> drain(); // FIFO
    bool empty() const;
    std::size_t size() const;
    /// Wall-mode wait; returns false on timeout.
    bool wait_nonempty_for(std::chrono::milliseconds timeout);

private:
    mutable std::mutex m_;
    std::condition_variable cv_;
    std::deque<PendingInterrupt> q_;
};

// ---------------------------------------------------------------------------
// Function registry and call resolution.

struct FunctionSpec {
    std::string name;
    std::optional<double> exec_ms;   // estimated duration; nullopt = unknown
    std::string result = "done";     // stub return value
    std::function<std::string(const std::string& body)> fn; // live behavior (optional)
};

class FunctionRegistry {
public:
    void add(FunctionSpec spec);
    const FunctionSpec* find(const std::string& name) const;
    static FunctionRegistry for_graph(const taskmodel::TaskGraph& g);

private:
    std::map<std::string, FunctionSpec> specs_;
};

/// First identifier in a call body; empty when the body starts with
/// something else.
std::string leading_identifier(std::string_view body);

/// Outcome of resolving a detected call against whatever backs execution.
struct ResolvedCall {
    bool known = false;
    std::string name;
    double exec_ms = 0;                 // actual duration to simulate
    std::optional<double> est_exec_ms;  // estimate used for trap decisions
    std::string value;                  // result delivered by the interrupt
};

using CallResolver = std::function<ResolvedCall(const cml::FunctionCall&)>;

/// Name lookup on the leading identifier of the body.
CallResolver make_registry_resolver(const FunctionRegistry& reg);

// ---------------------------------------------------------------------------
// Token sources.

/// One token pulled from a source. `cost_ticks` is the virtual generation
/// time the token accounts for; `count` is how many context tokens it
/// represents (a synthetic body chunk can stand for many).
struct StreamToken {
    cml::Token token;
    Tick cost_ticks = 0;
    std::int64_t count = 1;
};

/// Contract between the decode loop and whatever produces tokens: a scripted
/// stream, the ideal graph-driven policy, or a remote endpoint. After
/// inject(), subsequently produced tokens are conditioned on the injected
/// context. restart() begins a fresh request from the full context and is
/// how stateless endpoints implement injection.
class TokenSource {
public:
    virtual ~TokenSource() = default;
    virtual std::optional<StreamToken> next_token() = 0;
    virtual void inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>& blocks) = 0;
    virtual void restart(const std::string& /*context*/) {}
    virtual void pause() {}
    virtual void resume() {}
};

/// Serialize every queued interrupt and inject the whole batch atomically,
/// FIFO, into the source. Injects nothing during a critical section. The
/// callbacks let the decode loop feed its parser and account tokens;
/// `is_value_text` distinguishes the value payload from the id. Returns the
/// number of interrupts injected.
std::size_t drain_interrupts(
    InterruptQueue& queue, bool critical, TokenSource& source,
    const std::function<void(const cml::Token& token, const PendingInterrupt& intr, bool is_value_text)>&
        on_token = {},
    const std::function<void(const cml::CmlBlock& block)>& on_block = {});

/// Fixed token stream (a recorded or hand-written model run). Each text
/// token counts ceil(len/4) context tokens; sentinels count one.
class ScriptSource : public TokenSource {
public:
    ScriptSource(std::string cml_text, double tpot_ms);
    std::optional<StreamToken> next_token() override;
    void inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>& blocks) override;
    const std::string& context() const { return context_; }

private:
    std::deque<StreamToken> tokens_;
    std::string context_;
};

enum class PickPolicy : std::uint8_t { Lpt, Random };

/// Ideal fine-tuned model over a task graph: emits calls in LPT (or random)
/// order among ready nodes, traps when nothing can be generated, reacts to
/// injected interrupts, ends with Eos once everything completed. Generation
/// time is charged on the call body: body_tokens x TPOT.
class GraphSource : public TokenSource {
public:
    GraphSource(taskmodel::TaskGraph graph, PickPolicy policy, std::uint64_t seed);

    std::optional<StreamToken> next_token() override;
    void inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>& blocks) override;

    /// Add an arriving task's nodes under an id prefix (user-triggered
    /// interrupt scenario).
    void merge_task(const taskmodel::TaskGraph& g, const std::string& id_prefix);

    const taskmodel::TaskGraph& graph() const { return graph_; }
    bool all_completed() const { return pending_.empty() && in_flight_.empty() && !generating_; }

private:
    void decide();
    void queue_call_block(const std::string& id);

    taskmodel::TaskGraph graph_;
    PickPolicy policy_;
    Rng rng_;
    std::set<std::string> pending_, in_flight_, completed_;
    std::optional<std::string> generating_;
    std::deque<StreamToken> emit_;
};

// ---------------------------------------------------------------------------
// Transcript.

enum class EventKind : std::uint8_t {
    SessionStart,
    Token,
    CallDetected,
    Dispatch,
    TrapDetected,
    TrapDecisionMade,
    Completion,
    InterruptInjected,
    Restart,
    Arrival,
    SessionEnd,
    SessionError,
};

std::string_view event_kind_name(EventKind k);

struct Event {
    Tick t = 0;
    EventKind kind = EventKind::Token;
    nlohmann::json fields; // event-specific payload

    nlohmann::json to_json() const;
};

struct SessionTranscript {
    std::vector<Event> events;
    Tick end_tick = 0;
    std::int64_t context_tokens = 0;   // prompt + generated + injected
    std::int64_t generated_tokens = 0;
    std::int64_t injected_tokens = 0;
    std::int64_t calls = 0;
    std::int64_t traps = 0;
    std::int64_t interrupts = 0;
    std::int64_t restarts = 0;
    bool error = false;
    std::string error_message;

    double makespan_ms() const { return ms_from_ticks(end_tick); }
    std::string to_jsonl() const;

    /// Token stream in context order (generated + injected), for re-parsing.
    std::vector<std::pair<cml::Token, bool>> token_stream() const; // (token, injected)
};

class SessionError : public std::runtime_error {
public:
    SessionError(const std::string& what, SessionTranscript partial)
        : std::runtime_error(what), transcript(std::move(partial)) {}
    SessionTranscript transcript;
};

/// Re-parse a transcript's token stream and check the session invariants:
/// no interrupt tokens inside call or trap spans, interrupts only ever
/// injected, and every id-bearing call paired with exactly one interrupt.
/// Returns human-readable issues; empty means clean.
std::vector<std::string> check_transcript(const SessionTranscript& transcript);

// ---------------------------------------------------------------------------
// Virtual-time session engine.

struct EngineConfig {
    Tick ttft_ticks = 0;          // charged once at session start
    bool naive_restarts = false;  // charge ttft again at every injection batch
    TrapCostModel trap_model = TrapCostModel::profile_1b();
    std::int64_t prompt_tokens = 0;
    bool record_transcript = true;
    double exec_noise_factor = 1.0; // actual exec = estimate * U(1/f, f)
    std::uint64_t seed = 0;
    std::function<std::int64_t(const std::string&)> interrupt_value_tokens; // default ceil(len/4)
};

struct ArrivalEntry {
    Tick at = 0;
    taskmodel::TaskGraph graph;
    std::string description;
};

/// Deterministic decode loop over virtual time. Each step performs, in
/// order: deliver due completions/arrivals, inject queued interrupts when
/// outside critical sections, otherwise pull one token, feed the FSM, and
/// dispatch whatever block closed. Event-time ties resolve as completion <
/// injection < emission.
class SessionEngine {
public:
    SessionEngine(TokenSource& source, CallResolver resolver, EngineConfig cfg);

    /// Tasks injected later as user interrupts (ids "user_0", "user_1", ...).
    /// Their graphs merge into `merge_target` at injection time.
    void set_arrivals(std::vector<ArrivalEntry> arrivals, GraphSource* merge_target);

    /// One decode step; exactly one externally visible event.
    EventKind step();

    /// Run to session end; throws SessionError with the partial transcript
    /// on session-level failures.
    SessionTranscript run();

    Tick now() const { return clock_; }
    std::int64_t context_tokens() const { return context_tokens_; }
    bool done() const { return done_; }
    SessionTranscript take_transcript();

private:
    void log(Tick t, EventKind kind, nlohmann::json fields);
    void deliver_due();
    void inject_batch();
    void dispatch_call(const cml::CmlBlock& block);
    void do_trap();
    std::optional<Tick> next_wake() const;
    [[noreturn]] void fail(const std::string& msg);

    struct VirtualJob {
        std::uint64_t seq = 0;
        std::string id; // empty for anonymous calls
        std::string name;
        Tick done_at = 0;
        Tick est_done_at = 0;
        bool ok = true;
        std::string value;
    };

    TokenSource& source_;
    CallResolver resolver_;
    EngineConfig cfg_;
    cml::Parser parser_{cml::ParserOptions{.enforce_unique_call_ids = true}};
    InterruptQueue queue_;
    Rng rng_;
    std::vector<VirtualJob> jobs_;
    std::uint64_t job_seq_ = 1;
    std::deque<ArrivalEntry> arrivals_;
    GraphSource* merge_target_ = nullptr;
    std::size_t arrival_index_ = 0;
    std::map<std::string, std::pair<taskmodel::TaskGraph, std::string>> pending_user_tasks_;

    Tick clock_ = 0;
    bool waiting_ = false;
    bool draining_ = false;
    bool started_ = false;
    bool done_ = false;
    std::int64_t context_tokens_ = 0;
    SessionTranscript transcript_;
};

// ---------------------------------------------------------------------------
// Wall-clock session: real workers, blocking sources.

enum class JobStatus : std::uint8_t { Running, Done, Failed };

struct JobHandle {
    std::uint64_t seq = 0;
    std::string id;
    std::string call_body;
    Tick dispatched_at = 0;
    JobStatus status = JobStatus::Running;
    std::string value;
};

/// Runs each dispatched call on its own worker thread; completions land in
/// the interrupt queue (the only cross-thread channel).
class ThreadExecutor {
public:
    ThreadExecutor(InterruptQueue& queue, std::function<Tick()> clock);
    ~ThreadExecutor();

    JobHandle dispatch(const cml::FunctionCall& call, const FunctionRegistry& registry);
    std::size_t live_count() const;
    std::optional<double> min_est_remaining_ms(Tick now) const;
    void wait_all();

private:
    InterruptQueue& queue_;
    std::function<Tick()> clock_;
    mutable std::mutex m_;
    std::vector<std::thread> threads_;
    std::map<std::uint64_t, Tick> est_done_;
    std::size_t live_ = 0;
    std::uint64_t seq_ = 1;
};

/// Wall-clock decode loop; timestamps are elapsed ticks since session start.
/// Used for scripted stub functions and live endpoint sources.
class LiveSession {
public:
    LiveSession(TokenSource& source, const FunctionRegistry& registry, EngineConfig cfg);
    SessionTranscript run();

private:
    TokenSource& source_;
    const FunctionRegistry& registry_;
    EngineConfig cfg_;
};

} // namespace afc::runtime
