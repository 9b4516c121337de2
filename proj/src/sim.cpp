// SPDX-License-Identifier: Apache-2.0
#include "afc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "afc/rng.hpp"

namespace afc::sim {

namespace {

std::int64_t default_value_tokens(const std::string& value) {
    return static_cast<std::int64_t>((value.size() + 3) / 4);
}

constexpr const char* kStubResult = "done";

taskmodel::TaskGraph prepare_graph(const taskmodel::TaskGraph& graph, const SimConfig& cfg) {
    taskmodel::TaskGraph g = graph;
    if (cfg.tpot_ms) g.set_tpot_ms(*cfg.tpot_ms);
    if (cfg.randomize_exec)
        g = taskmodel::with_random_exec(g, Rng::mix(cfg.seed, 0xec), cfg.randomize_exec->first,
                                        cfg.randomize_exec->second);
    return g;
}

struct PolicyRun {
    Tick makespan = 0;
    std::int64_t tokens = 0;
    runtime::SessionTranscript transcript;
};

// Sequential baseline: generate one call, block on its execution, repeat.
PolicyRun run_sync(const taskmodel::TaskGraph& g, const SimConfig& cfg, bool record,
                   std::int64_t value_tokens_done) {
    PolicyRun out;
    Tick t = ticks_from_ms(cfg.ttft_ms);
    std::int64_t tokens = cfg.prompt_tokens;
    Rng rng(Rng::mix(cfg.seed, 0x51));

    const auto log = [&](Tick at, runtime::EventKind kind, nlohmann::json fields) {
        if (record) out.transcript.events.push_back({at, kind, std::move(fields)});
    };
    log(0, runtime::EventKind::SessionStart, {{"ttft_ms", cfg.ttft_ms}});

    taskmodel::SessionState state = taskmodel::SessionState::fresh(g);
    while (!state.pending.empty()) {
        const auto pick = taskmodel::lpt_next(g, state);
        if (!pick) throw taskmodel::InvalidState("sync schedule stuck: dependencies unsatisfiable");
        const taskmodel::CallNode& n = g.node(*pick);
        t += ticks_from_ms(static_cast<double>(n.body_tokens) * g.tpot_ms());
        tokens += n.body_tokens;
        log(t, runtime::EventKind::CallDetected, {{"id", *pick}, {"body", n.name + "()"}});
        double noise = 1.0;
        if (cfg.exec_noise_factor != 1.0)
            noise = rng.uniform(1.0 / cfg.exec_noise_factor, cfg.exec_noise_factor);
        t += ticks_from_ms(n.exec_ms * noise);
        tokens += value_tokens_done;
        log(t, runtime::EventKind::Completion, {{"id", *pick}, {"status", "done"}});
        state.pending.erase(*pick);
        state.completed.insert(*pick);
        out.transcript.calls++;
    }
    log(t, runtime::EventKind::SessionEnd, {});
    out.makespan = t;
    out.tokens = tokens;
    out.transcript.end_tick = t;
    out.transcript.context_tokens = tokens;
    return out;
}

// Bundled baseline: generate every currently-ready call, execute the bundle
// concurrently, wait for the slowest, repeat with the next level.
PolicyRun run_sync_parallel(const taskmodel::TaskGraph& g, const SimConfig& cfg, bool record,
                            std::int64_t value_tokens_done) {
    PolicyRun out;
    Tick t = ticks_from_ms(cfg.ttft_ms);
    std::int64_t tokens = cfg.prompt_tokens;
    Rng rng(Rng::mix(cfg.seed, 0x52));

    const auto log = [&](Tick at, runtime::EventKind kind, nlohmann::json fields) {
        if (record) out.transcript.events.push_back({at, kind, std::move(fields)});
    };
    log(0, runtime::EventKind::SessionStart, {{"ttft_ms", cfg.ttft_ms}});

    taskmodel::SessionState state = taskmodel::SessionState::fresh(g);
    while (!state.pending.empty()) {
        auto level = taskmodel::ready_set(g, state);
        if (level.empty()) throw taskmodel::InvalidState("parallel schedule stuck: dependencies unsatisfiable");
        // Bundle generation order: longest estimate first, ties by id.
        std::vector<std::string> order(level.begin(), level.end());
        std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
            return g.node(a).exec_ms > g.node(b).exec_ms;
        });
        for (const auto& id : order) {
            const taskmodel::CallNode& n = g.node(id);
            t += ticks_from_ms(static_cast<double>(n.body_tokens) * g.tpot_ms());
            tokens += n.body_tokens;
            log(t, runtime::EventKind::CallDetected, {{"id", id}, {"body", n.name + "()"}});
        }
        Tick level_end = t;
        for (const auto& id : order) {
            const taskmodel::CallNode& n = g.node(id);
            double noise = 1.0;
            if (cfg.exec_noise_factor != 1.0)
                noise = rng.uniform(1.0 / cfg.exec_noise_factor, cfg.exec_noise_factor);
            const Tick done = t + ticks_from_ms(n.exec_ms * noise);
            level_end = std::max(level_end, done);
            tokens += value_tokens_done;
            log(done, runtime::EventKind::Completion, {{"id", id}, {"status", "done"}});
            state.pending.erase(id);
            state.completed.insert(id);
            out.transcript.calls++;
        }
        t = level_end; // the model waits for every bundled call
    }
    log(t, runtime::EventKind::SessionEnd, {});
    out.makespan = t;
    out.tokens = tokens;
    out.transcript.end_tick = t;
    out.transcript.context_tokens = tokens;
    return out;
}

runtime::CallResolver graph_resolver(const runtime::GraphSource& src) {
    return [&src](const cml::FunctionCall& call) {
        runtime::ResolvedCall rc;
        rc.name = runtime::leading_identifier(call.body);
        if (call.id && src.graph().contains(*call.id)) {
            const taskmodel::CallNode& n = src.graph().node(*call.id);
            rc.known = true;
            rc.name = n.name;
            rc.exec_ms = n.exec_ms;
            rc.est_exec_ms = n.exec_ms;
            rc.value = kStubResult;
        }
        return rc;
    };
}

runtime::EngineConfig engine_config(const SimConfig& cfg, Policy policy) {
    runtime::EngineConfig ec;
    ec.ttft_ticks = ticks_from_ms(cfg.ttft_ms);
    ec.naive_restarts = policy == Policy::AsyncNaive;
    ec.trap_model = cfg.trap_model;
    ec.prompt_tokens = cfg.prompt_tokens;
    ec.record_transcript = cfg.record_transcript;
    ec.exec_noise_factor = cfg.exec_noise_factor;
    ec.seed = cfg.seed;
    ec.interrupt_value_tokens = cfg.interrupt_value_tokens ? cfg.interrupt_value_tokens : default_value_tokens;
    return ec;
}

PolicyRun run_async(const taskmodel::TaskGraph& g, const SimConfig& cfg, Policy policy, bool record) {
    const auto pick = policy == Policy::AsyncRandom ? runtime::PickPolicy::Random : runtime::PickPolicy::Lpt;
    runtime::GraphSource source(g, pick, Rng::mix(cfg.seed, 0xa5));
    runtime::EngineConfig ec = engine_config(cfg, policy);
    ec.record_transcript = record;
    runtime::SessionEngine engine(source, graph_resolver(source), ec);
    PolicyRun out;
    out.transcript = engine.run();
    out.makespan = out.transcript.end_tick;
    out.tokens = out.transcript.context_tokens;
    return out;
}

PolicyRun run_policy(const taskmodel::TaskGraph& g, const SimConfig& cfg, Policy policy, bool record) {
    const std::int64_t done_tokens =
        (cfg.interrupt_value_tokens ? cfg.interrupt_value_tokens : default_value_tokens)(kStubResult);
    switch (policy) {
    case Policy::Sync: return run_sync(g, cfg, record, done_tokens);
    case Policy::SyncParallel: return run_sync_parallel(g, cfg, record, done_tokens);
    default: return run_async(g, cfg, policy, record);
    }
}

} // namespace

std::string_view policy_name(Policy p) {
    switch (p) {
    case Policy::Sync: return "sync";
    case Policy::SyncParallel: return "sync-parallel";
    case Policy::AsyncLpt: return "async-lpt";
    case Policy::AsyncRandom: return "async-random";
    case Policy::AsyncNaive: return "async-naive";
    }
    return "?";
}

std::optional<Policy> policy_from_name(std::string_view name) {
    for (Policy p : all_policies())
        if (name == policy_name(p)) return p;
    return std::nullopt;
}

std::vector<Policy> all_policies() {
    return {Policy::Sync, Policy::SyncParallel, Policy::AsyncLpt, Policy::AsyncRandom, Policy::AsyncNaive};
}

nlohmann::json SimReport::to_json(bool include_events) const {
    nlohmann::json j{{"graph_id", graph_id},
                     {"policy", std::string(policy_name(policy))},
                     {"seed", seed},
                     {"makespan_ms", makespan_ms},
                     {"sync_makespan_ms", sync_makespan_ms},
                     {"speedup_vs_sync", speedup_vs_sync},
                     {"tokens_total", tokens_total},
                     {"sync_tokens_total", sync_tokens_total},
                     {"token_overhead_vs_sync", token_overhead_vs_sync},
                     {"calls", transcript.calls},
                     {"traps", transcript.traps},
                     {"interrupts", transcript.interrupts},
                     {"restarts", transcript.restarts}};
    if (include_events) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& e : transcript.events) events.push_back(e.to_json());
        j["events"] = std::move(events);
    }
    return j;
}

SimReport simulate(const taskmodel::TaskGraph& graph, const SimConfig& config) {
    taskmodel::topological_check(graph);
    const taskmodel::TaskGraph g = prepare_graph(graph, config);

    SimReport report;
    report.graph_id = g.graph_id();
    report.policy = config.policy;
    report.seed = config.seed;

    PolicyRun run = run_policy(g, config, config.policy, config.record_transcript);
    report.makespan_ms = ms_from_ticks(run.makespan);
    report.tokens_total = run.tokens;
    report.transcript = std::move(run.transcript);

    if (config.policy == Policy::Sync) {
        report.sync_makespan_ms = report.makespan_ms;
        report.sync_tokens_total = report.tokens_total;
    } else {
        PolicyRun sync = run_policy(g, config, Policy::Sync, false);
        report.sync_makespan_ms = ms_from_ticks(sync.makespan);
        report.sync_tokens_total = sync.tokens;
    }
    report.speedup_vs_sync = report.sync_makespan_ms / report.makespan_ms;
    report.token_overhead_vs_sync = report.tokens_total - report.sync_tokens_total;
    return report;
}

namespace {

PolicyRun run_arrivals_async(const SimConfig& cfg, Policy policy) {
    taskmodel::TaskGraph shell; // tasks arrive later as user interrupts
    shell.set_tpot_ms(cfg.tpot_ms ? *cfg.tpot_ms : cfg.arrival_schedule.front().graph.tpot_ms());
    runtime::GraphSource source(shell,
                                policy == Policy::AsyncRandom ? runtime::PickPolicy::Random
                                                              : runtime::PickPolicy::Lpt,
                                Rng::mix(cfg.seed, 0xa5));
    std::vector<runtime::ArrivalEntry> arrivals;
    for (const ArrivalSpec& a : cfg.arrival_schedule) {
        taskmodel::TaskGraph g = a.graph;
        if (cfg.tpot_ms) g.set_tpot_ms(*cfg.tpot_ms);
        if (cfg.randomize_exec)
            g = taskmodel::with_random_exec(g, Rng::mix(cfg.seed, 0xec + arrivals.size()),
                                            cfg.randomize_exec->first, cfg.randomize_exec->second);
        arrivals.push_back({ticks_from_ms(a.t_ms), std::move(g), a.description});
    }
    runtime::EngineConfig ec = engine_config(cfg, policy);
    runtime::SessionEngine engine(source, graph_resolver(source), ec);
    engine.set_arrivals(std::move(arrivals), &source);
    PolicyRun out;
    out.transcript = engine.run();
    out.makespan = out.transcript.end_tick - ticks_from_ms(cfg.arrival_schedule.front().t_ms);
    out.tokens = out.transcript.context_tokens;
    return out;
}

PolicyRun run_arrivals_sequential(const SimConfig& cfg, Policy policy) {
    PolicyRun out;
    Tick t = ticks_from_ms(cfg.arrival_schedule.front().t_ms);
    const Tick origin = t;
    std::size_t idx = 0;
    for (const ArrivalSpec& a : cfg.arrival_schedule) {
        taskmodel::TaskGraph g = a.graph;
        if (cfg.tpot_ms) g.set_tpot_ms(*cfg.tpot_ms);
        SimConfig per = cfg;
        per.seed = Rng::mix(cfg.seed, 0xec + idx);
        if (cfg.randomize_exec)
            g = taskmodel::with_random_exec(g, per.seed, cfg.randomize_exec->first,
                                            cfg.randomize_exec->second);
        per.randomize_exec.reset();
        PolicyRun run = run_policy(g, per, policy, false);
        t = std::max(t, ticks_from_ms(a.t_ms)) + run.makespan; // queued prompt
        out.tokens += run.tokens;
        out.transcript.calls += run.transcript.calls;
        ++idx;
    }
    out.makespan = t - origin;
    out.transcript.end_tick = t;
    return out;
}

} // namespace

SimReport simulate_arrivals(const SimConfig& config) {
    if (config.arrival_schedule.empty()) throw std::invalid_argument("arrival schedule must be nonempty");
    for (std::size_t i = 1; i < config.arrival_schedule.size(); ++i)
        if (config.arrival_schedule[i].t_ms < config.arrival_schedule[i - 1].t_ms)
            throw std::invalid_argument("arrival schedule must be ascending in time");

    SimReport report;
    report.graph_id = "arrivals";
    report.policy = config.policy;
    report.seed = config.seed;

    const bool sequential = config.policy == Policy::Sync || config.policy == Policy::SyncParallel;
    PolicyRun run = sequential ? run_arrivals_sequential(config, config.policy)
                               : run_arrivals_async(config, config.policy);
    report.makespan_ms = ms_from_ticks(run.makespan);
    report.tokens_total = run.tokens;
    report.transcript = std::move(run.transcript);

    if (config.policy == Policy::Sync) {
        report.sync_makespan_ms = report.makespan_ms;
        report.sync_tokens_total = report.tokens_total;
    } else {
        PolicyRun sync = run_arrivals_sequential(config, Policy::Sync);
        report.sync_makespan_ms = ms_from_ticks(sync.makespan);
        report.sync_tokens_total = sync.tokens;
    }
    report.speedup_vs_sync = report.sync_makespan_ms / report.makespan_ms;
    report.token_overhead_vs_sync = report.tokens_total - report.sync_tokens_total;
    return report;
}

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << "graph_id,policy,seed,makespan_ms,tokens_total,speedup_vs_sync\n";
    for (const SimReport& r : rows) {
        os << r.graph_id << ',' << policy_name(r.policy) << ',' << r.seed << ',' << r.makespan_ms << ','
           << r.tokens_total << ',' << r.speedup_vs_sync << '\n';
    }
    return os.str();
}

namespace {

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

} // namespace

nlohmann::json SweepResult::summary() const {
    nlohmann::json by_policy = nlohmann::json::object();
    for (Policy p : all_policies()) {
        std::vector<double> makespans, speedups;
        for (const SimReport& r : rows) {
            if (r.policy != p) continue;
            makespans.push_back(r.makespan_ms);
            speedups.push_back(r.speedup_vs_sync);
        }
        if (makespans.empty()) continue;
        const double mean_speedup =
            std::accumulate(speedups.begin(), speedups.end(), 0.0) / static_cast<double>(speedups.size());
        by_policy[std::string(policy_name(p))] = {{"runs", makespans.size()},
                                                  {"makespan_p10_ms", percentile(makespans, 0.10)},
                                                  {"makespan_p50_ms", percentile(makespans, 0.50)},
                                                  {"makespan_p90_ms", percentile(makespans, 0.90)},
                                                  {"mean_speedup_vs_sync", mean_speedup}};
    }
    nlohmann::json failures_json = nlohmann::json::array();
    for (const SweepFailure& f : failures)
        failures_json.push_back({{"graph_id", f.graph_id},
                                 {"policy", std::string(policy_name(f.policy))},
                                 {"seed", f.seed},
                                 {"error", f.error}});
    return {{"policies", by_policy}, {"rows", rows.size()}, {"failures", failures_json}};
}

SweepResult sweep(const std::vector<taskmodel::TaskGraph>& corpus, const std::vector<Policy>& policies,
                  const std::vector<std::uint64_t>& seeds, const SimConfig& base) {
    SweepResult out;
    std::size_t gi = 0;
    for (const taskmodel::TaskGraph& g : corpus) {
        for (Policy p : policies) {
            for (std::uint64_t seed : seeds) {
                SimConfig cfg = base;
                cfg.policy = p;
                cfg.seed = Rng::mix(seed, gi * 1000003 + 17);
                cfg.record_transcript = false;
                try {
                    out.rows.push_back(simulate(g, cfg));
                } catch (const std::exception& e) {
                    out.failures.push_back({g.graph_id(), p, seed, e.what()});
                }
            }
        }
        ++gi;
    }
    return out;
}

} // namespace afc::sim
