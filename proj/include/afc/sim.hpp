// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "afc/runtime.hpp"
#include "afc/taskmodel.hpp"
#include "afc/ticks.hpp"

namespace afc::sim {

enum class Policy : std::uint8_t { Sync, SyncParallel, AsyncLpt, AsyncRandom, AsyncNaive };

std::string_view policy_name(Policy p);
std::optional<Policy> policy_from_name(std::string_view name);
std::vector<Policy> all_policies();

struct ArrivalSpec {
    double t_ms = 0;
    taskmodel::TaskGraph graph;
    std::string description;
};

struct SimConfig {
    std::optional<double> tpot_ms;  // overrides the graph's TPOT when set
    double ttft_ms = 0;             // session start; Async-Naive also pays it per restart
    Policy policy = Policy::AsyncLpt;
    std::uint64_t seed = 0;
    double exec_noise_factor = 1.0; // actual exec = estimate * U(1/f, f)
    std::optional<std::pair<double, double>> randomize_exec; // resample exec ~ U(lo, hi), seeded
    std::int64_t prompt_tokens = 0;
    runtime::TrapCostModel trap_model = runtime::TrapCostModel::profile_1b();
    bool record_transcript = true;
    std::function<std::int64_t(const std::string&)> interrupt_value_tokens; // default ceil(len/4)
    std::vector<ArrivalSpec> arrival_schedule; // consumed by simulate_arrivals
};

struct SimReport {
    std::string graph_id;
    Policy policy = Policy::AsyncLpt;
    std::uint64_t seed = 0;
    double makespan_ms = 0;
    double sync_makespan_ms = 0;
    double speedup_vs_sync = 1.0;
    std::int64_t tokens_total = 0;
    std::int64_t sync_tokens_total = 0;
    std::int64_t token_overhead_vs_sync = 0;
    runtime::SessionTranscript transcript;

    nlohmann::json to_json(bool include_events = false) const;
};

/// Virtual-time replay of one task graph under one policy. The time model
/// follows the closed forms: a call's generation costs body_tokens x TPOT,
/// execution costs exec_ms, control/interrupt tokens are tracked for context
/// accounting but take no generation time, and TTFT is charged at session
/// start (plus per restart for Async-Naive).
SimReport simulate(const taskmodel::TaskGraph& graph, const SimConfig& config);

/// Tasks arriving over time. Async policies absorb them as user interrupts
/// into one running session; Sync policies process them as queued sequential
/// prompts. Makespan runs from the first arrival to the last completion.
SimReport simulate_arrivals(const SimConfig& config);

struct SweepFailure {
    std::string graph_id;
    Policy policy = Policy::Sync;
    std::uint64_t seed = 0;
    std::string error;
};

struct SweepResult {
    std::vector<SimReport> rows;
    std::vector<SweepFailure> failures;

    std::string to_csv() const;
    nlohmann::json summary() const; // per-policy P10/P50/P90 makespan, mean speedup
};

SweepResult sweep(const std::vector<taskmodel::TaskGraph>& corpus, const std::vector<Policy>& policies,
                  const std::vector<std::uint64_t>& seeds, const SimConfig& base);

} // namespace afc::sim
