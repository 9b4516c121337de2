// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "afc/taskmodel.hpp"

namespace afc::traingen {

/// One fine-tuning sample: the prompt carries the task description plus
/// JSON function definitions with execution-time estimates; the target is
/// the ideal CML interaction. Injected spans mark system tokens (interrupts)
/// so trainers can mask them out of the loss.
struct TargetSpan {
    std::size_t begin = 0; // char offsets into target
    std::size_t end = 0;
};

struct TrainSample {
    std::string prompt;
    std::string target;
    std::vector<TargetSpan> injected_spans;
    nlohmann::json meta; // graph_id, seed, tpot_ms, exec_assignments

    nlohmann::json to_json() const;
};

/// Fresh copy with exec_ms ~ U(1 ms, 1000 ms), seeded. Keeps the model from
/// keying on function names instead of the provided estimates.
taskmodel::TaskGraph assign_random_costs(const taskmodel::TaskGraph& g, std::uint64_t seed);

struct TraceOptions {
    /// Extra tasks arriving mid-session as user interrupts (ids "user_k").
    std::vector<taskmodel::TaskGraph> user_tasks;
};

/// Simulate the ideal LLM-executor interaction over the graph: calls in LPT
/// order, interrupts at completion times rounded to the next non-critical
/// token boundary, traps whenever nothing can be generated.
TrainSample generate_trace(const taskmodel::TaskGraph& g, double tpot_ms, std::uint64_t seed,
                           const TraceOptions& options = {});

/// Replay the target against the graph structure and the estimates recorded
/// in meta. Returns human-readable issues; empty means the sample is clean.
std::vector<std::string> validate_sample(const TrainSample& sample, const taskmodel::TaskGraph& g);

class DuplicateSeed : public std::runtime_error {
public:
    explicit DuplicateSeed(std::uint64_t seed)
        : std::runtime_error("duplicate sample seed: " + std::to_string(seed)) {}
};

struct DatasetStats {
    std::size_t count = 0;
    std::map<std::string, std::size_t> per_graph;
};

/// Write `count` JSONL samples cycling over the corpus. Per-sample TPOT is
/// drawn uniformly from [5, 30] ms. Explicit seeds, when given, must be
/// unique and one per sample; otherwise seeds derive from base_seed.
/// `user_task_fraction` of samples get a second corpus graph arriving as a
/// user interrupt.
DatasetStats emit_dataset(const std::vector<taskmodel::TaskGraph>& corpus, std::size_t count,
                          const std::string& out_path, std::uint64_t base_seed,
                          const std::optional<std::vector<std::uint64_t>>& seeds = std::nullopt,
                          double user_task_fraction = 0.0);

} // namespace afc::traingen
