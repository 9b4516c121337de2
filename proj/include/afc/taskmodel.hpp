// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace afc::taskmodel {

/// One function call in a task DAG. `exec_ms` is the estimated execution
/// time E(f); the generation latency G(f) is body_tokens x TPOT.
struct CallNode {
    std::string id;
    std::string name;
    std::int64_t body_tokens = 1; // token count of the serialized call
    double exec_ms = 1.0;
    std::vector<std::string> deps;
};

class GraphInvalid : public std::runtime_error {
public:
    explicit GraphInvalid(const std::string& what) : std::runtime_error(what) {}
};

class CycleFound : public std::runtime_error {
public:
    explicit CycleFound(std::vector<std::string> ids);
    std::vector<std::string> cycle;
};

class InvalidState : public std::runtime_error {
public:
    explicit InvalidState(const std::string& what) : std::runtime_error(what) {}
};

/// DAG of function calls plus the TPOT used to turn token counts into
/// generation latency. Node ids are unique; deps reference existing nodes.
class TaskGraph {
public:
    TaskGraph() = default;

    static TaskGraph from_json(const nlohmann::json& j);
    static TaskGraph from_file(const std::string& path);
    nlohmann::json to_json() const;

    void add_node(CallNode node);

    const std::map<std::string, CallNode>& nodes() const { return nodes_; }
    const CallNode& node(const std::string& id) const;
    bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    double tpot_ms() const { return tpot_ms_; }
    void set_tpot_ms(double v) { tpot_ms_ = v; }
    const std::string& graph_id() const { return graph_id_; }
    void set_graph_id(std::string v) { graph_id_ = std::move(v); }
    const std::string& description() const { return description_; }
    void set_description(std::string v) { description_ = std::move(v); }

    double gen_ms(const std::string& id) const { return static_cast<double>(node(id).body_tokens) * tpot_ms_; }

    /// Structural checks (dep references, self-deps, positive costs).
    /// Throws GraphInvalid; does not check acyclicity.
    void validate() const;

private:
    std::map<std::string, CallNode> nodes_;
    double tpot_ms_ = 5.0;
    std::string graph_id_;
    std::string description_;
};

/// Partition of the node ids into completed / in-flight / pending.
struct SessionState {
    std::set<std::string> completed;
    std::set<std::string> in_flight;
    std::set<std::string> pending;

    static SessionState fresh(const TaskGraph& g);
};

/// Pending nodes whose dependencies are all completed.
/// Throws InvalidState when the three sets do not partition the graph ids.
std::set<std::string> ready_set(const TaskGraph& g, const SessionState& s);

/// Longest-Processing-Time-first pick: the ready node with maximal exec_ms,
/// ties broken by lexicographically smallest id; nullopt when nothing is
/// ready.
std::optional<std::string> lpt_next(const TaskGraph& g, const SessionState& s);

/// True iff nothing is ready, calls are still pending on future results, and
/// there is no other text to generate.
bool should_trap(const TaskGraph& g, const SessionState& s, bool has_other_tokens);

/// One cycle's node ids, or nullopt when the graph is acyclic.
std::optional<std::vector<std::string>> find_cycle(const TaskGraph& g);

/// Throws CycleFound when the graph has a cycle.
void topological_check(const TaskGraph& g);

/// Dependency-respecting order (throws CycleFound).
std::vector<std::string> topological_order(const TaskGraph& g);

/// Copy of the graph with exec_ms resampled uniformly from [lo_ms, hi_ms],
/// seeded. Estimates in prompts and scheduling use the resampled values.
TaskGraph with_random_exec(const TaskGraph& g, std::uint64_t seed, double lo_ms, double hi_ms);

} // namespace afc::taskmodel
