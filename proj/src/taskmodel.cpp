// SPDX-License-Identifier: Apache-2.0
#include "afc/taskmodel.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "afc/rng.hpp"

namespace afc::taskmodel {

CycleFound::CycleFound(std::vector<std::string> ids)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "cycle in task graph:";
          for (const auto& id : ids) os << ' ' << id;
          return os.str();
      }()),
      cycle(std::move(ids)) {}

TaskGraph TaskGraph::from_json(const nlohmann::json& j) {
    TaskGraph g;
    if (!j.is_object()) throw GraphInvalid("task graph must be a JSON object");
    g.tpot_ms_ = j.value("tpot_ms", 5.0);
    g.graph_id_ = j.value("graph_id", std::string{});
    g.description_ = j.value("description", std::string{});
    if (!j.contains("tasks") || !j.at("tasks").is_array()) throw GraphInvalid("task graph needs a 'tasks' array");
    for (const auto& t : j.at("tasks")) {
        CallNode n;
        n.id = t.at("id").get<std::string>();
        n.name = t.value("name", n.id);
        n.body_tokens = t.at("body_tokens").get<std::int64_t>();
        n.exec_ms = t.at("exec_ms").get<double>();
        for (const auto& d : t.value("deps", nlohmann::json::array())) n.deps.push_back(d.get<std::string>());
        g.add_node(std::move(n));
    }
    g.validate();
    topological_check(g);
    return g;
}

TaskGraph TaskGraph::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GraphInvalid("cannot open task graph file: " + path);
    nlohmann::json j;
    in >> j; // nlohmann reports line/column on parse errors
    return from_json(j);
}

nlohmann::json TaskGraph::to_json() const {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& [id, n] : nodes_) {
        nlohmann::json t{{"id", id}, {"name", n.name}, {"body_tokens", n.body_tokens}, {"exec_ms", n.exec_ms}};
        t["deps"] = n.deps;
        tasks.push_back(std::move(t));
    }
    nlohmann::json j{{"tpot_ms", tpot_ms_}, {"tasks", std::move(tasks)}};
    if (!graph_id_.empty()) j["graph_id"] = graph_id_;
    if (!description_.empty()) j["description"] = description_;
    return j;
}

void TaskGraph::add_node(CallNode node) {
    if (nodes_.count(node.id)) throw GraphInvalid("duplicate node id: " + node.id);
    nodes_.emplace(node.id, std::move(node));
}

const CallNode& TaskGraph::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw GraphInvalid("unknown node id: " + id);
    return it->second;
}

void TaskGraph::validate() const {
    if (tpot_ms_ <= 0) throw GraphInvalid("tpot_ms must be positive");
    for (const auto& [id, n] : nodes_) {
        if (n.body_tokens < 1) throw GraphInvalid("node " + id + ": body_tokens must be >= 1");
        if (n.exec_ms <= 0) throw GraphInvalid("node " + id + ": exec_ms must be positive");
        for (const auto& d : n.deps) {
            if (d == id) throw GraphInvalid("node " + id + " depends on itself");
            if (!nodes_.count(d)) throw GraphInvalid("node " + id + " depends on unknown node " + d);
        }
    }
}

SessionState SessionState::fresh(const TaskGraph& g) {
    SessionState s;
    for (const auto& [id, n] : g.nodes()) s.pending.insert(id);
    return s;
}

namespace {

void check_partition(const TaskGraph& g, const SessionState& s) {
    std::size_t total = s.completed.size() + s.in_flight.size() + s.pending.size();
    if (total != g.size()) throw InvalidState("session state does not cover the graph");
    for (const auto& [id, n] : g.nodes()) {
        const int hits = static_cast<int>(s.completed.count(id)) + static_cast<int>(s.in_flight.count(id)) +
                         static_cast<int>(s.pending.count(id));
        if (hits != 1) throw InvalidState("node " + id + " appears in " + std::to_string(hits) + " state sets");
    }
}

} // namespace

std::set<std::string> ready_set(const TaskGraph& g, const SessionState& s) {
    check_partition(g, s);
    std::set<std::string> out;
    for (const auto& id : s.pending) {
        const CallNode& n = g.node(id);
        const bool ready = std::all_of(n.deps.begin(), n.deps.end(),
                                       [&](const std::string& d) { return s.completed.count(d) != 0; });
        if (ready) out.insert(id);
    }
    return out;
}

std::optional<std::string> lpt_next(const TaskGraph& g, const SessionState& s) {
    std::optional<std::string> best;
    double best_exec = 0;
    for (const auto& id : ready_set(g, s)) {
        const double e = g.node(id).exec_ms;
        if (!best || e > best_exec) { // ties keep the earlier (smaller) id
            best = id;
            best_exec = e;
        }
    }
    return best;
}

bool should_trap(const TaskGraph& g, const SessionState& s, bool has_other_tokens) {
    return ready_set(g, s).empty() && !s.pending.empty() && !has_other_tokens;
}

std::optional<std::vector<std::string>> find_cycle(const TaskGraph& g) {
    enum class Mark { White, Grey, Black };
    std::map<std::string, Mark> mark;
    for (const auto& [id, n] : g.nodes()) mark[id] = Mark::White;
    std::vector<std::string> stack;

    std::function<std::optional<std::vector<std::string>>(const std::string&)> visit =
        [&](const std::string& id) -> std::optional<std::vector<std::string>> {
        mark[id] = Mark::Grey;
        stack.push_back(id);
        for (const auto& d : g.node(id).deps) {
            if (mark[d] == Mark::Grey) {
                auto at = std::find(stack.begin(), stack.end(), d);
                return std::vector<std::string>(at, stack.end());
            }
            if (mark[d] == Mark::White)
                if (auto cyc = visit(d)) return cyc;
        }
        stack.pop_back();
        mark[id] = Mark::Black;
        return std::nullopt;
    };

    for (const auto& [id, n] : g.nodes())
        if (mark[id] == Mark::White)
            if (auto cyc = visit(id)) return cyc;
    return std::nullopt;
}

void topological_check(const TaskGraph& g) {
    if (auto cyc = find_cycle(g)) throw CycleFound(std::move(*cyc));
}

std::vector<std::string> topological_order(const TaskGraph& g) {
    topological_check(g);
    std::vector<std::string> order;
    std::set<std::string> done;
    while (order.size() < g.size()) {
        for (const auto& [id, n] : g.nodes()) {
            if (done.count(id)) continue;
            const bool ok = std::all_of(n.deps.begin(), n.deps.end(),
                                        [&](const std::string& d) { return done.count(d) != 0; });
            if (ok) {
                order.push_back(id);
                done.insert(id);
            }
        }
    }
    return order;
}

TaskGraph with_random_exec(const TaskGraph& g, std::uint64_t seed, double lo_ms, double hi_ms) {
    Rng rng(seed);
    // Iterate the ordered node map so the draw sequence is reproducible.
    TaskGraph fresh;
    fresh.set_tpot_ms(g.tpot_ms());
    fresh.set_graph_id(g.graph_id());
    fresh.set_description(g.description());
    for (const auto& [id, n] : g.nodes()) {
        CallNode m = n;
        m.exec_ms = rng.uniform(lo_ms, hi_ms);
        fresh.add_node(std::move(m));
    }
    return fresh;
}

} // namespace afc::taskmodel
