// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "afc/analytics.hpp"
#include "afc/cml.hpp"
#include "afc/runtime.hpp"
#include "afc/sim.hpp"
#include "afc/taskmodel.hpp"
#include "afc/traingen.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
        py::list out;
        for (const auto& item : j) out.append(json_to_py(item));
        return out;
    }
    case json::value_t::object: {
        py::dict out;
        for (auto it = j.begin(); it != j.end(); ++it) out[py::str(it.key())] = json_to_py(it.value());
        return out;
    }
    default: return py::none();
    }
}

py::dict block_to_py(const afc::cml::CmlBlock& b) {
    py::dict d;
    if (b.is_call()) {
        d["kind"] = "call";
        d["id"] = b.call().id ? py::object(py::str(*b.call().id)) : py::object(py::none());
        d["body"] = b.call().body;
    } else if (b.is_interrupt()) {
        d["kind"] = "interrupt";
        d["id"] = b.interrupt().id;
        d["value"] = b.interrupt().value;
    } else {
        d["kind"] = "trap";
    }
    return d;
}

afc::cml::CmlBlock block_from_py(const py::dict& d) {
    const std::string kind = d["kind"].cast<std::string>();
    if (kind == "call") {
        afc::cml::FunctionCall c;
        if (d.contains("id") && !d["id"].is_none()) c.id = d["id"].cast<std::string>();
        if (d.contains("body")) c.body = d["body"].cast<std::string>();
        return afc::cml::CmlBlock{std::move(c)};
    }
    if (kind == "interrupt")
        return afc::cml::CmlBlock{
            afc::cml::Interrupt{d["id"].cast<std::string>(), d.contains("value") ? d["value"].cast<std::string>() : ""}};
    if (kind == "trap") return afc::cml::CmlBlock{afc::cml::Trap{}};
    throw std::invalid_argument("block kind must be call, interrupt or trap");
}

afc::taskmodel::SessionState state_from_py(const afc::taskmodel::TaskGraph& g, const py::dict& d) {
    afc::taskmodel::SessionState s;
    const auto fill = [&](const char* key, std::set<std::string>& out) {
        if (!d.contains(key)) return;
        for (const auto& item : d[key]) out.insert(item.cast<std::string>());
    };
    fill("completed", s.completed);
    fill("in_flight", s.in_flight);
    fill("pending", s.pending);
    if (!d.contains("pending")) {
        for (const auto& [id, n] : g.nodes())
            if (!s.completed.count(id) && !s.in_flight.count(id)) s.pending.insert(id);
    }
    return s;
}

afc::analytics::IndependentSet set_from_py(const std::vector<std::pair<double, double>>& items) {
    afc::analytics::IndependentSet set;
    for (const auto& [g, e] : items) set.items.push_back({g, e});
    return set;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "asynchronous LLM function calling: CML, LPT scheduling, latency analytics, simulator";

    py::enum_<afc::cml::State>(m, "DecodeState")
        .value("Outside", afc::cml::State::Outside)
        .value("CallCollect", afc::cml::State::CallCollect)
        .value("CallBody", afc::cml::State::CallBody)
        .value("IntrExpectId", afc::cml::State::IntrExpectId)
        .value("IntrExpectValue", afc::cml::State::IntrExpectValue)
        .value("TrapExpectEnd", afc::cml::State::TrapExpectEnd);

    m.def(
        "parse_blocks",
        [](const std::string& text) {
            py::list out;
            for (const auto& b : afc::cml::parse_text(text)) out.append(block_to_py(b));
            return out;
        },
        py::arg("text"), "Parse a CML text stream into a list of block dicts.");

    m.def(
        "serialize_block", [](const py::dict& block) { return afc::cml::to_text(block_from_py(block)); },
        py::arg("block"), "Canonical CML text for a block dict.");

    m.def(
        "decode_mask",
        [](afc::cml::State state) {
            py::list out;
            for (auto k : afc::cml::decode_mask(state).kinds())
                out.append(std::string(afc::cml::token_kind_name(k)));
            return out;
        },
        py::arg("state"), "Token kinds permitted next in the given decode state.");

    m.def(
        "validate_unique_ids",
        [](const py::list& blocks) -> py::object {
            std::vector<afc::cml::CmlBlock> parsed;
            for (const auto& b : blocks) parsed.push_back(block_from_py(b.cast<py::dict>()));
            auto dup = afc::cml::validate_unique_ids(parsed);
            return dup ? py::object(py::str(*dup)) : py::object(py::none());
        },
        py::arg("blocks"), "First duplicated call id, or None when ids are unique.");

    py::class_<afc::taskmodel::TaskGraph>(m, "TaskGraph")
        .def_static("from_json",
                    [](const std::string& text) { return afc::taskmodel::TaskGraph::from_json(json::parse(text)); })
        .def_static("from_file", &afc::taskmodel::TaskGraph::from_file)
        .def("to_json", [](const afc::taskmodel::TaskGraph& g) { return g.to_json().dump(); })
        .def_property_readonly("graph_id", &afc::taskmodel::TaskGraph::graph_id)
        .def_property_readonly("tpot_ms", &afc::taskmodel::TaskGraph::tpot_ms)
        .def("__len__", &afc::taskmodel::TaskGraph::size);

    m.def(
        "ready_set",
        [](const afc::taskmodel::TaskGraph& g, const py::dict& state) {
            return afc::taskmodel::ready_set(g, state_from_py(g, state));
        },
        py::arg("graph"), py::arg("state"),
        "Pending node ids whose dependencies have all completed.");

    m.def(
        "lpt_next",
        [](const afc::taskmodel::TaskGraph& g, const py::dict& state) -> py::object {
            auto pick = afc::taskmodel::lpt_next(g, state_from_py(g, state));
            return pick ? py::object(py::str(*pick)) : py::object(py::none());
        },
        py::arg("graph"), py::arg("state"), "Longest-processing-time pick among ready nodes.");

    m.def(
        "should_trap",
        [](const afc::taskmodel::TaskGraph& g, const py::dict& state, bool has_other_tokens) {
            return afc::taskmodel::should_trap(g, state_from_py(g, state), has_other_tokens);
        },
        py::arg("graph"), py::arg("state"), py::arg("has_other_tokens") = false);

    m.def(
        "latency_sync",
        [](const std::vector<std::pair<double, double>>& items) {
            return afc::analytics::latency_sync(set_from_py(items));
        },
        py::arg("items"), "Sum G + sum E for a list of (g_ms, e_ms) pairs.");
    m.def(
        "latency_sync_parallel",
        [](const std::vector<std::pair<double, double>>& items) {
            return afc::analytics::latency_sync_parallel(set_from_py(items));
        },
        py::arg("items"));
    m.def(
        "latency_async_lpt",
        [](const std::vector<std::pair<double, double>>& items) {
            return afc::analytics::latency_async_lpt(set_from_py(items));
        },
        py::arg("items"));

    m.def(
        "check_theorem_61",
        [](const std::vector<std::pair<double, double>>& items) {
            auto r = afc::analytics::check_theorem_61(set_from_py(items));
            py::dict d;
            d["holds"] = r.holds;
            d["degenerate"] = r.degenerate;
            d["l_sync"] = r.triple.l_sync;
            d["l_sync_parallel"] = r.triple.l_sync_parallel;
            d["l_async"] = r.triple.l_async;
            return d;
        },
        py::arg("items"));

    m.def(
        "check_theorem_62",
        [](std::size_t n, double e_mean, double e_sigma, double g_mean, std::size_t trials,
           std::uint64_t seed) {
            auto r = afc::analytics::check_theorem_62(n, e_mean, e_sigma, g_mean, trials, seed);
            py::dict d;
            d["n"] = r.n;
            d["trials"] = r.trials;
            d["measured_ratio"] = r.measured_ratio;
            d["predicted_ratio"] = r.predicted_ratio;
            d["rel_error"] = r.rel_error;
            d["below_asymptotic_regime"] = r.below_asymptotic;
            return d;
        },
        py::arg("n"), py::arg("e_mean"), py::arg("e_sigma"), py::arg("g_mean"), py::arg("trials") = 20,
        py::arg("seed") = 1);

    m.def(
        "check_theorem_63",
        [](const std::vector<std::pair<double, double>>& items, std::size_t max_exhaustive_n) {
            auto r = afc::analytics::check_theorem_63(set_from_py(items), max_exhaustive_n);
            py::dict d;
            d["lpt_latency"] = r.lpt_latency;
            d["best_latency"] = r.best_latency;
            d["optimal"] = r.optimal();
            d["witness_order"] = r.witness_order;
            return d;
        },
        py::arg("items"), py::arg("max_exhaustive_n") = 8);

    m.def(
        "trap_decision",
        [](std::int64_t context_tokens, double expected_wait_ms, const std::string& profile) {
            auto model = afc::runtime::TrapCostModel::by_name(profile);
            if (!model) throw std::invalid_argument("unknown trap cost profile: " + profile);
            return std::string(
                afc::runtime::trap_decision_name(afc::runtime::handle_trap(context_tokens, expected_wait_ms, *model)));
        },
        py::arg("context_tokens"), py::arg("expected_wait_ms"), py::arg("profile") = "1b",
        "KV-cache strategy while paused: retain, swap or recompute.");

    m.def(
        "simulate",
        [](const afc::taskmodel::TaskGraph& g, const std::string& policy, double tpot_ms, double ttft_ms,
           std::uint64_t seed, bool events) {
            afc::sim::SimConfig cfg;
            auto p = afc::sim::policy_from_name(policy);
            if (!p) throw std::invalid_argument("unknown policy: " + policy);
            cfg.policy = *p;
            cfg.tpot_ms = tpot_ms;
            cfg.ttft_ms = ttft_ms;
            cfg.seed = seed;
            return json_to_py(afc::sim::simulate(g, cfg).to_json(events));
        },
        py::arg("graph"), py::arg("policy") = "async-lpt", py::arg("tpot_ms") = 5.0, py::arg("ttft_ms") = 0.0,
        py::arg("seed") = 0, py::arg("events") = false,
        "Virtual-time replay of a task graph under one policy; returns the report as a dict.");

    m.def(
        "generate_trace",
        [](const afc::taskmodel::TaskGraph& g, double tpot_ms, std::uint64_t seed) {
            return json_to_py(afc::traingen::generate_trace(g, tpot_ms, seed).to_json());
        },
        py::arg("graph"), py::arg("tpot_ms") = 10.0, py::arg("seed") = 0,
        "Ideal LPT interaction trace for fine-tuning, as a dict.");
}
