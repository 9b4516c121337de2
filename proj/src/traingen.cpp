// SPDX-License-Identifier: Apache-2.0
#include "afc/traingen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_set>

#include "afc/cml.hpp"
#include "afc/rng.hpp"
#include "afc/runtime.hpp"
#include "afc/sim.hpp"

namespace afc::traingen {

nlohmann::json TrainSample::to_json() const {
    nlohmann::json spans = nlohmann::json::array();
    for (const TargetSpan& s : injected_spans) spans.push_back({{"begin", s.begin}, {"end", s.end}});
    return {{"prompt", prompt}, {"target", target}, {"injected_spans", std::move(spans)}, {"meta", meta}};
}

taskmodel::TaskGraph assign_random_costs(const taskmodel::TaskGraph& g, std::uint64_t seed) {
    return taskmodel::with_random_exec(g, seed, 1.0, 1000.0);
}

namespace {

std::string build_prompt(const taskmodel::TaskGraph& g) {
    nlohmann::json defs = nlohmann::json::array();
    for (const auto& [id, n] : g.nodes())
        defs.push_back({{"name", n.name}, {"parameters", nlohmann::json::object()}, {"est_exec_ms", n.exec_ms}});
    std::string prompt = g.description().empty() ? "Complete the task using the functions below."
                                                 : g.description();
    prompt += "\n\nFunctions: ";
    prompt += defs.dump();
    return prompt;
}

} // namespace

TrainSample generate_trace(const taskmodel::TaskGraph& g, double tpot_ms, std::uint64_t seed,
                           const TraceOptions& options) {
    taskmodel::topological_check(g);
    taskmodel::TaskGraph graph = g;
    graph.set_tpot_ms(tpot_ms);

    runtime::GraphSource source(graph, runtime::PickPolicy::Lpt, Rng::mix(seed, 0x9e0));
    runtime::EngineConfig ec;
    ec.seed = seed;
    ec.record_transcript = true;
    runtime::SessionEngine engine(source, // resolve calls against the (possibly growing) source graph
                                  [&source](const cml::FunctionCall& call) {
                                      runtime::ResolvedCall rc;
                                      rc.name = runtime::leading_identifier(call.body);
                                      if (call.id && source.graph().contains(*call.id)) {
                                          const auto& n = source.graph().node(*call.id);
                                          rc.known = true;
                                          rc.name = n.name;
                                          rc.exec_ms = n.exec_ms;
                                          rc.est_exec_ms = n.exec_ms;
                                          rc.value = "done";
                                      }
                                      return rc;
                                  },
                                  ec);

    if (!options.user_tasks.empty()) {
        // Arrivals land inside the first half of the base task's sequential span.
        Rng arr_rng(Rng::mix(seed, 0xa77));
        double total_ms = 0;
        for (const auto& [id, n] : graph.nodes())
            total_ms += static_cast<double>(n.body_tokens) * tpot_ms + n.exec_ms;
        std::vector<runtime::ArrivalEntry> arrivals;
        for (const taskmodel::TaskGraph& ug : options.user_tasks) {
            taskmodel::TaskGraph t = ug;
            t.set_tpot_ms(tpot_ms);
            arrivals.push_back({ticks_from_ms(arr_rng.uniform(0.0, total_ms * 0.5)), std::move(t),
                                ug.description().empty() ? ug.graph_id() : ug.description()});
        }
        std::sort(arrivals.begin(), arrivals.end(),
                  [](const auto& a, const auto& b) { return a.at < b.at; });
        engine.set_arrivals(std::move(arrivals), &source);
    }

    runtime::SessionTranscript transcript = engine.run();

    TrainSample sample;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        const std::size_t begin = sample.target.size();
        if (tok.kind == cml::TokenKind::Text) {
            sample.target += ' ';
            sample.target += tok.text;
            sample.target += ' ';
        } else {
            sample.target += cml::sentinel_text(tok.kind);
        }
        if (injected) {
            if (!sample.injected_spans.empty() && sample.injected_spans.back().end == begin)
                sample.injected_spans.back().end = sample.target.size(); // merge contiguous
            else
                sample.injected_spans.push_back({begin, sample.target.size()});
        }
    }
    sample.prompt = build_prompt(graph);

    nlohmann::json assignments = nlohmann::json::object();
    for (const auto& [id, n] : graph.nodes()) assignments[id] = n.exec_ms;
    sample.meta = {{"graph_id", graph.graph_id()},
                   {"seed", seed},
                   {"tpot_ms", tpot_ms},
                   {"exec_assignments", std::move(assignments)}};
    return sample;
}

std::vector<std::string> validate_sample(const TrainSample& sample, const taskmodel::TaskGraph& g) {
    std::vector<std::string> issues;
    std::vector<cml::CmlBlock> blocks;
    try {
        blocks = cml::parse_text(sample.target, {.enforce_unique_call_ids = true});
    } catch (const std::exception& e) {
        issues.push_back(std::string("target does not parse: ") + e.what());
        return issues;
    }

    std::map<std::string, double> exec;
    if (sample.meta.contains("exec_assignments"))
        for (auto it = sample.meta["exec_assignments"].begin(); it != sample.meta["exec_assignments"].end(); ++it)
            exec[it.key()] = it.value().get<double>();

    std::set<std::string> pending, in_flight, completed;
    for (const auto& [id, n] : g.nodes()) pending.insert(id);

    const auto ready = [&] {
        std::set<std::string> r;
        for (const auto& id : pending) {
            const auto& deps = g.node(id).deps;
            if (std::all_of(deps.begin(), deps.end(),
                            [&](const std::string& d) { return completed.count(d) != 0; }))
                r.insert(id);
        }
        return r;
    };

    std::map<std::string, int> interrupts_per_call;
    std::set<std::string> aux_in_flight; // calls from merged user tasks
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const cml::CmlBlock& b = blocks[i];
        if (b.is_call()) {
            const auto& c = b.call();
            if (!c.id) {
                issues.push_back("call without id in target");
                continue;
            }
            if (!g.contains(*c.id)) { // arriving-task call; outside this graph's scope
                aux_in_flight.insert(*c.id);
                continue;
            }
            auto r = ready();
            if (!r.count(*c.id)) {
                issues.push_back("call " + *c.id + " emitted while not ready");
            } else {
                double best = 0;
                for (const auto& id : r) best = std::max(best, exec.count(id) ? exec[id] : g.node(id).exec_ms);
                const double mine = exec.count(*c.id) ? exec[*c.id] : g.node(*c.id).exec_ms;
                if (mine + 1e-9 < best)
                    issues.push_back("call " + *c.id + " violates LPT: exec " + std::to_string(mine) +
                                     " < ready max " + std::to_string(best));
            }
            pending.erase(*c.id);
            in_flight.insert(*c.id);
        } else if (b.is_interrupt()) {
            const auto& intr = b.interrupt();
            if (intr.id.rfind("user_", 0) == 0) { // arriving task notice, not a completion
                continue;
            }
            if (aux_in_flight.erase(intr.id)) {
                continue;
            }
            if (!in_flight.erase(intr.id))
                issues.push_back("interrupt " + intr.id + " without a call in flight");
            else
                completed.insert(intr.id);
            ++interrupts_per_call[intr.id];
        } else { // trap
            if (!ready().empty()) issues.push_back("trap emitted while calls were ready");
            if (pending.empty() && in_flight.empty() && aux_in_flight.empty())
                issues.push_back("trap emitted after completion");
            if (i + 1 >= blocks.size() || !blocks[i + 1].is_interrupt())
                issues.push_back("trap not followed by an interrupt");
        }
    }
    if (!pending.empty() || !in_flight.empty()) issues.push_back("target ends before every call completed");
    for (const auto& [id, count] : interrupts_per_call)
        if (count != 1) issues.push_back("call " + id + " has " + std::to_string(count) + " interrupts");
    for (const auto& [id, n] : g.nodes())
        if (!interrupts_per_call.count(id)) issues.push_back("call " + id + " never interrupted back");
    return issues;
}

DatasetStats emit_dataset(const std::vector<taskmodel::TaskGraph>& corpus, std::size_t count,
                          const std::string& out_path, std::uint64_t base_seed,
                          const std::optional<std::vector<std::uint64_t>>& seeds,
                          double user_task_fraction) {
    if (corpus.empty() && count > 0) throw std::invalid_argument("corpus is empty");
    if (seeds) {
        if (seeds->size() != count)
            throw std::invalid_argument("explicit seed list must have one seed per sample");
        std::unordered_set<std::uint64_t> seen;
        for (std::uint64_t s : *seeds)
            if (!seen.insert(s).second) throw DuplicateSeed(s);
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open dataset output file: " + out_path);

    DatasetStats stats;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = seeds ? (*seeds)[i] : base_seed + i;
        const taskmodel::TaskGraph& base = corpus[i % corpus.size()];
        Rng rng(Rng::mix(seed, 0x7707));
        const double tpot = rng.uniform(5.0, 30.0);
        taskmodel::TaskGraph g = assign_random_costs(base, Rng::mix(seed, 0xc057));

        TraceOptions opts;
        if (corpus.size() > 1 && rng.uniform01() < user_task_fraction) {
            const std::size_t other = (i + 1 + static_cast<std::size_t>(rng.uniform_int(
                                                   0, static_cast<std::int64_t>(corpus.size()) - 2))) %
                                      corpus.size();
            opts.user_tasks.push_back(
                assign_random_costs(corpus[other == i % corpus.size() ? (other + 1) % corpus.size() : other],
                                    Rng::mix(seed, 0xc058)));
        }

        TrainSample sample = generate_trace(g, tpot, seed, opts);
        out << sample.to_json().dump() << '\n';
        ++stats.count;
        ++stats.per_graph[base.graph_id().empty() ? "graph_" + std::to_string(i % corpus.size())
                                                  : base.graph_id()];
    }
    return stats;
}

} // namespace afc::traingen
