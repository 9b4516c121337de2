// SPDX-License-Identifier: Apache-2.0
//
// afc: asynchronous function-calling toolkit. Subcommands parse CML
// streams, replay task graphs under the scheduling policies, verify the
// latency theorems, generate fine-tuning traces, and drive live sessions
// against a streaming endpoint (plus a bundled stub endpoint).

#include <algorithm>
#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "afc/analytics.hpp"
#include "afc/cml.hpp"
#include "afc/config.hpp"
#include "afc/endpoint.hpp"
#include "afc/rng.hpp"
#include "afc/runtime.hpp"
#include "afc/sim.hpp"
#include "afc/taskmodel.hpp"
#include "afc/traingen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json envelope(const afc::config::Config& cfg, json command) {
    return {{"header", {{"created_at", now_iso8601()}}}, {"config", cfg.to_json()}, {"command", std::move(command)}};
}

void write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    out << text;
}

std::vector<afc::taskmodel::TaskGraph> load_corpus(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<afc::taskmodel::TaskGraph> corpus;
    for (const auto& f : files) corpus.push_back(afc::taskmodel::TaskGraph::from_file(f.string()));
    return corpus;
}

afc::runtime::FunctionRegistry load_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open functions file: " + path);
    json j;
    in >> j;
    afc::runtime::FunctionRegistry reg;
    for (const auto& f : j.at("functions")) {
        afc::runtime::FunctionSpec spec;
        spec.name = f.at("name").get<std::string>();
        if (f.contains("exec_ms") && !f["exec_ms"].is_null()) spec.exec_ms = f["exec_ms"].get<double>();
        spec.result = f.value("result", std::string("done"));
        reg.add(std::move(spec));
    }
    return reg;
}

std::string read_all(std::istream& in) {
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// --- parse ------------------------------------------------------------------

struct ParseOpts {
    bool allow_duplicate_ids = false;
};

int cmd_parse(const ParseOpts& opts) {
    afc::cml::Lexer lexer;
    afc::cml::Parser parser(afc::cml::ParserOptions{.enforce_unique_call_ids = !opts.allow_duplicate_ids});
    std::string chunk(4096, '\0');
    const auto pump = [&](bool final) -> int {
        if (final) lexer.finish();
        while (auto tok = lexer.next()) {
            auto res = parser.feed(*tok, /*system_injected=*/true);
            if (!res.block) continue;
            json line;
            if (res.block->is_call()) {
                const auto& c = res.block->call();
                line = {{"kind", "call"}, {"id", c.id ? json(*c.id) : json()}, {"body", c.body}};
            } else if (res.block->is_interrupt()) {
                const auto& i = res.block->interrupt();
                line = {{"kind", "interrupt"}, {"id", i.id}, {"value", i.value}};
            } else {
                line = {{"kind", "trap"}};
            }
            std::cout << line.dump() << '\n';
        }
        return 0;
    };
    while (std::cin.read(chunk.data(), static_cast<std::streamsize>(chunk.size())) || std::cin.gcount() > 0) {
        lexer.push(std::string_view(chunk.data(), static_cast<std::size_t>(std::cin.gcount())));
        pump(false);
    }
    pump(true);
    return 0;
}

// --- simulate ----------------------------------------------------------------

struct SimulateOpts {
    std::string graph_path;
    std::string sweep_dir;
    std::string arrivals_path;
    std::string policy = "async-lpt";
    std::string policies = "all";
    std::uint64_t seed = 0;
    int runs = 1;
    std::string randomize_exec; // "lo,hi"
    bool events = false;
    std::string out;
    std::string csv;
    std::string config_file;
    std::optional<double> tpot;
    std::optional<double> ttft;
    std::string profile;
};

afc::sim::SimConfig make_sim_config(const SimulateOpts& o, const afc::config::Config& cfg) {
    afc::sim::SimConfig sc;
    sc.tpot_ms = o.tpot ? *o.tpot : cfg.tpot_ms;
    sc.ttft_ms = o.ttft ? *o.ttft : cfg.ttft_ms;
    sc.seed = o.seed ? o.seed : cfg.seed;
    sc.trap_model = cfg.trap_model;
    if (!o.randomize_exec.empty()) {
        const auto comma = o.randomize_exec.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("--randomize-exec expects 'lo,hi' in milliseconds");
        sc.randomize_exec = {std::stod(o.randomize_exec.substr(0, comma)),
                             std::stod(o.randomize_exec.substr(comma + 1))};
    }
    return sc;
}

std::vector<afc::sim::Policy> parse_policies(const std::string& names) {
    if (names == "all") return afc::sim::all_policies();
    std::vector<afc::sim::Policy> out;
    std::stringstream ss(names);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto p = afc::sim::policy_from_name(item);
        if (!p) throw std::runtime_error("unknown policy: '" + item + "'");
        out.push_back(*p);
    }
    if (out.empty()) throw std::runtime_error("no policies given");
    return out;
}

int cmd_simulate(const SimulateOpts& o) {
    const auto cfg = afc::config::Config::load(
        o.config_file.empty() ? std::nullopt : std::optional<std::string>(o.config_file));

    if (!o.sweep_dir.empty()) {
        auto corpus = load_corpus(o.sweep_dir);
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < std::max(o.runs, 1); ++i)
            seeds.push_back((o.seed ? o.seed : cfg.seed) + static_cast<std::uint64_t>(i));
        auto base = make_sim_config(o, cfg);
        auto result = afc::sim::sweep(corpus, parse_policies(o.policies), seeds, base);
        if (!o.csv.empty()) write_output(result.to_csv(), o.csv);
        json report = envelope(cfg, {{"subcommand", "simulate"}, {"sweep", o.sweep_dir}, {"runs", o.runs}});
        report["summary"] = result.summary();
        if (o.csv.empty()) report["csv"] = result.to_csv();
        write_output(report.dump(2) + "\n", o.out);
        return result.failures.empty() ? 0 : 1;
    }

    afc::sim::SimConfig sc = make_sim_config(o, cfg);
    const auto policy = afc::sim::policy_from_name(o.policy);
    if (!policy) throw std::runtime_error("unknown policy: '" + o.policy + "'");
    sc.policy = *policy;

    afc::sim::SimReport report;
    if (!o.arrivals_path.empty()) {
        std::ifstream in(o.arrivals_path);
        if (!in) throw std::runtime_error("cannot open arrivals file: " + o.arrivals_path);
        json j;
        in >> j;
        const json arr = j.is_array() ? j : j.at("arrivals");
        const fs::path base_dir = fs::path(o.arrivals_path).parent_path();
        for (const auto& a : arr) {
            afc::sim::ArrivalSpec spec;
            spec.t_ms = a.at("t_ms").get<double>();
            fs::path gp = a.at("graph").get<std::string>();
            if (gp.is_relative()) gp = base_dir / gp;
            spec.graph = afc::taskmodel::TaskGraph::from_file(gp.string());
            spec.description = a.value("description", std::string{});
            sc.arrival_schedule.push_back(std::move(spec));
        }
        report = afc::sim::simulate_arrivals(sc);
    } else {
        if (o.graph_path.empty()) throw std::runtime_error("simulate needs --graph, --arrivals or --sweep");
        auto graph = afc::taskmodel::TaskGraph::from_file(o.graph_path);
        report = afc::sim::simulate(graph, sc);
    }

    // Async transcripts must satisfy the session invariants.
    int rc = 0;
    if (sc.policy != afc::sim::Policy::Sync && sc.policy != afc::sim::Policy::SyncParallel) {
        const auto issues = afc::runtime::check_transcript(report.transcript);
        for (const auto& msg : issues) std::cerr << "transcript invariant violated: " << msg << '\n';
        if (!issues.empty()) rc = 1;
    }

    json out = envelope(cfg, {{"subcommand", "simulate"},
                              {"graph", o.graph_path.empty() ? o.arrivals_path : o.graph_path},
                              {"policy", std::string(afc::sim::policy_name(sc.policy))},
                              {"seed", sc.seed}});
    out["report"] = report.to_json(o.events);
    write_output(out.dump(2) + "\n", o.out);
    return rc;
}

// --- verify-theorems ----------------------------------------------------------

struct VerifyOpts {
    std::string theorem = "all";
    int trials = 0; // 0: per-theorem default
    int n = 0;
    std::uint64_t seed = 1;
    std::string out;
};

afc::analytics::IndependentSet random_set(afc::Rng& rng, int n) {
    afc::analytics::IndependentSet set;
    for (int i = 0; i < n; ++i)
        set.items.push_back({static_cast<double>(rng.uniform_int(100, 100000)) / 100.0,
                             static_cast<double>(rng.uniform_int(100, 100000)) / 100.0});
    return set;
}

json verify_61(int trials, std::uint64_t seed) {
    int held = 0;
    double worst_slack = std::numeric_limits<double>::infinity();
    json failing;
    for (int t = 0; t < trials; ++t) {
        afc::Rng rng(afc::Rng::mix(seed, 0x61 + static_cast<std::uint64_t>(t)));
        auto set = random_set(rng, static_cast<int>(rng.uniform_int(2, 50)));
        auto rep = afc::analytics::check_theorem_61(set);
        if (rep.holds) ++held;
        worst_slack = std::min(worst_slack, rep.triple.l_sync_parallel - rep.triple.l_async);
        if (!rep.holds && failing.is_null()) {
            json items = json::array();
            for (auto& p : set.items) items.push_back({{"g_ms", p.g_ms}, {"e_ms", p.e_ms}});
            failing = {{"set", items},
                       {"l_sync", rep.triple.l_sync},
                       {"l_sync_parallel", rep.triple.l_sync_parallel},
                       {"l_async", rep.triple.l_async}};
        }
    }
    json out{{"theorem", "6.1"}, {"trials", trials}, {"holds", held == trials},
             {"held", held}, {"worst_case", {{"min_slack_ms", worst_slack}}}};
    if (!failing.is_null()) out["failing_instance"] = failing;
    return out;
}

json verify_62(int n, int trials, std::uint64_t seed) {
    json sections = json::array();
    bool all_hold = true;
    for (const double ratio : {0.1, 0.5, 1.0}) {
        const double e_mean = 110.0, e_sigma = 20.0;
        const double g_mean = e_mean / ratio;
        auto rep = afc::analytics::check_theorem_62(static_cast<std::size_t>(n), e_mean, e_sigma, g_mean,
                                                    static_cast<std::size_t>(trials), seed);
        const bool pass = rep.below_asymptotic || rep.rel_error <= 0.05;
        all_hold = all_hold && pass;
        sections.push_back({{"e_over_g", ratio},
                            {"n", rep.n},
                            {"trials", rep.trials},
                            {"measured_ratio", rep.measured_ratio},
                            {"predicted_ratio", rep.predicted_ratio},
                            {"rel_error", rep.rel_error},
                            {"below_asymptotic_regime", rep.below_asymptotic},
                            {"holds", pass}});
    }
    double worst = 0;
    for (auto& s : sections) worst = std::max(worst, s["rel_error"].get<double>());
    return {{"theorem", "6.2"}, {"trials", trials}, {"holds", all_hold},   {"rel_error", worst},
            {"worst_case", {{"max_rel_error", worst}}}, {"regimes", sections}};
}

json verify_63(int max_n, int trials, std::uint64_t seed) {
    int optimal = 0;
    json failing;
    for (int t = 0; t < trials; ++t) {
        afc::Rng rng(afc::Rng::mix(seed, 0x63 + static_cast<std::uint64_t>(t)));
        auto set = random_set(rng, static_cast<int>(rng.uniform_int(2, std::max(2, max_n))));
        auto rep = afc::analytics::check_theorem_63(set, 8);
        if (rep.optimal()) ++optimal;
        else if (failing.is_null()) {
            json items = json::array();
            for (auto& p : set.items) items.push_back({{"g_ms", p.g_ms}, {"e_ms", p.e_ms}});
            failing = {{"set", items}, {"lpt", rep.lpt_latency}, {"best", rep.best_latency}};
        }
    }
    // Adjacent-swap argument: fixing any order that violates decreasing-E
    // never increases the makespan.
    int swaps_ok = 0;
    const int swap_trials = 1000;
    for (int t = 0; t < swap_trials; ++t) {
        afc::Rng rng(afc::Rng::mix(seed, 0x635 + static_cast<std::uint64_t>(t)));
        auto set = random_set(rng, static_cast<int>(rng.uniform_int(2, 8)));
        std::vector<std::size_t> order(set.items.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        bool ok = true;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            if (set.items[order[i]].e_ms >= set.items[order[i + 1]].e_ms) continue; // in LPT order
            auto swapped = order;
            std::swap(swapped[i], swapped[i + 1]);
            if (afc::analytics::order_latency(set, swapped) >
                afc::analytics::order_latency(set, order) + 1e-9) {
                ok = false;
                break;
            }
        }
        if (ok) ++swaps_ok;
    }
    json out{{"theorem", "6.3"}, {"trials", trials}, {"holds", optimal == trials && swaps_ok == swap_trials},
             {"optimal", optimal}, {"adjacent_swaps_ok", swaps_ok},
             {"worst_case", {{"suboptimal_instances", trials - optimal}}}};
    if (!failing.is_null()) out["failing_instance"] = failing;
    return out;
}

int cmd_verify(const VerifyOpts& o) {
    const auto cfg = afc::config::Config::load(std::nullopt);
    json sections = json::array();
    if (o.theorem == "all" || o.theorem == "6.1")
        sections.push_back(verify_61(o.trials > 0 ? o.trials : 10000, o.seed));
    if (o.theorem == "all" || o.theorem == "6.2")
        sections.push_back(verify_62(o.n > 0 ? o.n : 10000, o.trials > 0 ? o.trials : 20, o.seed));
    if (o.theorem == "all" || o.theorem == "6.3")
        sections.push_back(verify_63(std::min(o.n > 0 ? o.n : 7, 8), o.trials > 0 ? o.trials : 500, o.seed));
    if (sections.empty()) throw std::runtime_error("unknown theorem: '" + o.theorem + "' (6.1, 6.2, 6.3, all)");

    bool all_hold = true;
    for (const auto& s : sections) all_hold = all_hold && s.at("holds").get<bool>();
    json report = envelope(cfg, {{"subcommand", "verify-theorems"}, {"theorem", o.theorem}, {"seed", o.seed}});
    report["theorems"] = sections;
    report["holds"] = all_hold;
    write_output(report.dump(2) + "\n", o.out);
    return all_hold ? 0 : 1;
}

// --- gen-train -----------------------------------------------------------------

struct GenTrainOpts {
    std::string corpus_dir;
    std::vector<std::string> graphs;
    std::size_t count = 100;
    std::string out = "train.jsonl";
    std::uint64_t seed = 42;
    double user_fraction = 0.0;
    bool validate = false;
};

int cmd_gen_train(const GenTrainOpts& o) {
    const auto cfg = afc::config::Config::load(std::nullopt);
    std::vector<afc::taskmodel::TaskGraph> corpus;
    if (!o.corpus_dir.empty()) corpus = load_corpus(o.corpus_dir);
    for (const auto& p : o.graphs) corpus.push_back(afc::taskmodel::TaskGraph::from_file(p));
    if (corpus.empty()) throw std::runtime_error("gen-train needs --corpus or --graph");

    auto stats = afc::traingen::emit_dataset(corpus, o.count, o.out, o.seed, std::nullopt, o.user_fraction);

    int rc = 0;
    if (o.validate) {
        std::map<std::string, const afc::taskmodel::TaskGraph*> by_id;
        for (const auto& g : corpus) by_id[g.graph_id()] = &g;
        std::ifstream in(o.out);
        std::string line;
        std::size_t lineno = 0, bad = 0;
        while (std::getline(in, line)) {
            ++lineno;
            json j = json::parse(line);
            afc::traingen::TrainSample sample;
            sample.prompt = j.at("prompt").get<std::string>();
            sample.target = j.at("target").get<std::string>();
            sample.meta = j.at("meta");
            const auto it = by_id.find(sample.meta.value("graph_id", std::string{}));
            if (it == by_id.end()) continue;
            for (const auto& issue : afc::traingen::validate_sample(sample, *it->second)) {
                std::cerr << o.out << ":" << lineno << ": " << issue << '\n';
                ++bad;
            }
        }
        if (bad > 0) rc = 1;
    }

    json report = envelope(cfg, {{"subcommand", "gen-train"}, {"count", o.count}, {"seed", o.seed},
                                 {"user_task_fraction", o.user_fraction}});
    report["stats"] = {{"count", stats.count}, {"out", o.out}, {"per_graph", json::object()}};
    for (const auto& [id, n] : stats.per_graph) report["stats"]["per_graph"][id] = n;
    std::cout << report.dump(2) << '\n';
    return rc;
}

// --- run-live -------------------------------------------------------------------

struct RunLiveOpts {
    std::string mode = "scripted";
    std::string script_path;
    std::string functions_path;
    std::string context;
    std::string config_file;
    std::string out;
    std::optional<double> tpot;
    std::optional<double> ttft;
};

int cmd_run_live(const RunLiveOpts& o) {
    const auto cfg = afc::config::Config::load(
        o.config_file.empty() ? std::nullopt : std::optional<std::string>(o.config_file));
    afc::runtime::FunctionRegistry registry;
    if (!o.functions_path.empty()) registry = load_registry(o.functions_path);

    afc::runtime::SessionTranscript transcript;
    if (o.mode == "scripted") {
        if (o.script_path.empty()) throw std::runtime_error("scripted mode needs --script");
        std::ifstream in(o.script_path);
        if (!in) throw std::runtime_error("cannot open script file: " + o.script_path);
        afc::runtime::ScriptSource source(read_all(in), o.tpot ? *o.tpot : cfg.tpot_ms);
        afc::runtime::EngineConfig ec;
        ec.ttft_ticks = afc::ticks_from_ms(o.ttft ? *o.ttft : cfg.ttft_ms);
        ec.trap_model = cfg.trap_model;
        ec.seed = cfg.seed;
        afc::runtime::SessionEngine engine(source, afc::runtime::make_registry_resolver(registry), ec);
        transcript = engine.run();
    } else if (o.mode == "naive-endpoint") {
        if (cfg.endpoint_url.empty())
            throw std::runtime_error("naive-endpoint mode needs endpoint_url (config file or AFC_ENDPOINT_URL)");
        afc::endpoint::EndpointConfig ep;
        ep.url = cfg.endpoint_url;
        ep.auth_header = cfg.auth_header;
        ep.auth_value = cfg.auth_value;
        ep.model = cfg.model;
        ep.tpot_ms = cfg.tpot_ms;
        afc::endpoint::EndpointSource source(ep, o.context);
        afc::runtime::EngineConfig ec;
        ec.trap_model = cfg.trap_model;
        ec.naive_restarts = true;
        afc::runtime::LiveSession session(source, registry, ec);
        transcript = session.run();
    } else {
        throw std::runtime_error("unknown mode: '" + o.mode + "' (scripted, naive-endpoint)");
    }
    write_output(transcript.to_jsonl(), o.out);
    return transcript.error ? 1 : 0;
}

// --- stub-server -----------------------------------------------------------------

struct StubOpts {
    std::string script_path;
    std::string host = "127.0.0.1";
    int port = 8089;
    double ttft = 0;
    double tpot = 0;
    std::string auth_header;
    std::string auth_value;
};

int cmd_stub_server(const StubOpts& o) {
    std::ifstream in(o.script_path);
    if (!in) throw std::runtime_error("cannot open script file: " + o.script_path);
    afc::endpoint::StubServerConfig sc;
    sc.script = read_all(in);
    sc.host = o.host;
    sc.port = o.port;
    sc.ttft_ms = o.ttft;
    sc.tpot_ms = o.tpot;
    sc.auth_header = o.auth_header;
    sc.auth_value = o.auth_value;
    afc::endpoint::StubServer server(sc);
    server.start();
    std::cout << server.url() << std::endl;
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"asynchronous LLM function calling: runtime, simulator, and analytics"};
    app.require_subcommand(1);

    ParseOpts parse_opts;
    auto* parse_cmd = app.add_subcommand("parse", "parse a CML text stream from stdin to JSON lines");
    parse_cmd->add_flag("--allow-duplicate-ids", parse_opts.allow_duplicate_ids,
                        "skip the session-level unique-id check");

    SimulateOpts sim_opts;
    auto* sim_cmd = app.add_subcommand("simulate", "replay a task graph under a scheduling policy");
    sim_cmd->add_option("--graph", sim_opts.graph_path, "task graph JSON file");
    sim_cmd->add_option("--sweep", sim_opts.sweep_dir, "directory of task graphs to sweep");
    sim_cmd->add_option("--arrivals", sim_opts.arrivals_path, "arrival schedule JSON file");
    sim_cmd->add_option("--policy", sim_opts.policy,
                        "sync, sync-parallel, async-lpt, async-random, async-naive");
    sim_cmd->add_option("--policies", sim_opts.policies, "sweep policies: 'all' or a comma list");
    sim_cmd->add_option("--seed", sim_opts.seed, "base seed");
    sim_cmd->add_option("--runs", sim_opts.runs, "sweep runs per graph/policy");
    sim_cmd->add_option("--randomize-exec", sim_opts.randomize_exec, "resample exec_ms ~ U(lo,hi), e.g. 30,500");
    sim_cmd->add_flag("--events", sim_opts.events, "include the event transcript in the report");
    sim_cmd->add_option("--out", sim_opts.out, "report output path (default stdout)");
    sim_cmd->add_option("--csv", sim_opts.csv, "sweep CSV output path");
    sim_cmd->add_option("--config", sim_opts.config_file, "config file");
    sim_cmd->add_option("--tpot", sim_opts.tpot, "TPOT override, ms");
    sim_cmd->add_option("--ttft", sim_opts.ttft, "TTFT override, ms");

    VerifyOpts verify_opts;
    auto* verify_cmd = app.add_subcommand("verify-theorems", "check the latency theorems empirically");
    verify_cmd->add_option("--theorem", verify_opts.theorem, "all, 6.1, 6.2 or 6.3");
    verify_cmd->add_option("--trials", verify_opts.trials, "trial count (0: per-theorem default)");
    verify_cmd->add_option("--n", verify_opts.n, "set size (6.2: samples per trial; 6.3: max set size)");
    verify_cmd->add_option("--seed", verify_opts.seed, "seed");
    verify_cmd->add_option("--out", verify_opts.out, "report output path (default stdout)");

    GenTrainOpts gen_opts;
    auto* gen_cmd = app.add_subcommand("gen-train", "emit fine-tuning traces as JSON lines");
    gen_cmd->add_option("--corpus", gen_opts.corpus_dir, "directory of task graphs");
    gen_cmd->add_option("--graph", gen_opts.graphs, "individual task graph files");
    gen_cmd->add_option("--count", gen_opts.count, "number of samples");
    gen_cmd->add_option("--out", gen_opts.out, "output JSONL path");
    gen_cmd->add_option("--seed", gen_opts.seed, "base seed");
    gen_cmd->add_option("--user-task-fraction", gen_opts.user_fraction,
                        "fraction of samples with a user-interrupt task");
    gen_cmd->add_flag("--validate", gen_opts.validate, "re-parse and validate every emitted sample");

    RunLiveOpts live_opts;
    auto* live_cmd = app.add_subcommand("run-live", "drive a session and stream the transcript");
    live_cmd->add_option("--mode", live_opts.mode, "scripted or naive-endpoint");
    live_cmd->add_option("--script", live_opts.script_path, "CML script file (scripted mode)");
    live_cmd->add_option("--functions", live_opts.functions_path, "function registry JSON");
    live_cmd->add_option("--context", live_opts.context, "initial context (naive-endpoint mode)");
    live_cmd->add_option("--config", live_opts.config_file, "config file");
    live_cmd->add_option("--out", live_opts.out, "transcript output path (default stdout)");
    live_cmd->add_option("--tpot", live_opts.tpot, "TPOT override, ms");
    live_cmd->add_option("--ttft", live_opts.ttft, "TTFT override, ms");

    StubOpts stub_opts;
    auto* stub_cmd = app.add_subcommand("stub-server", "serve a scripted token stream over HTTP");
    stub_cmd->add_option("--script", stub_opts.script_path, "CML script file")->required();
    stub_cmd->add_option("--host", stub_opts.host, "bind host");
    stub_cmd->add_option("--port", stub_opts.port, "bind port");
    stub_cmd->add_option("--ttft", stub_opts.ttft, "delay before the first token of each request, ms");
    stub_cmd->add_option("--tpot", stub_opts.tpot, "delay between tokens, ms");
    stub_cmd->add_option("--auth-header", stub_opts.auth_header, "required auth header name");
    stub_cmd->add_option("--auth-value", stub_opts.auth_value, "required auth header value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*parse_cmd) return cmd_parse(parse_opts);
        if (*sim_cmd) return cmd_simulate(sim_opts);
        if (*verify_cmd) return cmd_verify(verify_opts);
        if (*gen_cmd) return cmd_gen_train(gen_opts);
        if (*live_cmd) return cmd_run_live(live_opts);
        if (*stub_cmd) return cmd_stub_server(stub_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
