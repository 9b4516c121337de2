// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "afc/taskmodel.hpp"
#include "afc/rng.hpp"
#include "helpers.hpp"

using namespace afc;
using namespace afc::taskmodel;

namespace {

TaskGraph chain3() {
    TaskGraph g;
    g.add_node({"a", "a", 10, 100.0, {}});
    g.add_node({"b", "b", 10, 100.0, {"a"}});
    g.add_node({"c", "c", 10, 100.0, {"b"}});
    return g;
}

TaskGraph pasta() {
    return TaskGraph::from_file(testutil::corpus("mixed/pasta.json"));
}

} // namespace

TEST_CASE("ready set on a chain") {
    TaskGraph g = chain3();
    SessionState s = SessionState::fresh(g);
    CHECK(ready_set(g, s) == std::set<std::string>{"a"});
    s.pending.erase("a");
    s.completed.insert("a");
    CHECK(ready_set(g, s) == std::set<std::string>{"b"});
}

TEST_CASE("ready set on the pasta graph: two independent roots") {
    TaskGraph g = pasta();
    SessionState s = SessionState::fresh(g);
    CHECK(ready_set(g, s) == std::set<std::string>{"boil_water", "chop_vegetables"});
}

TEST_CASE("ready set validates the partition") {
    TaskGraph g = chain3();
    SessionState s = SessionState::fresh(g);
    s.in_flight.insert("a"); // now in two sets
    CHECK_THROWS_AS(ready_set(g, s), InvalidState);
    SessionState missing;
    CHECK_THROWS_AS(ready_set(g, missing), InvalidState);
}

TEST_CASE("lpt_next picks the longest estimate, ids break ties") {
    TaskGraph g;
    g.add_node({"x", "x", 1, 100.0, {}});
    g.add_node({"y", "y", 1, 400.0, {}});
    g.add_node({"z", "z", 1, 50.0, {}});
    SessionState s = SessionState::fresh(g);
    CHECK(*lpt_next(g, s) == "y");

    TaskGraph ties;
    ties.add_node({"b", "b", 1, 10.0, {}});
    ties.add_node({"a", "a", 1, 10.0, {}});
    CHECK(*lpt_next(ties, SessionState::fresh(ties)) == "a");

    SessionState done;
    done.completed = {"x", "y", "z"};
    CHECK(!lpt_next(g, done));
}

TEST_CASE("lpt_next prefers the longer follow-up once prerequisites finish") {
    // Two finished reads unlock a long summarize step and a short fetch.
    TaskGraph g;
    g.add_node({"read_html", "read_html", 1, 150.0, {}});
    g.add_node({"read_xls", "read_xls", 1, 120.0, {}});
    g.add_node({"summarize_save_pdf", "summarize_save_pdf", 1, 400.0, {"read_html"}});
    g.add_node({"fetch_contact", "fetch_contact", 1, 130.0, {"read_xls"}});
    SessionState s;
    s.completed = {"read_html", "read_xls"};
    s.pending = {"summarize_save_pdf", "fetch_contact"};
    CHECK(*lpt_next(g, s) == "summarize_save_pdf");
}

TEST_CASE("should_trap") {
    TaskGraph g = chain3();
    SessionState s = SessionState::fresh(g);
    CHECK_FALSE(should_trap(g, s, false)); // a is ready

    s.pending.erase("a");
    s.in_flight.insert("a");
    CHECK(should_trap(g, s, false));       // b, c pending on a
    CHECK_FALSE(should_trap(g, s, true));  // prose still to generate

    SessionState all_done;
    all_done.completed = {"a", "b", "c"};
    CHECK_FALSE(should_trap(g, all_done, false)); // session ends with Eos instead
}

TEST_CASE("should_trap flips false only when a completion unlocks work") {
    // While trapped, the only legal state change is an in-flight call
    // completing; the trap clears exactly when that completion frees a
    // dependency.
    TaskGraph g;
    g.add_node({"a", "a", 1, 100.0, {}});
    g.add_node({"b", "b", 1, 100.0, {}});
    g.add_node({"c", "c", 1, 100.0, {"a"}});
    SessionState s;
    s.in_flight = {"a", "b"};
    s.pending = {"c"};
    REQUIRE(should_trap(g, s, false));

    SessionState b_done = s; // unrelated completion: still trapped
    b_done.in_flight.erase("b");
    b_done.completed.insert("b");
    CHECK(should_trap(g, b_done, false));

    SessionState a_done = s; // dependency completion: trap clears
    a_done.in_flight.erase("a");
    a_done.completed.insert("a");
    CHECK_FALSE(should_trap(g, a_done, false));
}

TEST_CASE("topological check reports a cycle") {
    TaskGraph g;
    g.add_node({"a", "a", 1, 1.0, {"b"}});
    g.add_node({"b", "b", 1, 1.0, {"a"}});
    g.validate();
    auto cyc = find_cycle(g);
    REQUIRE(cyc);
    std::set<std::string> ids(cyc->begin(), cyc->end());
    CHECK(ids == std::set<std::string>{"a", "b"});
    CHECK_THROWS_AS(topological_check(g), CycleFound);
}

TEST_CASE("random DAGs built from a shuffled topological order stay acyclic") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        // Construct-by-order oracle: edges only point earlier in the order.
        const int n = 20;
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
        TaskGraph g;
        std::vector<std::string> names(n);
        for (int pos = 0; pos < n; ++pos) names[order[pos]] = "n" + std::to_string(order[pos]);
        for (int pos = 0; pos < n; ++pos) {
            CallNode node{names[order[pos]], names[order[pos]], 1, 1.0, {}};
            for (int back = 0; back < pos; ++back)
                if (rng.uniform01() < 0.2) node.deps.push_back(names[order[back]]);
            g.add_node(std::move(node));
        }
        g.validate();
        CHECK(!find_cycle(g));
        CHECK(topological_order(g).size() == static_cast<std::size_t>(n));
    }
}

TEST_CASE("property: running lpt_next to fixpoint is a valid topological order") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 12;
        TaskGraph g;
        for (int i = 0; i < n; ++i) {
            CallNode node{"n" + std::to_string(i), "f", 1, rng.uniform(1.0, 500.0), {}};
            for (int j = 0; j < i; ++j)
                if (rng.uniform01() < 0.25) node.deps.push_back("n" + std::to_string(j));
            g.add_node(std::move(node));
        }
        SessionState s = SessionState::fresh(g);
        std::vector<std::string> visited;
        while (auto pick = lpt_next(g, s)) {
            CHECK(ready_set(g, s).count(*pick) == 1);
            s.pending.erase(*pick);
            s.completed.insert(*pick);
            visited.push_back(*pick);
        }
        CHECK(visited.size() == static_cast<std::size_t>(n));
        std::set<std::string> seen;
        for (const auto& id : visited) {
            for (const auto& d : g.node(id).deps) CHECK(seen.count(d) == 1);
            seen.insert(id);
        }
    }
}

TEST_CASE("graph json round trip and diagnostics") {
    TaskGraph g = pasta();
    CHECK(g.size() == 5);
    CHECK(g.tpot_ms() == 5.0);
    CHECK(g.gen_ms("boil_water") == doctest::Approx(50.0));
    TaskGraph again = TaskGraph::from_json(g.to_json());
    CHECK(again.to_json() == g.to_json());

    CHECK_THROWS_AS(TaskGraph::from_json(nlohmann::json{{"tpot_ms", 5.0}}), GraphInvalid);
    auto bad = g.to_json();
    bad["tasks"][0]["exec_ms"] = -1.0;
    CHECK_THROWS_AS(TaskGraph::from_json(bad), GraphInvalid);
}

TEST_CASE("with_random_exec is seeded and in range") {
    TaskGraph g = pasta();
    TaskGraph a = with_random_exec(g, 42, 1.0, 1000.0);
    TaskGraph b = with_random_exec(g, 42, 1.0, 1000.0);
    TaskGraph c = with_random_exec(g, 43, 1.0, 1000.0);
    bool same_as_a = true, differs_from_c = false;
    for (const auto& [id, n] : a.nodes()) {
        CHECK(n.exec_ms >= 1.0);
        CHECK(n.exec_ms < 1000.0);
        same_as_a = same_as_a && b.node(id).exec_ms == n.exec_ms;
        differs_from_c = differs_from_c || c.node(id).exec_ms != n.exec_ms;
    }
    CHECK(same_as_a);
    CHECK(differs_from_c);
}
