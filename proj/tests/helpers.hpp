// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "afc/analytics.hpp"
#include "afc/cml.hpp"
#include "afc/rng.hpp"
#include "afc/taskmodel.hpp"

namespace testutil {

inline std::string data_dir() { return AFC_DATA_DIR; }
inline std::string golden_dir() { return AFC_GOLDEN_DIR; }

inline std::string corpus(const std::string& rel) { return data_dir() + "/corpus/" + rel; }

// Independent set with g/e drawn on the 0.01 ms tick grid, so closed forms
// and the tick-based simulator can be compared exactly.
inline afc::analytics::IndependentSet random_tick_set(afc::Rng& rng, int n, double lo_ms = 1.0,
                                                      double hi_ms = 1000.0) {
    afc::analytics::IndependentSet set;
    const auto lo = static_cast<std::int64_t>(lo_ms * 100), hi = static_cast<std::int64_t>(hi_ms * 100);
    for (int i = 0; i < n; ++i)
        set.items.push_back({static_cast<double>(rng.uniform_int(lo, hi)) / 100.0,
                             static_cast<double>(rng.uniform_int(lo, hi)) / 100.0});
    return set;
}

// Task graph equivalent of an independent set: tpot 0.01 ms, body_tokens =
// g in ticks, so G(f) is exact.
inline afc::taskmodel::TaskGraph graph_from_set(const afc::analytics::IndependentSet& set) {
    afc::taskmodel::TaskGraph g;
    g.set_tpot_ms(0.01);
    g.set_graph_id("independent_set");
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        afc::taskmodel::CallNode n;
        char id[8];
        std::snprintf(id, sizeof id, "f%03zu", i);
        n.id = id;
        n.name = n.id;
        n.body_tokens = static_cast<std::int64_t>(set.items[i].g_ms * 100.0 + 0.5);
        n.exec_ms = set.items[i].e_ms;
        g.add_node(std::move(n));
    }
    return g;
}

inline std::string random_identifier(afc::Rng& rng, int salt) {
    static const char* stems[] = {"job", "task", "call", "fetch", "run"};
    return std::string(stems[rng.uniform_int(0, 4)]) + "_" + std::to_string(salt);
}

inline afc::cml::CmlBlock random_block(afc::Rng& rng, int salt) {
    const auto roll = rng.uniform_int(0, 9);
    if (roll < 5) {
        afc::cml::FunctionCall c;
        if (rng.uniform01() < 0.5) c.id = random_identifier(rng, salt);
        c.body = "do_" + std::to_string(salt) + "(x, y)";
        return afc::cml::CmlBlock{std::move(c)};
    }
    if (roll < 8) {
        afc::cml::Interrupt i;
        i.id = random_identifier(rng, salt);
        i.value = rng.uniform01() < 0.2 ? "" : "value " + std::to_string(rng.uniform_int(0, 999));
        return afc::cml::CmlBlock{std::move(i)};
    }
    return afc::cml::CmlBlock{afc::cml::Trap{}};
}

} // namespace testutil
