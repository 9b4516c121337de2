// SPDX-License-Identifier: Apache-2.0
#include "afc/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "afc/rng.hpp"

namespace afc::analytics {

void validate(const IndependentSet& set) {
    if (set.items.empty()) throw std::invalid_argument("independent set must be nonempty");
    for (const GePair& p : set.items)
        if (p.g_ms <= 0 || p.e_ms <= 0) throw std::invalid_argument("G and E must be positive");
}

double latency_sync(const IndependentSet& set) {
    validate(set);
    double total = 0;
    for (const GePair& p : set.items) total += p.g_ms + p.e_ms;
    return total;
}

double latency_sync_parallel(const IndependentSet& set) {
    validate(set);
    double gsum = 0, emax = 0;
    for (const GePair& p : set.items) {
        gsum += p.g_ms;
        emax = std::max(emax, p.e_ms);
    }
    return gsum + emax;
}

double latency_async_lpt(const IndependentSet& set) {
    validate(set);
    std::vector<std::size_t> order(set.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return set.items[a].e_ms > set.items[b].e_ms; });
    return order_latency(set, order);
}

double order_latency(const IndependentSet& set, const std::vector<std::size_t>& order) {
    double gprefix = 0, makespan = 0;
    for (std::size_t idx : order) {
        gprefix += set.items[idx].g_ms;
        makespan = std::max(makespan, gprefix + set.items[idx].e_ms);
    }
    return makespan;
}

LatencyTriple latency_triple(const IndependentSet& set) {
    return {latency_sync(set), latency_sync_parallel(set), latency_async_lpt(set)};
}

Theorem61Report check_theorem_61(const IndependentSet& set) {
    Theorem61Report r;
    r.triple = latency_triple(set);
    r.degenerate = set.items.size() < 2;
    const bool weak = r.triple.l_async <= r.triple.l_sync_parallel + 1e-9;
    const bool strict = r.degenerate ? r.triple.l_sync_parallel <= r.triple.l_sync + 1e-9
                                     : r.triple.l_sync_parallel < r.triple.l_sync;
    r.holds = weak && strict;
    return r;
}

SpeedupEstimate speedup_estimate(std::size_t n, double e_mean, double e_sigma, double g_mean) {
    SpeedupEstimate s;
    s.n = n;
    s.mean_e = e_mean;
    s.mean_g = g_mean;
    s.sigma_e = e_sigma;
    s.predicted_ratio = 1.0 + e_mean / g_mean;
    s.max_e_approx = e_mean + e_sigma * std::sqrt(2.0 * std::log(static_cast<double>(std::max<std::size_t>(n, 2))));
    return s;
}

Theorem62Report check_theorem_62(std::size_t n, double e_mean, double e_sigma, double g_mean,
                                 std::size_t trials, std::uint64_t seed) {
    constexpr double kFloorMs = 0.01;
    Theorem62Report r;
    r.n = n;
    r.trials = trials;
    r.predicted_ratio = 1.0 + e_mean / g_mean;
    r.below_asymptotic = n < 1000;

    double ratio_sum = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(Rng::mix(seed, t));
        IndependentSet set;
        set.items.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            double e = rng.normal(e_mean, e_sigma);
            if (e < kFloorMs) {
                e = kFloorMs;
                ++r.clipped;
            }
            set.items.push_back({g_mean, e});
        }
        ratio_sum += latency_sync(set) / latency_async_lpt(set);
    }
    if (r.clipped * 100 > n * trials)
        throw DegenerateConfig("normal sampling clipped more than 1% of execution times");
    r.measured_ratio = ratio_sum / static_cast<double>(trials);
    r.rel_error = std::abs(r.measured_ratio - r.predicted_ratio) / r.predicted_ratio;
    return r;
}

Theorem63Report check_theorem_63(const IndependentSet& set, std::size_t max_exhaustive_n) {
    validate(set);
    const std::size_t n = set.items.size();
    if (n > max_exhaustive_n)
        throw TooLarge("exhaustive order search is capped at n = " + std::to_string(max_exhaustive_n));

    Theorem63Report r;
    r.lpt_latency = latency_async_lpt(set);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    r.best_latency = std::numeric_limits<double>::infinity();
    do {
        const double m = order_latency(set, order);
        if (m < r.best_latency) {
            r.best_latency = m;
            r.witness_order = order;
        }
    } while (std::next_permutation(order.begin(), order.end()));
    return r;
}

} // namespace afc::analytics
