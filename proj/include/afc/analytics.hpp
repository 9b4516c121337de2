// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace afc::analytics {

/// (G(f), E(f)) pair for one function: generation latency and execution time
/// in milliseconds.
struct GePair {
    double g_ms = 0;
    double e_ms = 0;
};

/// A set of functions with no dependencies between them.
struct IndependentSet {
    std::vector<GePair> items;
};

void validate(const IndependentSet& set); // throws std::invalid_argument

/// Sequential generation and execution: sum G + sum E.
double latency_sync(const IndependentSet& set);

/// All calls generated upfront, executed concurrently: sum G + max E.
double latency_sync_parallel(const IndependentSet& set);

/// Interleaved generation/execution in decreasing-E order: each call f_i
/// starts executing once all calls generated at or before it are out, so its
/// completion is C(f_i) = sum_{j<=i} G(f_j) + E(f_i); the latency is max C.
/// Ties in E keep input order, which leaves the max unchanged.
double latency_async_lpt(const IndependentSet& set);

struct LatencyTriple {
    double l_sync = 0;
    double l_sync_parallel = 0;
    double l_async = 0;
};

LatencyTriple latency_triple(const IndependentSet& set);

/// L_Async <= L_Sync-Parallel < L_Sync. The strict part needs two or more
/// functions; single-element sets are flagged degenerate (all three equal).
struct Theorem61Report {
    bool holds = false;
    bool degenerate = false;
    LatencyTriple triple;
};

Theorem61Report check_theorem_61(const IndependentSet& set);

/// Order-statistics approximation behind the speedup ratio: predicted
/// L_Sync/L_Async is 1 + mean_e/mean_g, with max E approximated by
/// mean_e + sigma_e * sqrt(2 ln n).
struct SpeedupEstimate {
    double mean_e = 0;
    double mean_g = 0;
    double sigma_e = 0;
    std::size_t n = 0;
    double predicted_ratio = 0;
    double max_e_approx = 0;
};

SpeedupEstimate speedup_estimate(std::size_t n, double e_mean, double e_sigma, double g_mean);

class DegenerateConfig : public std::runtime_error {
public:
    explicit DegenerateConfig(const std::string& what) : std::runtime_error(what) {}
};

/// Monte-Carlo check of the speedup ratio: samples E ~ Normal(e_mean,
/// e_sigma) clipped at 0.01 ms, fixed G = g_mean, and compares the measured
/// mean L_Sync/L_Async against 1 + e_mean/g_mean. Throws DegenerateConfig
/// when clipping touches more than 1% of the samples.
struct Theorem62Report {
    std::size_t n = 0;
    std::size_t trials = 0;
    double measured_ratio = 0;
    double predicted_ratio = 0;
    double rel_error = 0;
    std::size_t clipped = 0;
    bool below_asymptotic = false; // n < 1000: the approximation is asymptotic
};

Theorem62Report check_theorem_62(std::size_t n, double e_mean, double e_sigma, double g_mean,
                                 std::size_t trials, std::uint64_t seed);

class TooLarge : public std::runtime_error {
public:
    explicit TooLarge(const std::string& what) : std::runtime_error(what) {}
};

/// Exhaustive optimality check: enumerates every generation order and
/// verifies none beats the decreasing-E (LPT) order.
struct Theorem63Report {
    double lpt_latency = 0;
    double best_latency = 0;
    std::vector<std::size_t> witness_order; // indices into the set, best found
    bool optimal() const { return lpt_latency <= best_latency + 1e-9; }
};

Theorem63Report check_theorem_63(const IndependentSet& set, std::size_t max_exhaustive_n = 8);

/// Makespan of one explicit generation order (completion-time max).
double order_latency(const IndependentSet& set, const std::vector<std::size_t>& order);

} // namespace afc::analytics
