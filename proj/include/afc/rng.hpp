// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace afc {

// mt19937_64 with hand-rolled distributions. The standard distributions are
// implementation-defined, which would break golden files across toolchains;
// these are pinned to one concrete mapping.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(eng_() % span);
    }

    // Box-Muller with a cached spare
    double normal(double mean, double sigma) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sigma * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + sigma * r * std::cos(theta);
    }

    // splitmix64 step, for deriving independent per-trial seeds
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace afc
