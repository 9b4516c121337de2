// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace afc {

// Virtual-time unit: one tick = 0.01 ms. All simulator arithmetic is done in
// integer ticks so that identical seeds give identical event times.
using Tick = std::int64_t;

inline constexpr double kTickMs = 0.01;

inline Tick ticks_from_ms(double ms) { return static_cast<Tick>(std::llround(ms * 100.0)); }

inline double ms_from_ticks(Tick t) { return static_cast<double>(t) * kTickMs; }

} // namespace afc
