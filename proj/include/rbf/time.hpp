#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace rbf {

/// All time in the project has 1 ms resolution. Timestamps are milliseconds
/// since an epoch: the Unix epoch for wall-clock use, t=0 of the run for the
/// simulator.
using Millis = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<Millis>;

inline constexpr std::int64_t kMsPerMinute = 60'000;
inline constexpr std::int64_t kMsPerHour = 3'600'000;

inline Millis from_minutes(double minutes) {
    return Millis{std::llround(minutes * static_cast<double>(kMsPerMinute))};
}

inline Millis from_hours(double hours) {
    return Millis{std::llround(hours * static_cast<double>(kMsPerHour))};
}

inline double to_minutes(Millis d) {
    return static_cast<double>(d.count()) / static_cast<double>(kMsPerMinute);
}

inline double to_hours(Millis d) {
    return static_cast<double>(d.count()) / static_cast<double>(kMsPerHour);
}

inline constexpr Timestamp at_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }

inline constexpr std::int64_t ms_of(Timestamp t) { return t.time_since_epoch().count(); }

} // namespace rbf
