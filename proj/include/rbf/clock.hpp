#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <utility>

#include "rbf/time.hpp"

namespace rbf {

/// Injected time source. Everything that stamps or waits goes through this so
/// the same code runs against the wall clock or a virtual one.
class Clock {
public:
    virtual ~Clock() = default;
    [[nodiscard]] virtual Timestamp now() const = 0;
    virtual void sleep_until(Timestamp t) = 0;
};

class SystemClock final : public Clock {
public:
    [[nodiscard]] Timestamp now() const override;
    void sleep_until(Timestamp t) override;
};

/// Virtual clock for tests and simulation. Sleeping jumps time forward and
/// fires any actions scheduled at or before the wake-up instant, in
/// (time, scheduling order) order, with now() set to each action's time.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(Timestamp start = Timestamp{}) : now_(start) {}

    [[nodiscard]] Timestamp now() const override;
    void sleep_until(Timestamp t) override;

    void schedule(Timestamp t, std::function<void()> action);
    void advance_to(Timestamp t) { sleep_until(t); }

private:
    mutable std::mutex mu_;
    Timestamp now_;
    std::uint64_t next_id_ = 0;
    std::multimap<std::pair<Timestamp, std::uint64_t>, std::function<void()>> pending_;
};

} // namespace rbf
