#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string_view>
#include <vector>

#include "rbf/time.hpp"

namespace rbf {

/// Simulator event kinds. The enumerator order is the tie-break rank for
/// events sharing a timestamp: sensor data lands first, allocations open
/// before work completes, completions before expiry (so a publish exactly at
/// the time limit counts), and the edge polls last so it sees every publish
/// of that instant.
enum class EventKind : std::uint8_t {
    SensorEmit,
    AllocationOpen,
    SimTaskDone,
    TransformDone,
    TrainDone,
    AllocationExpire,
    TransferDone,
    PollTick,
};

std::string_view to_string(EventKind kind) noexcept;

/// Deterministic discrete-event queue ordered by (time, kind rank, insertion
/// order). Handlers may schedule further events, never in the past.
class EventQueue {
public:
    using Handler = std::function<void()>;

    void schedule(Timestamp t, EventKind kind, Handler fn);

    /// Dispatches every event with time < end, in order. Returns the number
    /// dispatched.
    std::size_t run_until(Timestamp end);

    [[nodiscard]] Timestamp now() const noexcept { return now_; }
    [[nodiscard]] EventKind current_kind() const noexcept { return current_; }
    [[nodiscard]] bool empty() const noexcept { return heap_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return heap_.size(); }

private:
    struct Item {
        Timestamp time;
        EventKind kind;
        std::uint64_t seq;
        Handler fn;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const noexcept {
            if (a.time != b.time) return a.time > b.time;
            if (a.kind != b.kind) return a.kind > b.kind;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<Item, std::vector<Item>, Later> heap_;
    std::uint64_t next_seq_ = 0;
    Timestamp now_{};
    EventKind current_ = EventKind::SensorEmit;
};

} // namespace rbf
