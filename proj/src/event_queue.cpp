#include "rbf/event_queue.hpp"

#include "rbf/error.hpp"

namespace rbf {

std::string_view to_string(EventKind kind) noexcept {
    switch (kind) {
    case EventKind::SensorEmit: return "sensor_emit";
    case EventKind::AllocationOpen: return "allocation_open";
    case EventKind::SimTaskDone: return "sim_task_done";
    case EventKind::TransformDone: return "transform_done";
    case EventKind::TrainDone: return "train_done";
    case EventKind::AllocationExpire: return "allocation_expire";
    case EventKind::TransferDone: return "transfer_done";
    case EventKind::PollTick: return "poll_tick";
    }
    return "unknown";
}

void EventQueue::schedule(Timestamp t, EventKind kind, Handler fn) {
    if (t < now_) throw Error(ErrorCode::InvalidArgument, "event scheduled in the past");
    heap_.push(Item{t, kind, next_seq_++, std::move(fn)});
}

std::size_t EventQueue::run_until(Timestamp end) {
    std::size_t n = 0;
    while (!heap_.empty() && heap_.top().time < end) {
        // top() is const; the item is popped before the handler can push.
        Item item = std::move(const_cast<Item&>(heap_.top()));
        heap_.pop();
        now_ = item.time;
        current_ = item.kind;
        item.fn();
        ++n;
    }
    return n;
}

} // namespace rbf
