#include "rbf/clock.hpp"

#include <thread>

namespace rbf {

Timestamp SystemClock::now() const {
    return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
}

void SystemClock::sleep_until(Timestamp t) { std::this_thread::sleep_until(t); }

Timestamp VirtualClock::now() const {
    std::lock_guard lock(mu_);
    return now_;
}

void VirtualClock::schedule(Timestamp t, std::function<void()> action) {
    std::lock_guard lock(mu_);
    pending_.emplace(std::make_pair(t, next_id_++), std::move(action));
}

void VirtualClock::sleep_until(Timestamp t) {
    for (;;) {
        std::function<void()> action;
        {
            std::lock_guard lock(mu_);
            auto it = pending_.begin();
            if (it == pending_.end() || it->first.first > t) {
                if (t > now_) now_ = t;
                return;
            }
            if (it->first.first > now_) now_ = it->first.first;
            action = std::move(it->second);
            pending_.erase(it);
        }
        // Run unlocked: actions may call now() or schedule().
        action();
    }
}

} // namespace rbf
