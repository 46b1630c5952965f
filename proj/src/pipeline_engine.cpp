#include "rbf/pipeline_engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "rbf/error.hpp"

namespace rbf {

std::string_view to_string(Stage s) noexcept {
    switch (s) {
    case Stage::Pdc: return "pdc";
    case Stage::Sim: return "sim";
    case Stage::Transform: return "transform";
    case Stage::Train: return "train";
    case Stage::Done: return "done";
    }
    return "unknown";
}

StageDurations StageDurations::deterministic() {
    StageDurations d;
    d.cfd_std = 0;
    d.task_scale = 1.0;
    d.task_std = 0;
    d.transform_std = 0;
    for (auto& [type, t] : d.train) t.std = 0;
    d.overhead_mean = 14.0;
    d.overhead_std = 0;
    return d;
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0; }
bool finite_pos(double x) { return std::isfinite(x) && x > 0; }

} // namespace

void StageDurations::validate() const {
    require(sim_tasks >= 1, "sim_tasks must be >= 1");
    require(finite_pos(cfd_mean) && finite_nonneg(cfd_std), "cfd mean must be > 0 and std >= 0");
    require(finite_pos(task_scale) && finite_nonneg(task_std), "task scale must be > 0 and task std >= 0");
    require(finite_pos(transform_mean) && finite_nonneg(transform_std), "transform mean must be > 0 and std >= 0");
    require(!train.empty(), "at least one model must be trained");
    for (const auto& [type, t] : train) {
        require(finite_pos(t.mean) && finite_nonneg(t.std),
                std::string(to_string(type)) + " train mean must be > 0 and std >= 0");
    }
    require(std::isfinite(train_correlation) && train_correlation >= -1 && train_correlation <= 1,
            "train_correlation must lie in [-1, 1]");
    require(finite_pos(overhead_mean) && finite_nonneg(overhead_std), "overhead mean must be > 0 and std >= 0");
    require(finite_pos(history_scale), "history_scale must be > 0");
}

double StageDurations::deterministic_total_min() const {
    double slowest = 0;
    for (const auto& [type, t] : train) slowest = std::max(slowest, t.mean * history_scale);
    return cfd_mean + transform_mean + slowest + overhead_mean;
}

InstancePlan sample_plan(const StageDurations& d, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    const double z = d.cfd_std > 0 || d.train_correlation != 0 ? unit(rng) : 0.0;

    InstancePlan p;
    const double floor = 0.1 * d.cfd_mean;
    const double centre = d.cfd_mean * d.task_scale + d.cfd_std * z;
    p.sim_tasks.reserve(static_cast<std::size_t>(d.sim_tasks));
    for (int i = 0; i < d.sim_tasks; ++i) {
        const double jitter = d.task_std > 0 ? d.task_std * unit(rng) : 0.0;
        p.sim_tasks.push_back(from_minutes(std::max(centre + jitter, floor)));
    }
    p.transform = from_minutes(sample_truncated_normal(rng, d.transform_mean, d.transform_std, 0.1 * d.transform_mean));
    const double rho = d.train_correlation;
    const double rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (const auto& [type, t] : d.train) {
        const double own = rest > 0 && t.std > 0 ? unit(rng) : 0.0;
        const double zm = rho * z + rest * own;
        p.train[type] = from_minutes(std::max(t.mean + t.std * zm, 0.1 * t.mean) * d.history_scale);
    }
    p.overhead = from_minutes(sample_truncated_normal(rng, d.overhead_mean, d.overhead_std, 0.1 * d.overhead_mean));
    return p;
}

InstancePlan scaled_profile(const StageDurations& d, Millis total) {
    double slowest = 0;
    for (const auto& [type, t] : d.train) slowest = std::max(slowest, t.mean);
    const double base = d.cfd_mean + d.transform_mean + slowest + d.overhead_mean;
    const double s = static_cast<double>(total.count()) / (base * static_cast<double>(kMsPerMinute));

    InstancePlan p;
    p.sim_tasks.assign(static_cast<std::size_t>(d.sim_tasks), from_minutes(s * d.cfd_mean));
    p.transform = from_minutes(s * d.transform_mean);
    Millis longest{0};
    for (const auto& [type, t] : d.train) {
        p.train[type] = from_minutes(s * t.mean * d.history_scale);
        longest = std::max(longest, p.train[type]);
    }
    // The overhead absorbs rounding so the slowest model lands exactly on
    // `total`.
    p.overhead = std::max(Millis{0}, total - p.sim_tasks.front() - p.transform - longest);
    return p;
}

std::string publish_csv_header() { return "time_ms,model_type,tier,cutoff_ms,instance_id,allocation_id"; }

std::string to_csv_row(const PublishEvent& e) {
    std::ostringstream s;
    s << ms_of(e.time) << ',' << to_string(e.model_type) << ',' << to_string(e.tier) << ',' << ms_of(e.cutoff) << ','
      << e.instance_id << ',';
    if (e.allocation_id) s << *e.allocation_id;
    return s.str();
}

std::string to_json_line(const PublishEvent& e) {
    nlohmann::json j;
    j["time_ms"] = ms_of(e.time);
    j["model_type"] = to_string(e.model_type);
    j["tier"] = to_string(e.tier);
    j["cutoff_ms"] = ms_of(e.cutoff);
    j["instance_id"] = e.instance_id;
    if (e.allocation_id) j["allocation_id"] = *e.allocation_id;
    return j.dump();
}

PipelineInstance launch_instance(std::uint64_t id, Tier tier, Timestamp now, Millis history_window, InstancePlan plan,
                                 const std::optional<Allocation>& allocation,
                                 std::vector<PipelineEvent>& first_events) {
    if (tier == Tier::Opportunistic && (!allocation || now < allocation->start || now >= allocation->expiry)) {
        throw Error(ErrorCode::NoActiveAllocation, "opportunistic launch at " + std::to_string(ms_of(now)) + " ms");
    }
    if (plan.sim_tasks.empty() || plan.train.empty()) {
        throw Error(ErrorCode::InvalidArgument, "plan needs at least one sim task and one model");
    }
    PipelineInstance inst;
    inst.id = id;
    inst.tier = tier;
    if (tier == Tier::Opportunistic) inst.allocation_id = allocation->id;
    inst.data_cutoff = now;
    inst.history_window = history_window;
    inst.state = Stage::Sim;
    inst.sim_tasks_remaining = static_cast<std::uint32_t>(plan.sim_tasks.size());
    for (Millis d : plan.sim_tasks) first_events.push_back({EventKind::SimTaskDone, now + d, std::nullopt});
    inst.plan = std::move(plan);
    return inst;
}

namespace {

[[noreturn]] void bad_transition(const PipelineInstance& inst, const PipelineEvent& ev) {
    throw Error(ErrorCode::InvalidTransition, std::string(to_string(ev.kind)) + " while instance " +
                                                  std::to_string(inst.id) + " is in " +
                                                  std::string(to_string(inst.state)));
}

} // namespace

AdvanceResult advance(PipelineInstance& inst, const PipelineEvent& ev) {
    AdvanceResult out;
    switch (ev.kind) {
    case EventKind::SimTaskDone:
        if (inst.state != Stage::Sim || inst.sim_tasks_remaining == 0) bad_transition(inst, ev);
        if (--inst.sim_tasks_remaining == 0) {
            inst.sim_end = ev.time;
            inst.state = Stage::Transform;
            out.follow_ups.push_back({EventKind::TransformDone, ev.time + inst.plan.transform, std::nullopt});
        }
        break;
    case EventKind::TransformDone:
        if (inst.state != Stage::Transform) bad_transition(inst, ev);
        inst.transform_end = ev.time;
        inst.state = Stage::Train;
        for (const auto& [type, d] : inst.plan.train) {
            out.follow_ups.push_back({EventKind::TrainDone, ev.time + inst.plan.gpu_wait + d + inst.plan.overhead, type});
        }
        break;
    case EventKind::TrainDone: {
        if (inst.state != Stage::Train || !ev.model || !inst.plan.train.contains(*ev.model) ||
            inst.train_done.contains(*ev.model)) {
            bad_transition(inst, ev);
        }
        inst.train_done[*ev.model] = ev.time;
        out.publishes.push_back(
            {ev.time, *ev.model, inst.tier, inst.data_cutoff, inst.id, inst.allocation_id, inst.history_window});
        if (inst.train_done.size() == inst.plan.train.size()) inst.state = Stage::Done;
        break;
    }
    default: bad_transition(inst, ev);
    }
    return out;
}

void BatchTierConfig::validate() const {
    require(finite_pos(allocation_limit_h), "allocation_limit_h must be > 0");
    require(std::isfinite(admission_k) && admission_k >= 0, "admission_k must be >= 0");
    require(iteration_min.mean() > 0, "iteration duration mean must be > 0");
    require(finite_pos(history_window_h), "history_window_h must be > 0");
    profile.validate();
}

Millis BatchTierConfig::admission_threshold() const {
    double need = iteration_min.mean() + admission_k * iteration_min.std();
    if (split_gpu_wait) need += gpu_wait_min.mean() + admission_k * gpu_wait_min.std();
    return from_minutes(need);
}

namespace {

/// Shared plumbing of both tier kinds: owns live instances and routes their
/// events through the queue.
struct TierRuntime : std::enable_shared_from_this<TierRuntime> {
    TierRuntime(EventQueue& q, Rng r, IdSource& i, Timestamp e, PublishSink s, TierHooks h)
        : queue(q), rng(std::move(r)), ids(i), end(e), sink(std::move(s)), hooks(std::move(h)) {}

    EventQueue& queue;
    Rng rng;
    IdSource& ids;
    Timestamp end;
    PublishSink sink;
    TierHooks hooks;
    std::map<std::uint64_t, PipelineInstance> live;
    std::function<void(Timestamp)> on_done;

    void launch(Tier tier, Timestamp now, Millis history, InstancePlan plan, const std::optional<Allocation>& alloc) {
        std::vector<PipelineEvent> first;
        PipelineInstance inst = launch_instance(ids.take(), tier, now, history, std::move(plan), alloc, first);
        const std::uint64_t id = inst.id;
        if (hooks.instance_launch) hooks.instance_launch(inst);
        live.emplace(id, std::move(inst));
        deliver(id, first);
    }

    void deliver(std::uint64_t id, const std::vector<PipelineEvent>& events) {
        for (const PipelineEvent& ev : events) {
            queue.schedule(ev.time, ev.kind, [self = shared_from_this(), id, ev] { self->handle(id, ev); });
        }
    }

    void handle(std::uint64_t id, const PipelineEvent& ev) {
        auto it = live.find(id);
        if (it == live.end()) return; // killed at allocation expiry
        AdvanceResult r = advance(it->second, ev);
        for (const PublishEvent& p : r.publishes) sink(p);
        deliver(id, r.follow_ups);
        if (it->second.state == Stage::Done) {
            live.erase(it);
            if (on_done) on_done(ev.time);
        }
    }
};

} // namespace

void start_dedicated_tier(EventQueue& queue, const DedicatedTierConfig& config, Rng rng, IdSource& ids,
                          Timestamp start, Timestamp end, PublishSink sink, TierHooks hooks) {
    config.durations.validate();
    auto rt = std::make_shared<TierRuntime>(queue, std::move(rng), ids, end, std::move(sink), std::move(hooks));
    const StageDurations durations = config.durations;
    const Millis history = from_hours(config.history_window_h);
    std::weak_ptr<TierRuntime> weak = rt;
    rt->on_done = [weak, durations, history](Timestamp t) {
        auto self = weak.lock();
        if (!self || t >= self->end) return;
        self->launch(Tier::Dedicated, t, history, sample_plan(durations, self->rng), std::nullopt);
    };
    if (start < end) rt->launch(Tier::Dedicated, start, history, sample_plan(durations, rt->rng), std::nullopt);
}

namespace {

struct BatchState : std::enable_shared_from_this<BatchState> {
    BatchState(BatchTierConfig c, std::shared_ptr<TierRuntime> r) : config(std::move(c)), rt(std::move(r)) {}

    BatchTierConfig config;
    std::shared_ptr<TierRuntime> rt;
    std::optional<Allocation> alloc;

    void submit(Timestamp t) {
        const Timestamp open = t + from_hours(config.queue_wait_h.sample(rt->rng));
        if (open >= rt->end) return;
        rt->queue.schedule(open, EventKind::AllocationOpen, [self = shared_from_this(), open] { self->on_open(open); });
    }

    void on_open(Timestamp t) {
        alloc = Allocation{rt->ids.take(), t, t + from_hours(config.allocation_limit_h)};
        if (rt->hooks.allocation_open) rt->hooks.allocation_open(*alloc);
        rt->queue.schedule(alloc->expiry, EventKind::AllocationExpire, [self = shared_from_this()] { self->on_expire(); });
        try_launch(t);
    }

    void try_launch(Timestamp t) {
        if (!alloc || t >= rt->end || t >= alloc->expiry) return;
        const Millis remaining = alloc->expiry - t;
        if (config.admission == AdmissionPolicy::MeanPlusKStd && remaining < config.admission_threshold()) return;
        InstancePlan plan = scaled_profile(config.profile, from_minutes(config.iteration_min.sample(rt->rng)));
        if (config.split_gpu_wait) plan.gpu_wait = from_minutes(config.gpu_wait_min.sample(rt->rng));
        rt->launch(Tier::Opportunistic, t, from_hours(config.history_window_h), std::move(plan), alloc);
    }

    void on_expire() {
        const Allocation closed = *alloc;
        std::size_t killed = 0;
        for (auto it = rt->live.begin(); it != rt->live.end();) {
            if (it->second.allocation_id == closed.id) {
                it = rt->live.erase(it);
                ++killed;
            } else {
                ++it;
            }
        }
        alloc.reset();
        if (rt->hooks.allocation_expire) rt->hooks.allocation_expire(closed, killed);
        submit(closed.expiry);
    }
};

} // namespace

void start_batch_tier(EventQueue& queue, const BatchTierConfig& config, Rng rng, IdSource& ids, Timestamp start,
                      Timestamp end, PublishSink sink, TierHooks hooks) {
    config.validate();
    auto rt = std::make_shared<TierRuntime>(queue, std::move(rng), ids, end, std::move(sink), std::move(hooks));
    // A pending open or expiry event always holds the state, and instances
    // only run while an expiry is pending, so a weak link back suffices.
    auto state = std::make_shared<BatchState>(config, rt);
    std::weak_ptr<BatchState> weak = state;
    rt->on_done = [weak](Timestamp t) {
        if (auto s = weak.lock()) s->try_launch(t);
    };
    if (start < end) state->submit(start);
}

std::vector<PublishEvent> run_dedicated_loop(const DedicatedTierConfig& config, Timestamp start, Timestamp end,
                                             std::uint64_t seed) {
    EventQueue q;
    IdSource ids;
    std::vector<PublishEvent> out;
    start_dedicated_tier(q, config, make_stream(seed, 0), ids, start, end,
                         [&out](const PublishEvent& p) { out.push_back(p); });
    q.run_until(end);
    return out;
}

std::vector<PublishEvent> run_batch_loop(const BatchTierConfig& config, Timestamp start, Timestamp end,
                                         std::uint64_t seed, std::vector<Allocation>* allocations) {
    EventQueue q;
    IdSource ids;
    std::vector<PublishEvent> out;
    TierHooks hooks;
    if (allocations) hooks.allocation_open = [allocations](const Allocation& a) { allocations->push_back(a); };
    start_batch_tier(q, config, make_stream(seed, 1), ids, start, end,
                     [&out](const PublishEvent& p) { out.push_back(p); }, std::move(hooks));
    q.run_until(end);
    return out;
}

} // namespace rbf
