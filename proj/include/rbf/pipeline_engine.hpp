#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbf/distribution.hpp"
#include "rbf/event_queue.hpp"
#include "rbf/model_lifecycle.hpp"
#include "rbf/time.hpp"

namespace rbf {

/// Mean and std of one model's training time, minutes.
struct TrainDuration {
    double mean = 0;
    double std = 0;

    friend bool operator==(const TrainDuration&, const TrainDuration&) = default;
};

/// Stage timing of one pipeline instance, all in minutes.
///
/// Run-to-run variation is dominated by a per-instance "conditions" factor
/// z ~ N(0, 1): every simulation task is centred on
/// cfd_mean * task_scale + cfd_std * z, and each model trains for
/// mean + std * z_m where z_m shares z with correlation `train_correlation`.
/// Task-level jitter is task_std. Draws are floored at 0.1 x their mean.
struct StageDurations {
    int sim_tasks = 72;
    double cfd_mean = 52.0;
    double cfd_std = 20.0;
    double task_scale = 0.908;
    double task_std = 2.0;
    double transform_mean = 14.0;
    double transform_std = 3.0;
    std::map<ModelType, TrainDuration> train = {
        {ModelType::Pinn, {50.0, 21.6}},
        {ModelType::Fno, {54.8, 18.2}},
        {ModelType::Pcr, {15.9, 3.4}},
    };
    double train_correlation = 1.0;
    /// Staging between training end and the model landing in the repository.
    double overhead_mean = 13.85;
    double overhead_std = 5.0;
    /// Multiplier on training time for the configured history window.
    double history_scale = 1.0;

    /// Zero-variance preset: 52 + 14 + 54.8 + 14.0 = 134.8 min.
    static StageDurations deterministic();

    /// Throws InvalidConfig.
    void validate() const;

    /// Total of a zero-variance run with these means.
    [[nodiscard]] double deterministic_total_min() const;

    friend bool operator==(const StageDurations&, const StageDurations&) = default;
};

/// Concrete durations of one instance.
struct InstancePlan {
    std::vector<Millis> sim_tasks;
    Millis transform{};
    /// Wait for a GPU job before training starts (opportunistic tiers only).
    Millis gpu_wait{};
    std::map<ModelType, Millis> train;
    Millis overhead{};
};

/// Draws an InstancePlan from StageDurations.
InstancePlan sample_plan(const StageDurations& d, Rng& rng);

/// The plan of a zero-variance instance scaled so the slowest model publishes
/// exactly `total` after launch.
InstancePlan scaled_profile(const StageDurations& d, Millis total);

enum class Stage { Pdc, Sim, Transform, Train, Done };

std::string_view to_string(Stage s) noexcept;

struct Allocation {
    std::uint64_t id = 0;
    Timestamp start;
    Timestamp expiry;
};

struct PipelineInstance {
    std::uint64_t id = 0;
    Tier tier = Tier::Dedicated;
    std::optional<std::uint64_t> allocation_id;
    Timestamp data_cutoff;
    Millis history_window{};
    Stage state = Stage::Pdc;
    std::uint32_t sim_tasks_remaining = 0;
    InstancePlan plan;

    std::optional<Timestamp> sim_end;
    std::optional<Timestamp> transform_end;
    std::map<ModelType, Timestamp> train_done;
};

struct PublishEvent {
    Timestamp time;
    ModelType model_type = ModelType::Pinn;
    Tier tier = Tier::Dedicated;
    Timestamp cutoff;
    std::uint64_t instance_id = 0;
    std::optional<std::uint64_t> allocation_id;
    Millis history_window{};

    friend bool operator==(const PublishEvent&, const PublishEvent&) = default;
};

/// time_ms,model_type,tier,cutoff_ms,instance_id,allocation_id
std::string publish_csv_header();
std::string to_csv_row(const PublishEvent& e);
std::string to_json_line(const PublishEvent& e);

/// What drives an instance forward. `model` is set for TrainDone only.
struct PipelineEvent {
    EventKind kind = EventKind::SimTaskDone;
    Timestamp time;
    std::optional<ModelType> model;
};

struct AdvanceResult {
    std::vector<PublishEvent> publishes;
    /// Events the caller must deliver later, in order.
    std::vector<PipelineEvent> follow_ups;
};

/// Starts an instance at `now` with data_cutoff = now. Returns the instance
/// in state Sim; `first_events` receives one SimTaskDone per task. For
/// Opportunistic, `allocation` must be open at `now`, otherwise
/// NoActiveAllocation.
PipelineInstance launch_instance(std::uint64_t id, Tier tier, Timestamp now, Millis history_window, InstancePlan plan,
                                 const std::optional<Allocation>& allocation,
                                 std::vector<PipelineEvent>& first_events);

/// Applies one event. Throws InvalidTransition when it does not match the
/// instance's state, leaving the instance untouched.
AdvanceResult advance(PipelineInstance& instance, const PipelineEvent& event);

using PublishSink = std::function<void(const PublishEvent&)>;

/// Monotone id source shared by all tiers of one run.
struct IdSource {
    std::uint64_t next = 1;
    std::uint64_t take() noexcept { return next++; }
};

/// Always-on tier: instance k+1 launches at instance k's Done.
struct DedicatedTierConfig {
    std::string name = "dedicated";
    StageDurations durations;
    double history_window_h = 6.0;

    friend bool operator==(const DedicatedTierConfig&, const DedicatedTierConfig&) = default;
};

enum class AdmissionPolicy {
    /// Launch only if remaining allocation >= mean + k * std of an iteration.
    MeanPlusKStd,
    /// Always launch; work still running at expiry is lost.
    Always,
};

struct BatchTierConfig {
    std::string name = "opportunistic";
    Distribution queue_wait_h = Distribution::uniform(17.0, 19.0);
    double allocation_limit_h = 48.0;
    Distribution iteration_min = Distribution::truncated_normal(80.0, 40.4);
    AdmissionPolicy admission = AdmissionPolicy::MeanPlusKStd;
    double admission_k = 2.0;
    /// When set, a GPU queue wait is drawn before training instead of being
    /// folded into the iteration duration.
    bool split_gpu_wait = false;
    Distribution gpu_wait_min = Distribution::uniform(11.0, 38.0);
    double history_window_h = 6.0;
    /// Stage profile the iteration duration is spread over.
    StageDurations profile = StageDurations::deterministic();

    void validate() const;
    /// Allocation time an iteration must have left to be admitted.
    [[nodiscard]] Millis admission_threshold() const;

    friend bool operator==(const BatchTierConfig&, const BatchTierConfig&) = default;
};

/// Optional observers for tier activity beyond publishes.
struct TierHooks {
    std::function<void(const Allocation&)> allocation_open;
    std::function<void(const Allocation&, std::size_t killed)> allocation_expire;
    std::function<void(const PipelineInstance&)> instance_launch;
};

/// Runs the dedicated tier on `queue` from `start`; no launches at or after
/// `end`. Keeps itself alive through the scheduled closures.
void start_dedicated_tier(EventQueue& queue, const DedicatedTierConfig& config, Rng rng, IdSource& ids,
                          Timestamp start, Timestamp end, PublishSink sink, TierHooks hooks = {});

/// Runs one opportunistic tier: submit, wait, run iterations back to back
/// under the admission policy, kill what is left at expiry, resubmit.
void start_batch_tier(EventQueue& queue, const BatchTierConfig& config, Rng rng, IdSource& ids, Timestamp start,
                      Timestamp end, PublishSink sink, TierHooks hooks = {});

/// Standalone loops returning the publishes in [start, end), in time order.
std::vector<PublishEvent> run_dedicated_loop(const DedicatedTierConfig& config, Timestamp start, Timestamp end,
                                             std::uint64_t seed);
std::vector<PublishEvent> run_batch_loop(const BatchTierConfig& config, Timestamp start, Timestamp end,
                                         std::uint64_t seed, std::vector<Allocation>* allocations = nullptr);

} // namespace rbf
