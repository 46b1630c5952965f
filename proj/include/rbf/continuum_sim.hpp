#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbf/model_lifecycle.hpp"
#include "rbf/pipeline_engine.hpp"
#include "rbf/scenario_config.hpp"
#include "rbf/stats.hpp"

namespace rbf {

/// isolated * (1 - degradation) for the active slicing/contention setting,
/// MB/s. Throws UnconfiguredModelType.
double effective_throughput(const LinkModel& link, ModelType type);

/// size / effective throughput, rounded up to the next millisecond.
/// Throws InvalidArgument for size 0, UnconfiguredModelType.
Millis transfer_time(const LinkModel& link, ModelType type, std::uint64_t size_bytes);

/// MAE at `age_min`. Piecewise curves interpolate linearly and clamp outside
/// the knot range. Throws EmptyCurve, InvalidArgument for negative ages.
double evaluate_decay(const DecayCurve& curve, double age_min);

/// Mean of evaluate_decay over ages [from_min, to_min], integrated exactly.
double average_decay(const DecayCurve& curve, double from_min, double to_min);

/// base / (extra + 1). Throws InvalidArgument unless base > 0.
double expected_decay_period(double base_period_min, std::uint32_t extra_generations);

struct IndistinguishabilityBound {
    /// Generating faster than new data arrives cannot help.
    double min_useful_period_min = 0;
    /// MAE differences below this are inside sensor error.
    double error_floor_mps = 0;
    double base_period_min = 0;
    /// base_period / sensor_interval.
    double period_ratio = 0;
    /// floor(period_ratio): data generations that fit in one base period.
    std::uint32_t generations_per_period = 0;
    /// generations_per_period - 1, the extra ones beyond the base cadence.
    std::uint32_t max_extra_generations = 0;
    /// The figure quoted for the testbed, kept alongside the computed one
    /// because the two disagree and no derivation is given.
    std::uint32_t reported_extra_generations = 20;
};

IndistinguishabilityBound indistinguishability_bound(const ScenarioConfig& config);

struct DecayReportRow {
    std::uint32_t extra_generations = 0;
    double period_min = 0;
    /// Per configured curve, in config order. Publish age averages the curve
    /// over [0, period]; cutoff age adds the base period as pipeline latency.
    std::vector<double> mae_publish_age;
    std::vector<double> mae_cutoff_age;
};

std::vector<DecayReportRow> decay_report(const ScenarioConfig& config, std::uint32_t max_extra = 20);
std::string decay_report_csv(const ScenarioConfig& config, std::uint32_t max_extra = 20);

struct PublishRecord {
    PublishEvent event;
    std::uint32_t version = 0;
    std::string tier_name;
};

struct AllocationRecord {
    std::string tier_name;
    Allocation allocation;
    /// Instances still running at expiry; unset while the allocation is open.
    std::optional<std::size_t> killed;
};

struct TransferRecord {
    ModelType model_type = ModelType::Pinn;
    std::uint32_t version = 0;
    Timestamp start;
    Timestamp done;
    Timestamp cutoff;
    Tier source_tier = Tier::Dedicated;
};

struct DeployEvent {
    Timestamp time;
    ModelType model_type = ModelType::Pinn;
    std::uint32_t version = 0;
    Timestamp cutoff;
    Tier source_tier = Tier::Dedicated;
    DeployDecision decision = DeployDecision::Deployed;
};

struct AgeSample {
    Timestamp time;
    ModelType model_type = ModelType::Pinn;
    Millis age{};
};

struct SimTrace {
    Timestamp end;
    std::vector<Timestamp> sensor_emits;
    std::vector<AllocationRecord> allocations;
    std::vector<PublishRecord> publishes;
    std::vector<TransferRecord> transfers;
    /// Every arrival at the edge, including skipped ones.
    std::vector<DeployEvent> deploys;
    std::vector<AgeSample> ages;
    /// One JSON object per event, in dispatch order.
    std::vector<std::string> lines;

    [[nodiscard]] std::vector<PublishEvent> publish_events() const;
    /// Deployed (not skipped) arrivals of one model.
    [[nodiscard]] std::vector<DeployEvent> deployed(ModelType type) const;
    [[nodiscard]] std::string ndjson() const;
};

/// Runs the scenario from t=0 for horizon_h. Validates the config first.
///
/// The edge polls every poll_interval_min from t=0 and, per model, fetches
/// the newest-cutoff artifact published since the previous poll. Each
/// arrival goes through a DeployedSlot. Deployed age is sampled for every
/// deployed model at each sensor emission.
SimTrace run_scenario(const ScenarioConfig& config);

struct StalenessPoint {
    Timestamp time;
    Millis age{};
    /// Index of the deploy the point belongs to. Consecutive points of one
    /// segment bound a slope-1 line; the series jumps between segments.
    std::size_t segment = 0;
};

/// Two points per deploy: the reset value at the deploy instant and the age
/// just before the next deploy (or trace end). Throws NoDeploys.
std::vector<StalenessPoint> staleness_series(const SimTrace& trace, ModelType type);

/// Exact mean of the deployed age over [from, trace end], minutes. Time
/// before the first deploy is excluded. Throws NoDeploys.
double time_averaged_age_min(const SimTrace& trace, ModelType type, Timestamp from = Timestamp{});

/// Interval statistics for every (model, tier set) with at least one gap.
std::vector<IntervalStats> publish_interval_stats(std::span<const PublishEvent> publishes);

/// Reads publish events back from an NDJSON trace. Throws Malformed.
std::vector<PublishEvent> publishes_from_ndjson(std::istream& in);

/// Writes trace.ndjson, publishes.csv, staleness.csv, intervals.csv and one
/// deploy_history_<model>.csv per model. Throws StorageFailure.
void write_trace_files(const SimTrace& trace, const std::filesystem::path& dir);

} // namespace rbf
