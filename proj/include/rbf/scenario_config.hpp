#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rbf/model_lifecycle.hpp"
#include "rbf/pipeline_engine.hpp"

namespace rbf {

/// Download throughput of one model over the edge link, MB/s (MB = 2^20
/// bytes). The isolated figure differs with and without slicing because the
/// sliced path is a different radio configuration.
struct LinkThroughput {
    double isolated = 0;
    double degradation = 0;
    double isolated_slicing = 0;
    double degradation_slicing = 0;

    /// Degradations derived as 1 - contention/isolated, negative ones
    /// clamped to 0.
    static LinkThroughput from_measurements(double iso, double cont, double iso_slicing, double cont_slicing);

    friend bool operator==(const LinkThroughput&, const LinkThroughput&) = default;
};

struct LinkModel {
    std::map<ModelType, LinkThroughput> throughput;
    bool slicing = false;
    bool contention_active = false;

    /// Defaults measured on the private 5G testbed.
    static LinkModel defaults();

    friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

/// MAE (m/s) as a function of model age in minutes.
struct DecayCurve {
    enum class Kind { Linear, Piecewise };

    std::string label;
    ModelType model_type = ModelType::Pinn;
    double history_window_h = 6.0;
    Kind kind = Kind::Piecewise;
    /// Piecewise: (age_min, mae) with strictly increasing ages.
    std::vector<std::pair<double, double>> knots;
    /// Linear: intercept + slope * age_min.
    double intercept = 0;
    double slope = 0;

    void validate() const;

    /// Synthetic curves shaped like the field measurements: monotone, with
    /// the 48 h-history PINN curve crossing the 6 h one at 360 min.
    static std::vector<DecayCurve> defaults();

    friend bool operator==(const DecayCurve&, const DecayCurve&) = default;
};

struct ScenarioConfig {
    double horizon_h = 168.0;
    double sensor_interval_min = 5.0;
    std::uint64_t seed = 1;
    /// Edge poll period; 0 means the edge reacts at the publish instant.
    double poll_interval_min = 1.0;
    /// Dedicated-pipeline cadence the decay analysis is relative to.
    double base_period_min = 134.8;
    std::pair<double, double> measurement_error_band = {0.44, 0.87};
    bool record_sensor_events = true;

    std::optional<DedicatedTierConfig> dedicated = DedicatedTierConfig{};
    std::vector<BatchTierConfig> batch_tiers;
    LinkModel network = LinkModel::defaults();
    std::vector<DecayCurve> decay_curves = DecayCurve::defaults();
    std::map<ModelType, std::uint64_t> model_sizes = default_model_sizes();

    static std::map<ModelType, std::uint64_t> default_model_sizes();

    /// Throws InvalidConfig.
    void validate() const;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Throws InvalidConfig on unknown keys, wrong types, or invalid values.
ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& c);

/// Throws StorageFailure if unreadable, InvalidConfig if unparsable.
ScenarioConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const Distribution& d);
Distribution distribution_from_json(const nlohmann::json& j);

} // namespace rbf
