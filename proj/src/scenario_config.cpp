#include "rbf/scenario_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rbf/error.hpp"

namespace rbf {

using nlohmann::json;

LinkThroughput LinkThroughput::from_measurements(double iso, double cont, double iso_slicing, double cont_slicing) {
    return {iso, std::max(0.0, 1.0 - cont / iso), iso_slicing, std::max(0.0, 1.0 - cont_slicing / iso_slicing)};
}

LinkModel LinkModel::defaults() {
    LinkModel m;
    m.throughput[ModelType::Pcr] = LinkThroughput::from_measurements(2.68, 2.15, 2.67, 2.50);
    m.throughput[ModelType::Pinn] = LinkThroughput::from_measurements(1.37, 1.06, 1.28, 1.31);
    m.throughput[ModelType::Fno] = LinkThroughput::from_measurements(4.92, 3.88, 4.72, 4.62);
    return m;
}

std::vector<DecayCurve> DecayCurve::defaults() {
    auto piecewise = [](std::string label, ModelType t, double window, std::vector<std::pair<double, double>> k) {
        DecayCurve c;
        c.label = std::move(label);
        c.model_type = t;
        c.history_window_h = window;
        c.kind = Kind::Piecewise;
        c.knots = std::move(k);
        return c;
    };
    return {
        piecewise("pinn-6h", ModelType::Pinn, 6,
                  {{0, 0.55}, {60, 0.62}, {120, 0.70}, {240, 0.82}, {360, 0.95}, {480, 1.05}}),
        piecewise("pinn-48h", ModelType::Pinn, 48,
                  {{0, 0.70}, {60, 0.74}, {120, 0.79}, {240, 0.87}, {360, 0.95}, {480, 1.00}}),
        piecewise("fno-6h", ModelType::Fno, 6, {{0, 0.50}, {60, 0.58}, {120, 0.66}, {240, 0.78}, {360, 0.90}}),
        piecewise("pcr-6h", ModelType::Pcr, 6, {{0, 0.60}, {60, 0.66}, {120, 0.72}, {240, 0.84}, {360, 0.96}}),
    };
}

void DecayCurve::validate() const {
    if (kind == Kind::Piecewise) {
        if (knots.empty()) throw Error(ErrorCode::EmptyCurve, "decay curve '" + label + "' has no knots");
        for (std::size_t i = 0; i < knots.size(); ++i) {
            if (!std::isfinite(knots[i].first) || !std::isfinite(knots[i].second) || knots[i].second < 0 ||
                knots[i].first < 0) {
                throw Error(ErrorCode::InvalidConfig, "decay curve '" + label + "' has a bad knot");
            }
            if (i > 0 && knots[i].first <= knots[i - 1].first) {
                throw Error(ErrorCode::InvalidConfig, "decay curve '" + label + "' knot ages must increase strictly");
            }
        }
    } else if (!std::isfinite(intercept) || !std::isfinite(slope) || intercept < 0 || slope < 0) {
        throw Error(ErrorCode::InvalidConfig, "linear decay curve '" + label + "' needs intercept, slope >= 0");
    }
}

std::map<ModelType, std::uint64_t> ScenarioConfig::default_model_sizes() {
    const auto mb = [](double x) { return static_cast<std::uint64_t>(std::llround(x * 1024 * 1024)); };
    return {{ModelType::Pinn, 290 * 1024}, {ModelType::Fno, mb(9.1)}, {ModelType::Pcr, mb(1.1)}};
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

bool finite_pos(double x) { return std::isfinite(x) && x > 0; }

} // namespace

void ScenarioConfig::validate() const {
    if (!std::isfinite(horizon_h) || horizon_h < 0) invalid("horizon_h must be >= 0");
    if (!finite_pos(sensor_interval_min)) invalid("sensor_interval_min must be > 0");
    if (!std::isfinite(poll_interval_min) || poll_interval_min < 0) invalid("poll_interval_min must be >= 0");
    if (!finite_pos(base_period_min)) invalid("base_period_min must be > 0");
    const auto [lo, hi] = measurement_error_band;
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0 || hi < lo) {
        invalid("measurement_error_band must satisfy 0 <= min <= max");
    }
    if (dedicated) {
        dedicated->durations.validate();
        if (!finite_pos(dedicated->history_window_h)) invalid("dedicated history_window_h must be > 0");
    }
    for (const auto& b : batch_tiers) b.validate();
    std::set<ModelType> trained;
    if (dedicated) {
        for (const auto& [t, d] : dedicated->durations.train) trained.insert(t);
    }
    for (const auto& b : batch_tiers) {
        for (const auto& [t, d] : b.profile.train) trained.insert(t);
    }
    for (ModelType t : trained) {
        const auto it = network.throughput.find(t);
        if (it == network.throughput.end()) {
            invalid("no link throughput for " + std::string(to_string(t)));
        }
        const LinkThroughput& l = it->second;
        if (!finite_pos(l.isolated) || !finite_pos(l.isolated_slicing)) invalid("throughput must be > 0");
        for (double d : {l.degradation, l.degradation_slicing}) {
            if (!std::isfinite(d) || d < 0 || d >= 1) invalid("degradation must lie in [0, 1)");
        }
        const auto size = model_sizes.find(t);
        if (size == model_sizes.end() || size->second == 0) {
            invalid("no model size for " + std::string(to_string(t)));
        }
    }
    for (const auto& c : decay_curves) c.validate();
}

// ---- JSON ----

namespace {

/// Strict object reader: every key must be consumed, so typos fail loudly.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) invalid(path_ + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            invalid(path_ + "." + key + " has the wrong type");
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!used_.contains(k)) invalid("unknown key " + path_ + "." + k);
        }
    }

    [[nodiscard]] const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

ModelType model_key(const std::string& k, const std::string& path) {
    try {
        return parse_model_type(k);
    } catch (const Error&) {
        invalid(path + ": unknown model type '" + k + "'");
    }
    return ModelType::Pinn;
}

StageDurations durations_from_json(const json& j, const std::string& path, StageDurations d) {
    Reader r(j, path);
    if (r.has("preset")) {
        std::string preset;
        r.get("preset", preset);
        if (preset == "deterministic") {
            d = StageDurations::deterministic();
        } else if (preset == "calibrated") {
            d = StageDurations{};
        } else {
            invalid(path + ".preset must be 'calibrated' or 'deterministic'");
        }
    }
    r.get("sim_tasks", d.sim_tasks);
    r.get("cfd_mean_min", d.cfd_mean);
    r.get("cfd_std_min", d.cfd_std);
    r.get("task_scale", d.task_scale);
    r.get("task_std_min", d.task_std);
    r.get("transform_mean_min", d.transform_mean);
    r.get("transform_std_min", d.transform_std);
    r.get("train_correlation", d.train_correlation);
    r.get("overhead_mean_min", d.overhead_mean);
    r.get("overhead_std_min", d.overhead_std);
    r.get("history_scale", d.history_scale);
    if (r.has("train")) {
        const json& t = r.raw("train");
        Reader tr(t, path + ".train");
        std::map<ModelType, TrainDuration> train;
        for (const auto& [k, v] : t.items()) {
            const ModelType type = model_key(k, tr.path());
            tr.raw(k);
            Reader m(v, tr.path() + "." + k);
            TrainDuration td = d.train.contains(type) ? d.train.at(type) : TrainDuration{};
            m.get("mean_min", td.mean);
            m.get("std_min", td.std);
            m.finish();
            train[type] = td;
        }
        tr.finish();
        d.train = std::move(train);
    }
    r.finish();
    return d;
}

json durations_to_json(const StageDurations& d) {
    json t = json::object();
    for (const auto& [type, td] : d.train) t[std::string(to_string(type))] = {{"mean_min", td.mean}, {"std_min", td.std}};
    return {{"sim_tasks", d.sim_tasks},
            {"cfd_mean_min", d.cfd_mean},
            {"cfd_std_min", d.cfd_std},
            {"task_scale", d.task_scale},
            {"task_std_min", d.task_std},
            {"transform_mean_min", d.transform_mean},
            {"transform_std_min", d.transform_std},
            {"train", t},
            {"train_correlation", d.train_correlation},
            {"overhead_mean_min", d.overhead_mean},
            {"overhead_std_min", d.overhead_std},
            {"history_scale", d.history_scale}};
}

BatchTierConfig batch_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    BatchTierConfig b;
    r.get("name", b.name);
    if (r.has("queue_wait_h")) b.queue_wait_h = distribution_from_json(r.raw("queue_wait_h"));
    r.get("allocation_limit_h", b.allocation_limit_h);
    if (r.has("iteration_min")) b.iteration_min = distribution_from_json(r.raw("iteration_min"));
    if (r.has("admission")) {
        std::string a;
        r.get("admission", a);
        if (a == "mean_plus_k_std") {
            b.admission = AdmissionPolicy::MeanPlusKStd;
        } else if (a == "always") {
            b.admission = AdmissionPolicy::Always;
        } else {
            invalid(path + ".admission must be 'mean_plus_k_std' or 'always'");
        }
    }
    r.get("admission_k", b.admission_k);
    r.get("split_gpu_wait", b.split_gpu_wait);
    if (r.has("gpu_wait_min")) b.gpu_wait_min = distribution_from_json(r.raw("gpu_wait_min"));
    r.get("history_window_h", b.history_window_h);
    if (r.has("profile")) b.profile = durations_from_json(r.raw("profile"), path + ".profile", b.profile);
    r.finish();
    return b;
}

json batch_to_json(const BatchTierConfig& b) {
    return {{"name", b.name},
            {"queue_wait_h", to_json(b.queue_wait_h)},
            {"allocation_limit_h", b.allocation_limit_h},
            {"iteration_min", to_json(b.iteration_min)},
            {"admission", b.admission == AdmissionPolicy::Always ? "always" : "mean_plus_k_std"},
            {"admission_k", b.admission_k},
            {"split_gpu_wait", b.split_gpu_wait},
            {"gpu_wait_min", to_json(b.gpu_wait_min)},
            {"history_window_h", b.history_window_h},
            {"profile", durations_to_json(b.profile)}};
}

DecayCurve curve_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    DecayCurve c;
    r.get("label", c.label);
    if (c.label.empty()) invalid(path + ".label is required");
    std::string type = "pinn";
    r.get("model_type", type);
    c.model_type = model_key(type, path);
    r.get("history_window_h", c.history_window_h);
    std::string kind = "piecewise";
    r.get("kind", kind);
    if (kind == "piecewise") {
        c.kind = DecayCurve::Kind::Piecewise;
        r.get("knots", c.knots);
    } else if (kind == "linear") {
        c.kind = DecayCurve::Kind::Linear;
        r.get("intercept_mps", c.intercept);
        r.get("slope_mps_per_min", c.slope);
    } else {
        invalid(path + ".kind must be 'piecewise' or 'linear'");
    }
    r.finish();
    return c;
}

json curve_to_json(const DecayCurve& c) {
    json j = {{"label", c.label},
              {"model_type", std::string(to_string(c.model_type))},
              {"history_window_h", c.history_window_h}};
    if (c.kind == DecayCurve::Kind::Piecewise) {
        j["kind"] = "piecewise";
        j["knots"] = c.knots;
    } else {
        j["kind"] = "linear";
        j["intercept_mps"] = c.intercept;
        j["slope_mps_per_min"] = c.slope;
    }
    return j;
}

LinkModel link_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    LinkModel m = LinkModel::defaults();
    r.get("slicing", m.slicing);
    r.get("contention_active", m.contention_active);
    if (r.has("throughput")) {
        const json& t = r.raw("throughput");
        Reader tr(t, path + ".throughput");
        for (const auto& [k, v] : t.items()) {
            const ModelType type = model_key(k, tr.path());
            tr.raw(k);
            Reader e(v, tr.path() + "." + k);
            LinkThroughput l = m.throughput.contains(type) ? m.throughput.at(type) : LinkThroughput{};
            e.get("isolated_mbps", l.isolated);
            e.get("degradation", l.degradation);
            e.get("isolated_slicing_mbps", l.isolated_slicing);
            e.get("degradation_slicing", l.degradation_slicing);
            e.finish();
            m.throughput[type] = l;
        }
        tr.finish();
    }
    r.finish();
    return m;
}

json link_to_json(const LinkModel& m) {
    json t = json::object();
    for (const auto& [type, l] : m.throughput) {
        t[std::string(to_string(type))] = {{"isolated_mbps", l.isolated},
                                           {"degradation", l.degradation},
                                           {"isolated_slicing_mbps", l.isolated_slicing},
                                           {"degradation_slicing", l.degradation_slicing}};
    }
    return {{"slicing", m.slicing}, {"contention_active", m.contention_active}, {"throughput", t}};
}

} // namespace

json to_json(const Distribution& d) {
    switch (d.kind()) {
    case Distribution::Kind::Fixed: return {{"kind", "fixed"}, {"value", d.mean()}};
    case Distribution::Kind::Uniform: return {{"kind", "uniform"}, {"min", d.lo()}, {"max", d.hi()}};
    case Distribution::Kind::TruncatedNormal:
        return {{"kind", "truncated_normal"}, {"mean", d.mean()}, {"std", d.std()}, {"lower", d.lower()}};
    }
    return {};
}

Distribution distribution_from_json(const json& j) {
    Reader r(j, "distribution");
    std::string kind;
    r.get("kind", kind);
    Distribution out = Distribution::fixed(0);
    if (kind == "fixed") {
        double v = -1;
        r.get("value", v);
        out = Distribution::fixed(v);
    } else if (kind == "uniform") {
        double lo = -1, hi = -1;
        r.get("min", lo);
        r.get("max", hi);
        out = Distribution::uniform(lo, hi);
    } else if (kind == "truncated_normal") {
        double mean = -1, sd = -1;
        r.get("mean", mean);
        r.get("std", sd);
        double lower = 0.1 * mean;
        r.get("lower", lower);
        out = Distribution::truncated_normal(mean, sd, lower);
    } else {
        invalid("distribution kind must be fixed, uniform or truncated_normal");
    }
    r.finish();
    return out;
}

ScenarioConfig config_from_json(const json& j) {
    Reader r(j, "config");
    ScenarioConfig c;
    r.get("horizon_h", c.horizon_h);
    r.get("sensor_interval_min", c.sensor_interval_min);
    r.get("seed", c.seed);
    r.get("poll_interval_min", c.poll_interval_min);
    r.get("base_period_min", c.base_period_min);
    r.get("record_sensor_events", c.record_sensor_events);
    if (r.has("measurement_error_band_mps")) {
        std::vector<double> band;
        r.get("measurement_error_band_mps", band);
        if (band.size() != 2) invalid("measurement_error_band_mps must be [min, max]");
        c.measurement_error_band = {band[0], band[1]};
    }
    if (r.has("dedicated")) {
        const json& d = r.raw("dedicated");
        if (d.is_null()) {
            c.dedicated.reset();
        } else {
            Reader dr(d, "config.dedicated");
            bool enabled = true;
            dr.get("enabled", enabled);
            DedicatedTierConfig ded;
            dr.get("name", ded.name);
            dr.get("history_window_h", ded.history_window_h);
            if (dr.has("durations")) {
                ded.durations = durations_from_json(dr.raw("durations"), "config.dedicated.durations", ded.durations);
            }
            dr.finish();
            if (enabled) {
                c.dedicated = ded;
            } else {
                c.dedicated.reset();
            }
        }
    }
    if (r.has("batch_tiers")) {
        const json& b = r.raw("batch_tiers");
        if (!b.is_array()) invalid("config.batch_tiers must be an array");
        for (std::size_t i = 0; i < b.size(); ++i) {
            c.batch_tiers.push_back(batch_from_json(b[i], "config.batch_tiers[" + std::to_string(i) + "]"));
        }
    }
    if (r.has("network")) c.network = link_from_json(r.raw("network"), "config.network");
    if (r.has("decay_curves")) {
        const json& d = r.raw("decay_curves");
        if (!d.is_array()) invalid("config.decay_curves must be an array");
        c.decay_curves.clear();
        for (std::size_t i = 0; i < d.size(); ++i) {
            c.decay_curves.push_back(curve_from_json(d[i], "config.decay_curves[" + std::to_string(i) + "]"));
        }
    }
    if (r.has("model_sizes_bytes")) {
        const json& s = r.raw("model_sizes_bytes");
        Reader sr(s, "config.model_sizes_bytes");
        for (const auto& [k, v] : s.items()) {
            std::uint64_t n = 0;
            sr.get(k, n);
            c.model_sizes[model_key(k, sr.path())] = n;
        }
        sr.finish();
    }
    r.finish();
    c.validate();
    return c;
}

json to_json(const ScenarioConfig& c) {
    json j;
    j["horizon_h"] = c.horizon_h;
    j["sensor_interval_min"] = c.sensor_interval_min;
    j["seed"] = c.seed;
    j["poll_interval_min"] = c.poll_interval_min;
    j["base_period_min"] = c.base_period_min;
    j["record_sensor_events"] = c.record_sensor_events;
    j["measurement_error_band_mps"] = {c.measurement_error_band.first, c.measurement_error_band.second};
    if (c.dedicated) {
        j["dedicated"] = {{"enabled", true},
                          {"name", c.dedicated->name},
                          {"history_window_h", c.dedicated->history_window_h},
                          {"durations", durations_to_json(c.dedicated->durations)}};
    } else {
        j["dedicated"] = {{"enabled", false}};
    }
    j["batch_tiers"] = json::array();
    for (const auto& b : c.batch_tiers) j["batch_tiers"].push_back(batch_to_json(b));
    j["network"] = link_to_json(c.network);
    j["decay_curves"] = json::array();
    for (const auto& d : c.decay_curves) j["decay_curves"].push_back(curve_to_json(d));
    json sizes = json::object();
    for (const auto& [t, n] : c.model_sizes) sizes[std::string(to_string(t))] = n;
    j["model_sizes_bytes"] = sizes;
    return j;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::StorageFailure, "cannot read " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace rbf
