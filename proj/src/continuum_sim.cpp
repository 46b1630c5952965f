#include "rbf/continuum_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "rbf/error.hpp"
#include "rbf/event_queue.hpp"

namespace rbf {

using nlohmann::json;

namespace {

constexpr double kBytesPerMB = 1024.0 * 1024.0;

const LinkThroughput& link_for(const LinkModel& link, ModelType type) {
    const auto it = link.throughput.find(type);
    if (it == link.throughput.end()) {
        throw Error(ErrorCode::UnconfiguredModelType, "no throughput for " + std::string(to_string(type)));
    }
    return it->second;
}

double clamp_eval(const DecayCurve& c, double age) {
    if (c.kind == DecayCurve::Kind::Linear) return c.intercept + c.slope * age;
    const auto& k = c.knots;
    if (age <= k.front().first) return k.front().second;
    if (age >= k.back().first) return k.back().second;
    const auto hi = std::upper_bound(k.begin(), k.end(), age, [](double a, const auto& p) { return a < p.first; });
    const auto lo = hi - 1;
    const double f = (age - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

void check_curve(const DecayCurve& c) {
    if (c.kind == DecayCurve::Kind::Piecewise && c.knots.empty()) {
        throw Error(ErrorCode::EmptyCurve, "decay curve '" + c.label + "' has no knots");
    }
}

/// Shortest text that reads back as the same double.
std::string fmt(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

} // namespace

double effective_throughput(const LinkModel& link, ModelType type) {
    const LinkThroughput& l = link_for(link, type);
    const double iso = link.slicing ? l.isolated_slicing : l.isolated;
    if (!link.contention_active) return iso;
    return iso * (1.0 - (link.slicing ? l.degradation_slicing : l.degradation));
}

Millis transfer_time(const LinkModel& link, ModelType type, std::uint64_t size_bytes) {
    if (size_bytes == 0) throw Error(ErrorCode::InvalidArgument, "transfer of an empty model");
    const double mbps = effective_throughput(link, type);
    if (!(mbps > 0)) throw Error(ErrorCode::InvalidConfig, "throughput must be > 0");
    const double ms = static_cast<double>(size_bytes) * 1000.0 / (mbps * kBytesPerMB);
    return Millis{static_cast<std::int64_t>(std::ceil(ms))};
}

double evaluate_decay(const DecayCurve& curve, double age_min) {
    check_curve(curve);
    if (!(age_min >= 0)) throw Error(ErrorCode::InvalidArgument, "age must be >= 0");
    return clamp_eval(curve, age_min);
}

double average_decay(const DecayCurve& curve, double from_min, double to_min) {
    check_curve(curve);
    if (!(from_min >= 0) || !(to_min >= from_min)) {
        throw Error(ErrorCode::InvalidArgument, "need 0 <= from <= to");
    }
    if (to_min == from_min) return clamp_eval(curve, from_min);
    // The curve is linear between breakpoints, so trapezoids are exact.
    std::vector<double> xs{from_min};
    if (curve.kind == DecayCurve::Kind::Piecewise) {
        for (const auto& [age, mae] : curve.knots) {
            if (age > from_min && age < to_min) xs.push_back(age);
        }
    }
    xs.push_back(to_min);
    double area = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        area += (xs[i] - xs[i - 1]) * (clamp_eval(curve, xs[i]) + clamp_eval(curve, xs[i - 1])) / 2.0;
    }
    return area / (to_min - from_min);
}

double expected_decay_period(double base_period_min, std::uint32_t extra_generations) {
    if (!(base_period_min > 0) || !std::isfinite(base_period_min)) {
        throw Error(ErrorCode::InvalidArgument, "base period must be > 0");
    }
    return base_period_min / (static_cast<double>(extra_generations) + 1.0);
}

IndistinguishabilityBound indistinguishability_bound(const ScenarioConfig& config) {
    IndistinguishabilityBound b;
    b.min_useful_period_min = config.sensor_interval_min;
    b.error_floor_mps = config.measurement_error_band.first;
    b.base_period_min = config.base_period_min;
    b.period_ratio = config.base_period_min / config.sensor_interval_min;
    b.generations_per_period = static_cast<std::uint32_t>(std::floor(b.period_ratio + 1e-9));
    b.max_extra_generations = b.generations_per_period > 0 ? b.generations_per_period - 1 : 0;
    return b;
}

std::vector<DecayReportRow> decay_report(const ScenarioConfig& config, std::uint32_t max_extra) {
    config.validate();
    std::vector<DecayReportRow> rows;
    for (std::uint32_t k = 0; k <= max_extra; ++k) {
        DecayReportRow r;
        r.extra_generations = k;
        r.period_min = expected_decay_period(config.base_period_min, k);
        for (const auto& c : config.decay_curves) {
            r.mae_publish_age.push_back(average_decay(c, 0, r.period_min));
            r.mae_cutoff_age.push_back(
                average_decay(c, config.base_period_min, config.base_period_min + r.period_min));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string decay_report_csv(const ScenarioConfig& config, std::uint32_t max_extra) {
    const auto rows = decay_report(config, max_extra);
    const auto bound = indistinguishability_bound(config);
    std::ostringstream s;
    s << "extra_generations,period_min,sensor_floor_min,error_floor_mps";
    for (const auto& c : config.decay_curves) s << ',' << c.label << "_publish_age_mae," << c.label << "_cutoff_age_mae";
    s << '\n';
    for (const auto& r : rows) {
        s << r.extra_generations << ',' << fmt(r.period_min) << ',' << fmt(bound.min_useful_period_min) << ','
          << fmt(bound.error_floor_mps);
        for (std::size_t i = 0; i < r.mae_publish_age.size(); ++i) {
            s << ',' << fmt(r.mae_publish_age[i]) << ',' << fmt(r.mae_cutoff_age[i]);
        }
        s << '\n';
    }
    return s.str();
}

std::vector<PublishEvent> SimTrace::publish_events() const {
    std::vector<PublishEvent> out;
    out.reserve(publishes.size());
    for (const auto& p : publishes) out.push_back(p.event);
    return out;
}

std::vector<DeployEvent> SimTrace::deployed(ModelType type) const {
    std::vector<DeployEvent> out;
    for (const auto& d : deploys) {
        if (d.model_type == type && d.decision == DeployDecision::Deployed) out.push_back(d);
    }
    return out;
}

std::string SimTrace::ndjson() const {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

SimTrace run_scenario(const ScenarioConfig& config) {
    config.validate();
    SimTrace trace;
    const Timestamp start{};
    const Timestamp end = start + from_hours(config.horizon_h);
    trace.end = end;
    if (end <= start) return trace;

    EventQueue queue;
    IdSource ids;
    std::map<ModelType, DeployedSlot> slots;
    for (ModelType t : kAllModelTypes) slots.emplace(t, DeployedSlot(t));
    std::map<ModelType, std::uint32_t> versions;
    std::map<ModelType, PublishRecord> pending;
    const Millis poll = from_minutes(config.poll_interval_min);
    const Millis sensor = from_minutes(config.sensor_interval_min);

    auto line = [&](const char* kind, json j) {
        j["kind"] = kind;
        j["t_ms"] = ms_of(queue.now());
        trace.lines.push_back(j.dump());
    };

    auto start_transfer = [&](const PublishRecord& p) {
        const ModelType type = p.event.model_type;
        const std::uint64_t size = config.model_sizes.at(type);
        const Timestamp now = queue.now();
        TransferRecord rec{type, p.version, now, now + transfer_time(config.network, type, size), p.event.cutoff,
                           p.event.tier};
        trace.transfers.push_back(rec);
        line("transfer_start", {{"model_type", to_string(type)},
                                {"version", rec.version},
                                {"cutoff_ms", ms_of(rec.cutoff)},
                                {"done_ms", ms_of(rec.done)}});
        queue.schedule(rec.done, EventKind::TransferDone, [&, p, size] {
            // The edge only needs the metadata to decide; content is elided.
            ModelArtifact a;
            a.meta = {p.event.model_type, p.event.cutoff,          p.event.time,
                      p.event.tier,       to_hours(p.event.history_window), size};
            a.artifact_version = p.version;
            const Timestamp now = queue.now();
            const DeployDecision d = slots.at(a.meta.model_type).maybe_deploy(a, now);
            trace.deploys.push_back({now, a.meta.model_type, p.version, p.event.cutoff, p.event.tier, d});
            line("deploy", {{"model_type", to_string(a.meta.model_type)},
                            {"version", p.version},
                            {"cutoff_ms", ms_of(p.event.cutoff)},
                            {"source_tier", to_string(p.event.tier)},
                            {"decision", to_string(d)}});
        });
    };

    auto sink_for = [&](std::string name) -> PublishSink {
        return [&, name](const PublishEvent& e) {
            PublishRecord r{e, ++versions[e.model_type], name};
            trace.publishes.push_back(r);
            json j{{"model_type", to_string(e.model_type)},
                   {"tier", to_string(e.tier)},
                   {"tier_name", name},
                   {"cutoff_ms", ms_of(e.cutoff)},
                   {"instance_id", e.instance_id},
                   {"version", r.version},
                   {"history_window_ms", e.history_window.count()}};
            if (e.allocation_id) j["allocation_id"] = *e.allocation_id;
            line("publish", std::move(j));
            if (poll.count() == 0) {
                start_transfer(r);
                return;
            }
            const auto it = pending.find(e.model_type);
            if (it == pending.end()) {
                pending.emplace(e.model_type, std::move(r));
            } else if (e.cutoff > it->second.event.cutoff) {
                it->second = std::move(r);
            }
        };
    };

    std::function<void(Timestamp)> sensor_tick = [&](Timestamp t) {
        queue.schedule(t, EventKind::SensorEmit, [&, t] {
            trace.sensor_emits.push_back(t);
            if (config.record_sensor_events) line("sensor", json::object());
            for (ModelType type : kAllModelTypes) {
                const DeployedSlot& slot = slots.at(type);
                const auto v = slot.current_version();
                if (!v) continue;
                const Millis age = slot.model_age(t);
                trace.ages.push_back({t, type, age});
                line("age", {{"model_type", to_string(type)}, {"version", *v}, {"age_ms", age.count()}});
            }
            if (t + sensor < end) sensor_tick(t + sensor);
        });
    };
    sensor_tick(start);

    std::function<void(Timestamp)> poll_tick = [&](Timestamp t) {
        queue.schedule(t, EventKind::PollTick, [&, t] {
            for (ModelType type : kAllModelTypes) {
                const auto it = pending.find(type);
                if (it == pending.end()) continue;
                const PublishRecord r = std::move(it->second);
                pending.erase(it);
                start_transfer(r);
            }
            if (t + poll < end) poll_tick(t + poll);
        });
    };
    if (poll.count() > 0) poll_tick(start);

    if (config.dedicated) {
        start_dedicated_tier(queue, *config.dedicated, make_stream(config.seed, 0), ids, start, end,
                             sink_for(config.dedicated->name));
    }
    for (std::size_t i = 0; i < config.batch_tiers.size(); ++i) {
        const BatchTierConfig& b = config.batch_tiers[i];
        TierHooks hooks;
        hooks.allocation_open = [&, name = b.name](const Allocation& a) {
            trace.allocations.push_back({name, a, std::nullopt});
            line("allocation_open",
                 {{"tier_name", name}, {"allocation_id", a.id}, {"expiry_ms", ms_of(a.expiry)}});
        };
        hooks.allocation_expire = [&, name = b.name](const Allocation& a, std::size_t killed) {
            for (auto& rec : trace.allocations) {
                if (rec.allocation.id == a.id && rec.tier_name == name) rec.killed = killed;
            }
            line("allocation_expire", {{"tier_name", name}, {"allocation_id", a.id}, {"killed", killed}});
        };
        start_batch_tier(queue, b, make_stream(config.seed, i + 1), ids, start, end, sink_for(b.name),
                         std::move(hooks));
    }

    queue.run_until(end);
    return trace;
}

std::vector<StalenessPoint> staleness_series(const SimTrace& trace, ModelType type) {
    const auto deploys = trace.deployed(type);
    if (deploys.empty()) throw Error(ErrorCode::NoDeploys, "no deploys of " + std::string(to_string(type)));
    std::vector<StalenessPoint> out;
    out.reserve(deploys.size() * 2);
    for (std::size_t i = 0; i < deploys.size(); ++i) {
        const Timestamp begin = deploys[i].time;
        const Timestamp stop = i + 1 < deploys.size() ? deploys[i + 1].time : std::max(trace.end, begin);
        out.push_back({begin, begin - deploys[i].cutoff, i});
        out.push_back({stop, stop - deploys[i].cutoff, i});
    }
    return out;
}

double time_averaged_age_min(const SimTrace& trace, ModelType type, Timestamp from) {
    const auto deploys = trace.deployed(type);
    if (deploys.empty()) throw Error(ErrorCode::NoDeploys, "no deploys of " + std::string(to_string(type)));
    const std::int64_t lo = std::max(ms_of(from), ms_of(deploys.front().time));
    const std::int64_t hi = ms_of(trace.end);
    // Twice the integral of (t - cutoff) dt, kept integral.
    i128 twice_area = 0;
    std::int64_t last_cutoff = ms_of(deploys.front().cutoff);
    for (std::size_t i = 0; i < deploys.size(); ++i) {
        const std::int64_t c = ms_of(deploys[i].cutoff);
        const std::int64_t a = std::max(ms_of(deploys[i].time), lo);
        const std::int64_t b = std::min(i + 1 < deploys.size() ? ms_of(deploys[i + 1].time) : hi, hi);
        if (ms_of(deploys[i].time) <= lo) last_cutoff = c;
        if (b <= a) continue;
        twice_area += static_cast<i128>(b - c) * (b - c) - static_cast<i128>(a - c) * (a - c);
    }
    if (hi <= lo) return static_cast<double>(lo - last_cutoff) / static_cast<double>(kMsPerMinute);
    const long double mean_ms = static_cast<long double>(twice_area) / (2.0L * static_cast<long double>(hi - lo));
    return static_cast<double>(mean_ms / static_cast<long double>(kMsPerMinute));
}

std::vector<IntervalStats> publish_interval_stats(std::span<const PublishEvent> publishes) {
    std::vector<IntervalStats> out;
    for (ModelType m : kAllModelTypes) {
        for (TierSet s : {TierSet::Dedicated, TierSet::Opportunistic, TierSet::All}) {
            const auto gaps = publish_gaps_ms(publishes, m, s);
            if (gaps.empty()) continue;
            out.push_back(interval_stats(gaps, std::string(to_string(m)) + "/" + std::string(to_string(s))));
        }
    }
    return out;
}

std::vector<PublishEvent> publishes_from_ndjson(std::istream& in) {
    std::vector<PublishEvent> out;
    std::string text;
    std::size_t lineno = 0;
    while (std::getline(in, text)) {
        ++lineno;
        if (text.empty()) continue;
        try {
            const json j = json::parse(text);
            if (j.at("kind").get<std::string>() != "publish") continue;
            PublishEvent e;
            e.time = at_ms(j.at("t_ms").get<std::int64_t>());
            e.model_type = parse_model_type(j.at("model_type").get<std::string>());
            e.tier = parse_tier(j.at("tier").get<std::string>());
            e.cutoff = at_ms(j.at("cutoff_ms").get<std::int64_t>());
            e.instance_id = j.at("instance_id").get<std::uint64_t>();
            if (j.contains("allocation_id")) e.allocation_id = j.at("allocation_id").get<std::uint64_t>();
            e.history_window = Millis{j.at("history_window_ms").get<std::int64_t>()};
            out.push_back(e);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::Malformed, "trace line " + std::to_string(lineno) + ": " + ex.what());
        } catch (const Error& ex) {
            throw Error(ErrorCode::Malformed, "trace line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << content;
    f.close();
    if (!f) throw Error(ErrorCode::StorageFailure, "cannot write " + p.string());
}

} // namespace

void write_trace_files(const SimTrace& trace, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());

    write_file(dir / "trace.ndjson", trace.ndjson());

    std::ostringstream pub;
    pub << publish_csv_header() << ",version,tier_name\n";
    for (const auto& p : trace.publishes) pub << to_csv_row(p.event) << ',' << p.version << ',' << p.tier_name << '\n';
    write_file(dir / "publishes.csv", pub.str());

    std::ostringstream st;
    st << "time_ms,model_type,age_ms,age_min\n";
    for (const auto& a : trace.ages) {
        st << ms_of(a.time) << ',' << to_string(a.model_type) << ',' << a.age.count() << ',' << fmt(to_minutes(a.age))
           << '\n';
    }
    write_file(dir / "staleness.csv", st.str());

    std::ostringstream iv;
    iv << "label,count,min_min,avg_min,max_min,std_min\n";
    const auto events = trace.publish_events();
    for (const auto& s : publish_interval_stats(events)) {
        iv << s.label << ',' << s.count << ',' << fmt(s.min) << ',' << fmt(s.avg) << ',' << fmt(s.max) << ','
           << fmt(s.std) << '\n';
    }
    write_file(dir / "intervals.csv", iv.str());

    // Replaying arrivals through a fresh slot rebuilds the edge's own history.
    for (ModelType m : kAllModelTypes) {
        DeployedSlot slot(m);
        for (const auto& d : trace.deploys) {
            if (d.model_type != m) continue;
            ModelArtifact a;
            a.meta.model_type = m;
            a.meta.cutoff_time = d.cutoff;
            a.meta.source_tier = d.source_tier;
            a.artifact_version = d.version;
            slot.maybe_deploy(a, d.time);
        }
        write_file(dir / ("deploy_history_" + std::string(to_string(m)) + ".csv"), slot.history_csv());
    }
}

} // namespace rbf
