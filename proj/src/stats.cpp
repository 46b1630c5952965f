#include "rbf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rbf/error.hpp"

namespace rbf {

namespace {

i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    while (b != 0) {
        const i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

/// sqrt(num / den) minutes^2 -> minutes, from a fraction in ms^2 reduced to
/// lowest terms so equal ratios give equal doubles.
double std_minutes(i128 num, i128 den) {
    if (num == 0) return 0;
    const i128 g = gcd128(num, den);
    num /= g;
    den /= g;
    const double var_ms2 = static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
    return std::sqrt(var_ms2) / static_cast<double>(kMsPerMinute);
}

double ms_to_min(long double ms) { return static_cast<double>(ms / static_cast<long double>(kMsPerMinute)); }

/// Mean as sum / n, reduced first for the same reason.
double mean_minutes(i128 sum, i128 n) {
    const i128 g = gcd128(sum, n);
    return ms_to_min(static_cast<long double>(sum / g) / static_cast<long double>(n / g));
}

} // namespace

void IntervalAccumulator::add(std::int64_t gap_ms) {
    if (n_ == 0) {
        min_ = max_ = gap_ms;
    } else {
        min_ = std::min(min_, gap_ms);
        max_ = std::max(max_, gap_ms);
    }
    ++n_;
    sum_ += gap_ms;
    sum_sq_ += static_cast<i128>(gap_ms) * gap_ms;
}

IntervalStats IntervalAccumulator::finish(std::string label) const {
    if (n_ == 0) throw Error(ErrorCode::EmptySelection, "no intervals" + (label.empty() ? "" : " for " + label));
    IntervalStats s;
    s.label = std::move(label);
    s.count = n_;
    s.min = ms_to_min(min_);
    s.max = ms_to_min(max_);
    s.avg = mean_minutes(sum_, n_);
    // Var = (n * sum(x^2) - sum(x)^2) / n^2
    s.std = std_minutes(static_cast<i128>(n_) * sum_sq_ - sum_ * sum_, static_cast<i128>(n_) * n_);
    return s;
}

IntervalStats interval_stats(std::span<const std::int64_t> gaps_ms, std::string label) {
    IntervalAccumulator acc;
    for (auto g : gaps_ms) acc.add(g);
    return acc.finish(std::move(label));
}

IntervalStats interval_stats_brute_force(std::span<const std::int64_t> gaps_ms, std::string label) {
    if (gaps_ms.empty()) {
        throw Error(ErrorCode::EmptySelection, "no intervals" + (label.empty() ? "" : " for " + label));
    }
    std::vector<std::int64_t> sorted(gaps_ms.begin(), gaps_ms.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<i128>(sorted.size());
    i128 total = 0;
    for (auto g : sorted) total += g;
    // Sum of squared deviations scaled by n to stay integral:
    // sum((n*x - total)^2) / n^3.
    i128 dev = 0;
    for (auto g : sorted) {
        const i128 d = n * g - total;
        dev += d * d;
    }
    IntervalStats s;
    s.label = std::move(label);
    s.count = static_cast<std::uint32_t>(sorted.size());
    s.min = ms_to_min(sorted.front());
    s.max = ms_to_min(sorted.back());
    s.avg = mean_minutes(total, n);
    s.std = std_minutes(dev, n * n * n);
    return s;
}

std::string_view to_string(TierSet s) noexcept {
    switch (s) {
    case TierSet::Dedicated: return "ded";
    case TierSet::Opportunistic: return "opp";
    case TierSet::All: return "all";
    }
    return "all";
}

TierSet parse_tier_set(std::string_view s) {
    if (s == "ded") return TierSet::Dedicated;
    if (s == "opp") return TierSet::Opportunistic;
    if (s == "all") return TierSet::All;
    throw Error(ErrorCode::InvalidArgument, "tier set must be ded, opp or all, got '" + std::string(s) + "'");
}

bool contains(TierSet s, Tier t) noexcept {
    return s == TierSet::All || (s == TierSet::Dedicated) == (t == Tier::Dedicated);
}

std::vector<std::int64_t> publish_gaps_ms(std::span<const PublishEvent> publishes, ModelType model, TierSet tiers) {
    std::vector<std::int64_t> times;
    for (const auto& p : publishes) {
        if (p.model_type == model && contains(tiers, p.tier)) times.push_back(ms_of(p.time));
    }
    std::stable_sort(times.begin(), times.end());
    std::vector<std::int64_t> gaps;
    for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
    return gaps;
}

std::string format_stats(const IntervalStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "n=%u min=%.1f avg=%.1f max=%.1f std=%.1f", s.count, s.min, s.avg, s.max, s.std);
    return (s.label.empty() ? "" : s.label + ": ") + buf;
}

} // namespace rbf
