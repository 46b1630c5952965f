#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbf/model_lifecycle.hpp"
#include "rbf/pipeline_engine.hpp"

namespace rbf {

__extension__ typedef __int128 i128;

/// Summary of inter-publish gaps, in minutes. `std` is the population
/// standard deviation.
struct IntervalStats {
    std::string label;
    std::uint32_t count = 0;
    double min = 0;
    double avg = 0;
    double max = 0;
    double std = 0;

    friend bool operator==(const IntervalStats&, const IntervalStats&) = default;
};

/// Gaps are whole milliseconds so both routes below can keep the variance as
/// an exact integer ratio; they agree bit for bit.
class IntervalAccumulator {
public:
    void add(std::int64_t gap_ms);
    [[nodiscard]] IntervalStats finish(std::string label) const;

private:
    std::uint32_t n_ = 0;
    std::int64_t min_ = 0;
    std::int64_t max_ = 0;
    i128 sum_ = 0;
    i128 sum_sq_ = 0;
};

/// Single pass over the gaps. Throws EmptySelection when there are none.
IntervalStats interval_stats(std::span<const std::int64_t> gaps_ms, std::string label = {});

/// Two-pass recomputation with sorting and explicit deviations, used to check
/// the streaming route.
IntervalStats interval_stats_brute_force(std::span<const std::int64_t> gaps_ms, std::string label = {});

enum class TierSet { Dedicated, Opportunistic, All };

std::string_view to_string(TierSet s) noexcept;
/// "ded", "opp", "all".
TierSet parse_tier_set(std::string_view s);
bool contains(TierSet s, Tier t) noexcept;

/// Times of publishes of `model` from tiers in `tiers`, gaps between
/// consecutive ones (after a stable sort by time).
std::vector<std::int64_t> publish_gaps_ms(std::span<const PublishEvent> publishes, ModelType model, TierSet tiers);

/// One-decimal rendering for console output.
std::string format_stats(const IntervalStats& s);

} // namespace rbf
