#include "rbf/distribution.hpp"

#include <cmath>
#include <sstream>

#include "rbf/error.hpp"

namespace rbf {

Distribution Distribution::fixed(double value) {
    if (!std::isfinite(value) || value < 0) throw Error(ErrorCode::InvalidConfig, "fixed value must be >= 0");
    return {Kind::Fixed, value, 0, value};
}

Distribution Distribution::uniform(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0 || hi < lo) {
        throw Error(ErrorCode::InvalidConfig, "uniform needs 0 <= min <= max");
    }
    return {Kind::Uniform, lo, hi, lo};
}

Distribution Distribution::truncated_normal(double mean, double std, double lower) {
    if (!std::isfinite(mean) || mean <= 0) throw Error(ErrorCode::InvalidConfig, "mean must be > 0");
    if (!std::isfinite(std) || std < 0) throw Error(ErrorCode::InvalidConfig, "std must be >= 0");
    if (!std::isfinite(lower) || lower < 0 || lower > mean) {
        throw Error(ErrorCode::InvalidConfig, "truncation point must lie in [0, mean]");
    }
    return {Kind::TruncatedNormal, mean, std, lower};
}

double sample_truncated_normal(Rng& rng, double mean, double std, double lower) {
    if (std == 0) return std::max(mean, lower);
    std::normal_distribution<double> n(mean, std);
    for (int i = 0; i < 64; ++i) {
        const double x = n(rng);
        if (x >= lower) return x;
    }
    return lower;
}

double Distribution::sample(Rng& rng) const {
    switch (kind_) {
    case Kind::Fixed: return a_;
    case Kind::Uniform: return a_ == b_ ? a_ : std::uniform_real_distribution<double>(a_, b_)(rng);
    case Kind::TruncatedNormal: return sample_truncated_normal(rng, a_, b_, lower_);
    }
    return a_;
}

double Distribution::mean() const noexcept {
    return kind_ == Kind::Uniform ? 0.5 * (a_ + b_) : a_;
}

double Distribution::std() const noexcept {
    switch (kind_) {
    case Kind::Fixed: return 0;
    case Kind::Uniform: return (b_ - a_) / std::sqrt(12.0);
    case Kind::TruncatedNormal: return b_;
    }
    return 0;
}

std::string Distribution::describe() const {
    std::ostringstream s;
    switch (kind_) {
    case Kind::Fixed: s << "fixed(" << a_ << ")"; break;
    case Kind::Uniform: s << "uniform(" << a_ << ", " << b_ << ")"; break;
    case Kind::TruncatedNormal: s << "truncated_normal(" << a_ << ", " << b_ << ", >=" << lower_ << ")"; break;
    }
    return s.str();
}

Rng make_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5242u};
    return Rng(seq);
}

} // namespace rbf
