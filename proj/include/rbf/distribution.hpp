#pragma once

#include <random>
#include <string>

namespace rbf {

using Rng = std::mt19937_64;

/// Duration distribution, in whatever unit the caller attaches (minutes or
/// hours). Truncated normals are resampled below `lower`, which defaults to
/// 0.1 x mean so draws stay positive.
class Distribution {
public:
    enum class Kind { Fixed, Uniform, TruncatedNormal };

    static Distribution fixed(double value);
    static Distribution uniform(double lo, double hi);
    static Distribution truncated_normal(double mean, double std, double lower);
    static Distribution truncated_normal(double mean, double std) { return truncated_normal(mean, std, 0.1 * mean); }

    double sample(Rng& rng) const;

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    /// Nominal parameters: the untruncated mean and std for truncated normals.
    [[nodiscard]] double mean() const noexcept;
    [[nodiscard]] double std() const noexcept;
    [[nodiscard]] double lo() const noexcept { return a_; }
    [[nodiscard]] double hi() const noexcept { return b_; }
    [[nodiscard]] double lower() const noexcept { return lower_; }

    [[nodiscard]] std::string describe() const;

    friend bool operator==(const Distribution&, const Distribution&) = default;

private:
    Distribution(Kind k, double a, double b, double lower) : kind_(k), a_(a), b_(b), lower_(lower) {}

    Kind kind_ = Kind::Fixed;
    // Fixed: a = value. Uniform: [a, b]. TruncatedNormal: mean a, std b.
    double a_ = 0;
    double b_ = 0;
    double lower_ = 0;
};

/// Normal(mean, std) resampled until the draw is >= lower. When the mean sits
/// far below `lower` the rejection loop would stall, so past 64 rejections
/// the draw is clamped to `lower`.
double sample_truncated_normal(Rng& rng, double mean, double std, double lower);

/// Independent stream for component `index` of a run seeded with `seed`.
Rng make_stream(std::uint64_t seed, std::uint64_t index);

} // namespace rbf
