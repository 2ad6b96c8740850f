#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "crowdbandit/errors.hpp"
#include "crowdbandit/random.hpp"

namespace crowdbandit {

// Degenerate growth: every pull enrols exactly `value` subjects.
struct PointGrowth {
    std::int64_t value = 0;
};

// P(X = j) = (1 - theta) theta^j for j >= 0, so E X = theta / (1 - theta).
// Draws above `cap` are resampled; cap == 0 means unbounded.
class GeometricGrowth {
public:
    GeometricGrowth() = default;
    GeometricGrowth(double theta, std::int64_t cap) : theta_(theta), cap_(cap) {
        if (!(theta >= 0.0 && theta < 1.0)) {
            throw DomainError("geometric continuation ratio must lie in [0, 1)");
        }
        if (cap < 0) {
            throw DomainError("geometric cap must be non-negative");
        }
        inv_log_theta_ = theta > 0.0 ? 1.0 / std::log(theta) : 0.0;
    }

    static GeometricGrowth with_mean(double mean, std::int64_t cap) {
        if (!(mean >= 0.0) || !std::isfinite(mean)) {
            throw DomainError("geometric mean must be finite and non-negative");
        }
        return GeometricGrowth(mean / (mean + 1.0), cap);
    }

    double theta() const noexcept { return theta_; }
    std::int64_t cap() const noexcept { return cap_; }
    bool truncated() const noexcept { return cap_ > 0; }

    // Mean of the untruncated law.
    double nominal_mean() const noexcept { return theta_ / (1.0 - theta_); }

    std::int64_t sample(RandomStream& rng) const noexcept {
        if (theta_ == 0.0) {
            return 0;
        }
        for (;;) {
            const double u = rng.uniform_positive();
            const auto x = static_cast<std::int64_t>(std::floor(std::log(u) * inv_log_theta_));
            if (cap_ == 0 || x <= cap_) {
                return x;
            }
        }
    }

    friend bool operator==(const GeometricGrowth& a, const GeometricGrowth& b) noexcept {
        return a.theta_ == b.theta_ && a.cap_ == b.cap_;
    }

private:
    double theta_ = 0.0;
    std::int64_t cap_ = 0;
    double inv_log_theta_ = 0.0;
};

// Finite support law: P(X = j) = pmf[j].
struct FiniteGrowth {
    std::vector<double> pmf;

    friend bool operator==(const FiniteGrowth&, const FiniteGrowth&) = default;
};

inline bool operator==(const PointGrowth& a, const PointGrowth& b) noexcept {
    return a.value == b.value;
}

using GrowthDistribution = std::variant<PointGrowth, GeometricGrowth, FiniteGrowth>;

// Takes `hi` with probability p_hi, `lo` otherwise.
struct TwoPointReward {
    double p_hi = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    double mean() const noexcept { return lo + p_hi * (hi - lo); }
    double sample(RandomStream& rng) const noexcept { return rng.uniform() < p_hi ? hi : lo; }

    friend bool operator==(const TwoPointReward&, const TwoPointReward&) = default;
};

using RewardDistribution = TwoPointReward;

// Exact mean of a growth law, truncation included.
inline double growth_mean(const GrowthDistribution& dist) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointGrowth>) {
                return static_cast<double>(d.value);
            } else if constexpr (std::is_same_v<T, GeometricGrowth>) {
                if (!d.truncated() || d.theta() == 0.0) {
                    return d.nominal_mean();
                }
                // Truncated to {0..cap}: sum j (1-θ)θ^j / (1 - θ^{cap+1}).
                const double t = d.theta();
                const auto n = static_cast<double>(d.cap());
                const double tn1 = std::pow(t, n + 1.0);
                const double partial = t * (1.0 - (n + 1.0) * std::pow(t, n) + n * tn1) / (1.0 - t);
                return partial / (1.0 - tn1);
            } else {
                double m = 0.0;
                for (std::size_t j = 0; j < d.pmf.size(); ++j) {
                    m += static_cast<double>(j) * d.pmf[j];
                }
                return m;
            }
        },
        dist);
}

// Largest value the law can produce; infinity for an uncapped geometric.
inline double growth_support_max(const GrowthDistribution& dist) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointGrowth>) {
                return static_cast<double>(d.value);
            } else if constexpr (std::is_same_v<T, GeometricGrowth>) {
                if (d.theta() == 0.0) return 0.0;
                return d.truncated() ? static_cast<double>(d.cap())
                                     : std::numeric_limits<double>::infinity();
            } else {
                for (std::size_t j = d.pmf.size(); j > 0; --j) {
                    if (d.pmf[j - 1] > 0.0) return static_cast<double>(j - 1);
                }
                return 0.0;
            }
        },
        dist);
}

inline std::int64_t sample_growth(const GrowthDistribution& dist, RandomStream& rng) {
    return std::visit(
        [&rng](const auto& d) -> std::int64_t {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointGrowth>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, GeometricGrowth>) {
                return d.sample(rng);
            } else {
                double u = rng.uniform();
                for (std::size_t j = 0; j < d.pmf.size(); ++j) {
                    if (u < d.pmf[j]) return static_cast<std::int64_t>(j);
                    u -= d.pmf[j];
                }
                return static_cast<std::int64_t>(d.pmf.size()) - 1;
            }
        },
        dist);
}

struct ArmModel {
    double mean_growth = 0.0;
    double mean_reward = 0.0;
    GrowthDistribution growth = PointGrowth{};
    RewardDistribution reward{};

    double reward_lo() const noexcept { return reward.lo; }
    double reward_hi() const noexcept { return reward.hi; }
};

inline std::int64_t sample_growth(const ArmModel& arm, RandomStream& rng) {
    return sample_growth(arm.growth, rng);
}

inline double sample_reward(const ArmModel& arm, RandomStream& rng) {
    return arm.reward.sample(rng);
}

// Arm with a point-mass growth and a two-point reward on {lo, hi} with the given mean.
inline ArmModel make_point_arm(std::int64_t growth, double mean_reward, double lo = -2.0,
                               double hi = 2.0) {
    if (!(mean_reward >= lo && mean_reward <= hi)) {
        throw DomainError("mean reward outside the reward support");
    }
    ArmModel arm;
    arm.mean_growth = static_cast<double>(growth);
    arm.mean_reward = mean_reward;
    arm.growth = PointGrowth{growth};
    arm.reward = TwoPointReward{hi > lo ? (mean_reward - lo) / (hi - lo) : 1.0, lo, hi};
    return arm;
}

inline ArmModel make_geometric_arm(double mean_growth, double mean_reward, std::int64_t cap = 50,
                                   double lo = -2.0, double hi = 2.0) {
    if (!(mean_reward >= lo && mean_reward <= hi)) {
        throw DomainError("mean reward outside the reward support");
    }
    ArmModel arm;
    arm.mean_growth = mean_growth;
    arm.mean_reward = mean_reward;
    arm.growth = GeometricGrowth::with_mean(mean_growth, cap);
    arm.reward = TwoPointReward{hi > lo ? (mean_reward - lo) / (hi - lo) : 1.0, lo, hi};
    return arm;
}

struct ProblemInstance {
    std::vector<ArmModel> arms;
    std::int64_t x_top = 1;
    std::int64_t x0 = 1;
    std::int64_t horizon = 1;
    double gamma = 1.0;

    std::size_t num_arms() const noexcept { return arms.size(); }

    void validate() const {
        if (arms.empty()) throw ConfigError("problem has no arms");
        if (x_top < 1) throw ConfigError("x_top must be positive");
        if (x0 < 1 || x0 > x_top) throw ConfigError("x0 must lie in [1, x_top]");
        if (horizon < 1) throw ConfigError("horizon must be positive");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
        for (const ArmModel& arm : arms) {
            if (!(arm.mean_growth >= 0.0) || !std::isfinite(arm.mean_growth)) {
                throw ConfigError("arm mean growth must be finite and non-negative");
            }
            if (!(arm.reward.lo <= arm.reward.hi) ||
                !(arm.reward.p_hi >= 0.0 && arm.reward.p_hi <= 1.0)) {
                throw ConfigError("arm reward law is malformed");
            }
        }
    }

    double reward_lo() const {
        double lo = std::numeric_limits<double>::infinity();
        for (const ArmModel& a : arms) lo = std::min(lo, a.reward.lo);
        return lo;
    }
    double reward_hi() const {
        double hi = -std::numeric_limits<double>::infinity();
        for (const ArmModel& a : arms) hi = std::max(hi, a.reward.hi);
        return hi;
    }
    // Largest possible single-pull growth (the UCB's bounded-growth constant).
    double growth_cap() const {
        double cap = 0.0;
        for (const ArmModel& a : arms) cap = std::max(cap, growth_support_max(a.growth));
        return cap;
    }
};

struct GeneratorOptions {
    std::int64_t growth_cap = 50;
};

// Random problem family used throughout the experiments: one shared difficulty
// draw alpha, per-arm mean growth in (0, 2) with geometric growth, and rewards on
// {-2, +2} whose mean trades off against |2g - 1|.
inline std::vector<ArmModel> generate_problem(std::size_t num_arms, RandomStream& rng,
                                              const GeneratorOptions& options = {}) {
    if (num_arms == 0) throw DomainError("generate_problem needs at least one arm");
    const double alpha = rng.uniform();
    std::vector<ArmModel> arms;
    arms.reserve(num_arms);
    for (std::size_t k = 0; k < num_arms; ++k) {
        const double g = rng.uniform(0.0, 2.0);
        const double u = rng.uniform();
        double r = (0.6 + 0.7 * alpha) * (u - std::abs(2.0 * g - 1.0)) - 0.5 + 1.47 * alpha;
        r = std::clamp(r, -2.0, 2.0);
        arms.push_back(make_geometric_arm(g, r, options.growth_cap, -2.0, 2.0));
    }
    return arms;
}

inline ProblemInstance generate_instance(std::size_t num_arms, std::int64_t x_top, std::int64_t x0,
                                         std::int64_t horizon, RandomStream& rng,
                                         const GeneratorOptions& options = {}) {
    ProblemInstance p;
    p.arms = generate_problem(num_arms, rng, options);
    p.x_top = x_top;
    p.x0 = x0;
    p.horizon = horizon;
    p.gamma = 1.0;
    p.validate();
    return p;
}

} // namespace crowdbandit
