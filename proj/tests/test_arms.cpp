#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/random.hpp"

using namespace crowdbandit;

namespace {

double empirical_growth_mean(const ArmModel& arm, std::uint64_t seed, int n) {
    RandomStream rng(seed);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += static_cast<double>(sample_growth(arm, rng));
    return s / n;
}

} // namespace

TEST(Arms, PointGrowthIsDegenerate) {
    RandomStream rng(1);
    const ArmModel one = make_point_arm(1, 0.0);
    const ArmModel zero = make_point_arm(0, 0.0);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(sample_growth(one, rng), 1);
        EXPECT_EQ(sample_growth(zero, rng), 0);
    }
}

TEST(Arms, GeometricMeanHalf) {
    // Uncapped so that the configured mean is exact.
    const ArmModel arm = make_geometric_arm(0.5, 0.0, 0);
    const double m = empirical_growth_mean(arm, 42, 1'000'000);
    EXPECT_GE(m, 0.497);
    EXPECT_LE(m, 0.503);
}

TEST(Arms, GeometricAnalyticMean) {
    for (double g : {0.01, 0.3, 1.0, 1.7, 1.999}) {
        const auto d = GeometricGrowth::with_mean(g, 0);
        EXPECT_NEAR(d.theta() / (1.0 - d.theta()), g, 1e-12);
        EXPECT_NEAR(growth_mean(GrowthDistribution{d}), g, 1e-12);
    }
}

TEST(Arms, TruncatedGeometricMeanMatchesDirectSum) {
    const GeometricGrowth d(0.6, 5);
    double num = 0.0, den = 0.0;
    for (int j = 0; j <= 5; ++j) {
        num += j * std::pow(0.6, j);
        den += std::pow(0.6, j);
    }
    EXPECT_NEAR(growth_mean(GrowthDistribution{d}), num / den, 1e-12);
    RandomStream rng(9);
    for (int i = 0; i < 10000; ++i) EXPECT_LE(d.sample(rng), 5);
}

TEST(Arms, TwoPointRewardDegenerate) {
    const ArmModel arm = make_point_arm(1, 2.0);
    RandomStream rng(3);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_reward(arm, rng), 2.0);
}

TEST(Arms, TwoPointRewardFairCoin) {
    const ArmModel arm = make_point_arm(1, 0.0);
    RandomStream rng(5);
    double s = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) s += sample_reward(arm, rng);
    EXPECT_GE(s / n, -0.01);
    EXPECT_LE(s / n, 0.01);
}

TEST(Arms, RewardOutsideSupportRejected) {
    EXPECT_THROW(make_point_arm(1, 2.5), DomainError);
    EXPECT_THROW(make_geometric_arm(1.0, -3.0), DomainError);
}

TEST(Generator, ShapeAndSupport) {
    RandomStream rng(derive_key(7, {1, 0}));
    const auto arms = generate_problem(20, rng);
    ASSERT_EQ(arms.size(), 20u);
    RandomStream draws(11);
    for (const ArmModel& a : arms) {
        EXPECT_GE(a.mean_growth, 0.0);
        EXPECT_LE(a.mean_growth, 2.0);
        EXPECT_EQ(a.reward.lo, -2.0);
        EXPECT_EQ(a.reward.hi, 2.0);
        // Analytic means of the constructed laws.
        const auto& g = std::get<GeometricGrowth>(a.growth);
        EXPECT_NEAR(g.nominal_mean(), a.mean_growth, 1e-12);
        EXPECT_NEAR(4.0 * a.reward.p_hi - 2.0, a.mean_reward, 1e-12);
        for (int i = 0; i < 50; ++i) {
            const double r = sample_reward(a, draws);
            EXPECT_TRUE(r == -2.0 || r == 2.0);
        }
    }
}

TEST(Generator, AlphaZeroRewardRange) {
    // With alpha = 0 the formula is 0.6 (u - |2g - 1|) - 0.5. |2g - 1| reaches 3 on
    // g in (0, 2), so the range is [-2.3, 0.1]; [-1.1, 0.1] holds for g <= 1 only.
    RandomStream rng(123);
    double lo = 1e9, hi = -1e9, lo_left = 1e9;
    for (int i = 0; i < 100000; ++i) {
        const double g = rng.uniform(0.0, 2.0);
        const double u = rng.uniform();
        const double r = 0.6 * (u - std::abs(2.0 * g - 1.0)) - 0.5;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        if (g <= 1.0) lo_left = std::min(lo_left, r);
    }
    EXPECT_GE(lo, -2.3 - 1e-12);
    EXPECT_LE(hi, 0.1 + 1e-12);
    EXPECT_GE(lo_left, -1.1 - 1e-12);
    EXPECT_LT(lo, -2.2);
}

TEST(Generator, SameSeedSameInstance) {
    RandomStream a(derive_key(99, {1, 3}));
    RandomStream b(derive_key(99, {1, 3}));
    const auto x = generate_problem(20, a);
    const auto y = generate_problem(20, b);
    for (std::size_t k = 0; k < x.size(); ++k) {
        EXPECT_EQ(x[k].mean_growth, y[k].mean_growth);
        EXPECT_EQ(x[k].mean_reward, y[k].mean_reward);
        EXPECT_TRUE(x[k].growth == y[k].growth);
        EXPECT_TRUE(x[k].reward == y[k].reward);
    }
}

TEST(Generator, ClampKeepsBernoulliValid) {
    for (std::uint64_t s = 0; s < 2000; ++s) {
        RandomStream rng(derive_key(5, {s}));
        for (const ArmModel& a : generate_problem(20, rng)) {
            EXPECT_GE(a.reward.p_hi, 0.0);
            EXPECT_LE(a.reward.p_hi, 1.0);
            EXPECT_GE(a.mean_reward, -2.0);
            EXPECT_LE(a.mean_reward, 2.0);
        }
    }
}

TEST(ProblemInstance, Validation) {
    ProblemInstance p;
    p.arms = {make_point_arm(1, 0.5)};
    p.x_top = 10;
    p.x0 = 5;
    p.horizon = 3;
    EXPECT_NO_THROW(p.validate());
    p.x0 = 11;
    EXPECT_THROW(p.validate(), ConfigError);
    p.x0 = 0;
    EXPECT_THROW(p.validate(), ConfigError);
    p.x0 = 1;
    p.horizon = 0;
    EXPECT_THROW(p.validate(), ConfigError);
    p.horizon = 1;
    p.arms.clear();
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Random, StreamsAreIndependentOfConsumptionOrder) {
    const RunStreams s(derive_key(1, {2, 3}));
    RandomStream a = s.growth(4, 5);
    RandomStream b = s.growth(4, 5);
    const auto first = a();
    (void)s.reward(4, 5)();
    EXPECT_EQ(first, b());
    EXPECT_NE(s.growth(4, 5)(), s.growth(5, 4)());
}
