#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/regret.hpp"

using namespace crowdbandit;

namespace {

SimTrace trace_of(std::vector<double> rewards) {
    SimTrace t;
    t.reset(rewards.size(), 1, false);
    t.reward = std::move(rewards);
    return t;
}

ProblemInstance problem_of(std::vector<ArmModel> arms) {
    ProblemInstance p;
    p.arms = std::move(arms);
    p.x_top = 100;
    p.x0 = 10;
    p.horizon = 20;
    return p;
}

} // namespace

TEST(OraclePolicy, Examples) {
    const GrowthPolicy a = oracle_policy(problem_of({make_point_arm(0, -1.0)}));
    EXPECT_TRUE(a.is_constant());
    EXPECT_EQ(a.mixture_at(5.0).parts[0].arm, 0u);

    // Single growing arm: every cell plays it.
    auto p = problem_of({make_geometric_arm(1.5, 0.5)});
    const GrowthPolicy b = oracle_policy(p);
    for (double g : b.growths()) EXPECT_EQ(g, 1.5);

    const auto c = solve_oracle(build_envelope(problem_of({make_geometric_arm(0.5, 1.0),
                                                           make_geometric_arm(1.5, -1.0)}).arms),
                                100);
    EXPECT_EQ(c.case_label, CaseLabel::B);
    EXPECT_TRUE(c.policy.is_constant());
    EXPECT_EQ(c.policy.mixture_at(1.0).parts[0].arm, 0u);
    EXPECT_EQ(c.gamma, 1.0);
}

TEST(Regret, IdenticalSetsGiveZero) {
    const std::vector<SimTrace> a{trace_of({1, 2, 3}), trace_of({3, 2, 1})};
    const RegretSeries s = regret_series(a, a);
    for (const RegretPoint& p : s.points) EXPECT_EQ(p.regret, 0.0);
}

TEST(Regret, HandExample) {
    const std::vector<SimTrace> o{trace_of({10, 9})};
    const std::vector<SimTrace> a{trace_of({8, 9})};
    EXPECT_EQ(instantaneous_regret(o, a, 0).regret, 2.0);
    EXPECT_EQ(instantaneous_regret(o, a, 1).regret, 0.0);
    EXPECT_THROW(instantaneous_regret(o, a, 2), UsageError);
}

TEST(Regret, ErrorsOnMismatch) {
    const std::vector<SimTrace> o{trace_of({10, 9})};
    const std::vector<SimTrace> a{trace_of({8, 9, 1})};
    const std::vector<SimTrace> none;
    EXPECT_THROW(regret_series(o, a), UsageError);
    EXPECT_THROW(regret_series(o, none), UsageError);
}

TEST(Regret, StdErrorCombinesBothSides) {
    const std::vector<SimTrace> o{trace_of({1}), trace_of({3})};
    const std::vector<SimTrace> a{trace_of({0}), trace_of({0}), trace_of({3})};
    // Sample variances 2 and 3.
    const RegretPoint p = instantaneous_regret(o, a, 0);
    EXPECT_NEAR(p.std_error, std::sqrt(2.0 / 2 + 3.0 / 3), 1e-12);
    EXPECT_NEAR(p.regret, 1.0, 1e-12);
}

TEST(Regret, AntisymmetryAndScaling) {
    RandomStream rng(3);
    std::vector<SimTrace> o, a, o2, a2;
    for (int r = 0; r < 7; ++r) {
        std::vector<double> x(12), y(12);
        for (double& v : x) v = rng.uniform(-5, 5);
        for (double& v : y) v = rng.uniform(-5, 5);
        o.push_back(trace_of(x));
        a.push_back(trace_of(y));
        for (double& v : x) v *= 2.5;
        for (double& v : y) v *= 2.5;
        o2.push_back(trace_of(x));
        a2.push_back(trace_of(y));
    }
    const RegretSeries s = regret_series(o, a);
    const RegretSeries r = regret_series(a, o);
    const RegretSeries c = regret_series(o2, a2);
    double sum = 0.0;
    for (std::size_t t = 0; t < 12; ++t) {
        EXPECT_NEAR(s.points[t].regret, -r.points[t].regret, 1e-12);
        EXPECT_NEAR(c.points[t].regret, 2.5 * s.points[t].regret, 1e-12);
        sum += s.points[t].regret;
    }
    EXPECT_NEAR(cumulative_regret(s), sum, 1e-9);
    EXPECT_NEAR(cumulative_regret(c), 2.5 * cumulative_regret(s), 1e-9);
}

TEST(Regret, NegativeValuesAreKept) {
    const std::vector<SimTrace> o{trace_of({1, 1})};
    const std::vector<SimTrace> a{trace_of({4, 1})};
    EXPECT_EQ(cumulative_regret(regret_series(o, a)), -3.0);
}

TEST(Cumulative, Examples) {
    RegretSeries zero;
    zero.points.resize(10);
    EXPECT_EQ(cumulative_regret(zero), 0.0);
    RegretSeries ones;
    ones.points.resize(1000);
    for (auto& p : ones.points) p.regret = 1.0;
    EXPECT_EQ(cumulative_regret(ones, 1.0), 1000.0);
    ones.points.resize(50);
    EXPECT_NEAR(cumulative_regret(ones, 0.5), 2.0 * (1.0 - std::ldexp(1.0, -50)), 1e-15);
}

TEST(Regret, OracleAgainstItself) {
    RandomStream g(derive_key(21, {1, 0}));
    ProblemInstance p = generate_instance(6, 200, 20, 40, g);
    const GrowthPolicy pol = oracle_policy(p);
    RewardAccumulator a(40), b(40);
    for (std::uint64_t r = 0; r < 1000; ++r) {
        PolicyAgent x(pol), y(pol);
        a.add(rollout(x, p, RunStreams(derive_key(22, {r}))));
        b.add(rollout(y, p, RunStreams(derive_key(23, {r}))));
    }
    const RegretSeries s = regret_series(a, b);
    std::size_t within = 0;
    for (const RegretPoint& pt : s.points) {
        if (std::abs(pt.regret) <= 3.0 * pt.std_error) ++within;
    }
    EXPECT_GE(static_cast<double>(within), 0.95 * static_cast<double>(s.points.size()));
}

TEST(Regret, CsvExport) {
    const std::vector<SimTrace> o{trace_of({10, 9})};
    const std::vector<SimTrace> a{trace_of({8, 9})};
    std::ostringstream out;
    write_regret_csv(out, regret_series(o, a));
    EXPECT_EQ(out.str(), "t,oracle_mean,alg_mean,regret,stderr\n0,10,8,2,0\n1,9,9,0,0\n");
}
