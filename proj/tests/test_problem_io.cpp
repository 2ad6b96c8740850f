#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/problem_io.hpp"
#include "crowdbandit/random.hpp"

using namespace crowdbandit;

TEST(ProblemIo, RoundTripIsExact) {
    RandomStream rng(derive_key(3, {1, 0}));
    const ProblemInstance p = generate_instance(20, 1000, 100, 300, rng);
    const std::string text = dump_problem(p);
    const ProblemInstance q = parse_problem(text);
    ASSERT_EQ(q.arms.size(), p.arms.size());
    EXPECT_EQ(q.x_top, p.x_top);
    EXPECT_EQ(q.x0, p.x0);
    EXPECT_EQ(q.horizon, p.horizon);
    EXPECT_EQ(q.gamma, p.gamma);
    for (std::size_t k = 0; k < p.arms.size(); ++k) {
        EXPECT_EQ(q.arms[k].mean_growth, p.arms[k].mean_growth);
        EXPECT_EQ(q.arms[k].mean_reward, p.arms[k].mean_reward);
        EXPECT_TRUE(q.arms[k].growth == p.arms[k].growth);
        EXPECT_TRUE(q.arms[k].reward == p.arms[k].reward);
    }
    EXPECT_EQ(dump_problem(q), text);
}

TEST(ProblemIo, PointArm) {
    const std::string text = R"({"x_top": 10, "x0": 2, "horizon": 5, "gamma": 1.0,
        "arms": [{"mean_growth": 1.0, "mean_reward": 0.5,
                  "growth": {"kind": "point", "value": 1},
                  "reward": {"kind": "two_point", "p_hi": 0.625, "lo": -2, "hi": 2}}]})";
    const ProblemInstance p = parse_problem(text);
    ASSERT_EQ(p.arms.size(), 1u);
    EXPECT_EQ(std::get<PointGrowth>(p.arms[0].growth).value, 1);
    EXPECT_DOUBLE_EQ(p.arms[0].reward.mean(), 0.5);
}

TEST(ProblemIo, MalformedJsonReportsLine) {
    const std::string text = "{\n  \"x_top\": 10,\n  \"x0\": ,\n}";
    try {
        parse_problem(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(ProblemIo, MissingFieldIsConfigError) {
    EXPECT_THROW(parse_problem(R"({"x_top": 10, "x0": 2, "horizon": 5, "gamma": 1})"), ConfigError);
}

TEST(ProblemIo, InvalidValuesRejected) {
    const std::string text = R"({"x_top": 10, "x0": 20, "horizon": 5, "gamma": 1.0,
        "arms": [{"mean_growth": 1.0, "mean_reward": 0.5,
                  "growth": {"kind": "point", "value": 1},
                  "reward": {"kind": "two_point", "p_hi": 0.625, "lo": -2, "hi": 2}}]})";
    EXPECT_THROW(parse_problem(text), ConfigError);
}

TEST(ProblemIo, SaveAndLoad) {
    RandomStream rng(17);
    const ProblemInstance p = generate_instance(4, 50, 5, 10, rng);
    const auto path = std::filesystem::temp_directory_path() / "crowdbandit_io_test.json";
    save_problem(path, p);
    EXPECT_EQ(dump_problem(load_problem(path)), dump_problem(p));
    std::filesystem::remove(path);
    EXPECT_THROW(load_problem(path), ConfigError);
}
