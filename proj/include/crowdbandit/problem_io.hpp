#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/errors.hpp"

namespace crowdbandit {

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw ConfigError(where + ": missing field \"" + key + "\"");
    }
    return obj.at(key);
}

template <class T>
T require_as(const nlohmann::json& obj, const char* key, const std::string& where) {
    const nlohmann::json& v = require(obj, key, where);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": field \"" + key + "\" has the wrong type");
    }
}

// nlohmann reports a byte offset; convert it to 1-based line/column.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

} // namespace detail

inline nlohmann::json growth_to_json(const GrowthDistribution& dist) {
    if (const auto* p = std::get_if<PointGrowth>(&dist)) {
        return {{"kind", "point"}, {"value", p->value}};
    }
    if (const auto* g = std::get_if<GeometricGrowth>(&dist)) {
        return {{"kind", "geometric"}, {"theta", g->theta()}, {"cap", g->cap()}};
    }
    const auto& f = std::get<FiniteGrowth>(dist);
    return {{"kind", "finite"}, {"pmf", f.pmf}};
}

inline GrowthDistribution growth_from_json(const nlohmann::json& j, const std::string& where) {
    const auto kind = detail::require_as<std::string>(j, "kind", where);
    if (kind == "point") {
        return PointGrowth{detail::require_as<std::int64_t>(j, "value", where)};
    }
    if (kind == "geometric") {
        const double theta = detail::require_as<double>(j, "theta", where);
        const auto cap = detail::require_as<std::int64_t>(j, "cap", where);
        try {
            return GeometricGrowth(theta, cap);
        } catch (const DomainError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    if (kind == "finite") {
        return FiniteGrowth{detail::require_as<std::vector<double>>(j, "pmf", where)};
    }
    throw ConfigError(where + ": unknown growth kind \"" + kind + "\"");
}

inline nlohmann::json to_json(const ProblemInstance& p) {
    nlohmann::json arms = nlohmann::json::array();
    for (const ArmModel& a : p.arms) {
        arms.push_back({
            {"mean_growth", a.mean_growth},
            {"mean_reward", a.mean_reward},
            {"growth", growth_to_json(a.growth)},
            {"reward", {{"kind", "two_point"}, {"p_hi", a.reward.p_hi}, {"lo", a.reward.lo},
                        {"hi", a.reward.hi}}},
        });
    }
    return {{"x_top", p.x_top}, {"x0", p.x0},     {"horizon", p.horizon},
            {"gamma", p.gamma}, {"arms", arms}};
}

inline ProblemInstance problem_from_json(const nlohmann::json& j) {
    ProblemInstance p;
    p.x_top = detail::require_as<std::int64_t>(j, "x_top", "problem");
    p.x0 = detail::require_as<std::int64_t>(j, "x0", "problem");
    p.horizon = detail::require_as<std::int64_t>(j, "horizon", "problem");
    p.gamma = detail::require_as<double>(j, "gamma", "problem");
    const nlohmann::json& arms = detail::require(j, "arms", "problem");
    if (!arms.is_array()) throw ConfigError("problem: \"arms\" must be an array");
    for (std::size_t k = 0; k < arms.size(); ++k) {
        const std::string where = "arms[" + std::to_string(k) + "]";
        ArmModel a;
        a.mean_growth = detail::require_as<double>(arms[k], "mean_growth", where);
        a.mean_reward = detail::require_as<double>(arms[k], "mean_reward", where);
        a.growth = growth_from_json(detail::require(arms[k], "growth", where), where + ".growth");
        const nlohmann::json& r = detail::require(arms[k], "reward", where);
        const auto kind = detail::require_as<std::string>(r, "kind", where + ".reward");
        if (kind != "two_point") {
            throw ConfigError(where + ".reward: unknown reward kind \"" + kind + "\"");
        }
        a.reward.p_hi = detail::require_as<double>(r, "p_hi", where + ".reward");
        a.reward.lo = detail::require_as<double>(r, "lo", where + ".reward");
        a.reward.hi = detail::require_as<double>(r, "hi", where + ".reward");
        p.arms.push_back(std::move(a));
    }
    p.validate();
    return p;
}

inline ProblemInstance parse_problem(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, column] = detail::line_column(text, e.byte);
        throw ParseError("malformed problem JSON at line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + e.what(),
                         line, column);
    }
    return problem_from_json(j);
}

inline std::string dump_problem(const ProblemInstance& p) { return to_json(p).dump(2) + "\n"; }

inline ProblemInstance load_problem(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open problem file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_problem(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line(), e.column());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void save_problem(const std::filesystem::path& path, const ProblemInstance& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write problem file " + path.string());
    out << dump_problem(p);
    if (!out) throw ConfigError("failed writing problem file " + path.string());
}

} // namespace crowdbandit
