#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/errors.hpp"

namespace crowdbandit {

// (mean growth, mean reward) of one arm, tagged with the arm's index.
struct ArmPoint {
    double growth = 0.0;
    double reward = 0.0;
    std::size_t arm = 0;
};

enum class CaseLabel { A, B, C };

constexpr std::string_view to_string(CaseLabel c) noexcept {
    switch (c) {
    case CaseLabel::A: return "A";
    case CaseLabel::B: return "B";
    case CaseLabel::C: return "C";
    }
    return "?";
}

struct ArmWeight {
    std::size_t arm = 0;
    double weight = 0.0;
};

// Distribution over at most two arms.
struct Mixture {
    std::array<ArmWeight, 2> parts{};
    std::size_t size = 0;

    static Mixture single(std::size_t arm) {
        Mixture m;
        m.parts[0] = {arm, 1.0};
        m.size = 1;
        return m;
    }

    std::span<const ArmWeight> weights() const noexcept { return {parts.data(), size}; }

    double weight_of(std::size_t arm) const noexcept {
        double w = 0.0;
        for (const ArmWeight& p : weights()) {
            if (p.arm == arm) w += p.weight;
        }
        return w;
    }

    // Inverse-CDF draw with one uniform in [0, 1).
    std::size_t sample(double u) const noexcept {
        if (size == 2 && u >= parts[0].weight) return parts[1].arm;
        return parts[0].arm;
    }
};

// Orders points by growth, best reward first within equal growth, then by arm index.
inline bool envelope_order(const ArmPoint& a, const ArmPoint& b) noexcept {
    if (a.growth != b.growth) return a.growth < b.growth;
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.arm < b.arm;
}

// Upper concave hull of the arm parameters: the transformed reward R(g) is the
// piecewise-linear interpolation of the vertices on [g_bot, g_top], and the
// transformed action Ψ(g) is the mixture of the two vertex arms bracketing g.
class RewardEnvelope {
public:
    RewardEnvelope() = default;

    explicit RewardEnvelope(std::span<const ArmPoint> points) { rebuild(points); }

    void rebuild(std::span<const ArmPoint> points) {
        if (points.empty()) throw DomainError("envelope needs at least one arm");
        points_.assign(points.begin(), points.end());
        sorted_.assign(points.begin(), points.end());
        std::sort(sorted_.begin(), sorted_.end(), envelope_order);
        build_from_sorted();
    }

    // Same as rebuild() for input already in envelope_order; skips the sort.
    void rebuild_sorted(std::span<const ArmPoint> sorted_points) {
        if (sorted_points.empty()) throw DomainError("envelope needs at least one arm");
        points_.assign(sorted_points.begin(), sorted_points.end());
        sorted_.assign(sorted_points.begin(), sorted_points.end());
        build_from_sorted();
    }

    std::span<const ArmPoint> vertices() const noexcept { return vertices_; }
    std::span<const ArmPoint> points() const noexcept { return points_; }

    double g_bot() const noexcept { return vertices_.front().growth; }
    double g_top() const noexcept { return vertices_.back().growth; }
    double r_top() const noexcept { return r_top_; }

    bool contains(double g) const noexcept {
        return g >= g_bot() - slack(g_bot()) && g <= g_top() + slack(g_top());
    }

    // R(g). Throws DomainError outside [g_bot, g_top].
    double reward_at(double g) const {
        const std::size_t i = segment(g);
        const ArmPoint& a = vertices_[i];
        if (g <= a.growth || i + 1 == vertices_.size()) return a.reward;
        const ArmPoint& b = vertices_[i + 1];
        if (g >= b.growth) return b.reward;
        const double w = (g - a.growth) / (b.growth - a.growth);
        return a.reward + w * (b.reward - a.reward);
    }

    // Ψ(g): a single arm at a vertex, otherwise the two arms of the containing segment.
    Mixture action_at(double g) const {
        const std::size_t i = segment(g);
        const ArmPoint& a = vertices_[i];
        if (g <= a.growth || i + 1 == vertices_.size()) return Mixture::single(a.arm);
        const ArmPoint& b = vertices_[i + 1];
        if (g >= b.growth) return Mixture::single(b.arm);
        const double wb = (g - a.growth) / (b.growth - a.growth);
        Mixture m;
        m.parts[0] = {a.arm, 1.0 - wb};
        m.parts[1] = {b.arm, wb};
        m.size = 2;
        return m;
    }

    // max_{g >= g_min} R(g); -infinity when g_min > g_top.
    double max_reward_from(double g_min) const noexcept {
        if (g_min > g_top()) return -std::numeric_limits<double>::infinity();
        const double start = std::max(g_min, g_bot());
        double best = reward_at_unchecked(start);
        for (const ArmPoint& v : vertices_) {
            if (v.growth >= start) best = std::max(best, v.reward);
        }
        return best;
    }

    // argmax_{g >= g_min} R(g), ties resolved toward the largest g. Requires g_min <= g_top.
    double argmax_reward_from(double g_min) const {
        if (g_min > g_top()) throw DomainError("no growth above the requested minimum");
        const double start = std::max(g_min, g_bot());
        double best_g = start;
        double best_r = reward_at_unchecked(start);
        for (const ArmPoint& v : vertices_) {
            if (v.growth >= start && v.reward >= best_r) {
                best_g = v.growth;
                best_r = v.reward;
            }
        }
        return best_g;
    }

    // Index i of the segment [v_i, v_{i+1}] containing g (last vertex index if g == g_top).
    std::size_t segment(double g) const {
        if (!contains(g)) throw DomainError("growth outside the envelope domain");
        const auto it = std::upper_bound(vertices_.begin(), vertices_.end(), g,
                                         [](double x, const ArmPoint& v) { return x < v.growth; });
        if (it == vertices_.begin()) return 0;
        return static_cast<std::size_t>(it - vertices_.begin()) - 1;
    }

private:
    static double slack(double bound) noexcept { return 1e-12 * std::max(1.0, std::abs(bound)); }

    double reward_at_unchecked(double g) const noexcept {
        const auto it = std::upper_bound(vertices_.begin(), vertices_.end(), g,
                                         [](double x, const ArmPoint& v) { return x < v.growth; });
        if (it == vertices_.begin()) return vertices_.front().reward;
        if (it == vertices_.end()) return vertices_.back().reward;
        const ArmPoint& a = *(it - 1);
        const ArmPoint& b = *it;
        const double w = (g - a.growth) / (b.growth - a.growth);
        return a.reward + w * (b.reward - a.reward);
    }

    void build_from_sorted() {
        vertices_.clear();
        r_top_ = -std::numeric_limits<double>::infinity();
        for (const ArmPoint& p : sorted_) {
            r_top_ = std::max(r_top_, p.reward);
            if (!vertices_.empty() && vertices_.back().growth == p.growth) continue;
            // Monotone chain: pop while the last vertex is on or below the chord.
            while (vertices_.size() >= 2) {
                const ArmPoint& o = vertices_[vertices_.size() - 2];
                const ArmPoint& a = vertices_.back();
                const double cross = (a.growth - o.growth) * (p.reward - o.reward) -
                                     (a.reward - o.reward) * (p.growth - o.growth);
                if (cross < 0.0) break;
                vertices_.pop_back();
            }
            vertices_.push_back(p);
        }
    }

    std::vector<ArmPoint> points_;
    std::vector<ArmPoint> sorted_;
    std::vector<ArmPoint> vertices_;
    double r_top_ = 0.0;
};

inline std::vector<ArmPoint> arm_points(std::span<const ArmModel> arms) {
    std::vector<ArmPoint> pts;
    pts.reserve(arms.size());
    for (std::size_t k = 0; k < arms.size(); ++k) {
        pts.push_back({arms[k].mean_growth, arms[k].mean_reward, k});
    }
    return pts;
}

inline RewardEnvelope build_envelope(std::span<const ArmModel> arms) {
    return RewardEnvelope(arm_points(arms));
}

inline double transformed_reward(const RewardEnvelope& env, double g) { return env.reward_at(g); }

inline Mixture transformed_action(const RewardEnvelope& env, double g) { return env.action_at(g); }

inline CaseLabel classify_case(const RewardEnvelope& env) noexcept {
    if (env.r_top() <= 0.0) return CaseLabel::A;
    if (env.max_reward_from(1.0) <= 0.0) return CaseLabel::B;
    return CaseLabel::C;
}

// Signed distance from (1, 0) to the envelope polyline: negative for Cases A/B,
// positive for Case C.
inline double decidability(const RewardEnvelope& env) {
    const auto verts = env.vertices();
    auto dist_to = [](const ArmPoint& p) { return std::hypot(p.growth - 1.0, p.reward); };
    double best = dist_to(verts.front());
    for (std::size_t i = 0; i + 1 < verts.size(); ++i) {
        const double ax = verts[i].growth, ay = verts[i].reward;
        const double dx = verts[i + 1].growth - ax, dy = verts[i + 1].reward - ay;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0.0 ? ((1.0 - ax) * dx + (0.0 - ay) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        best = std::min(best, std::hypot(ax + t * dx - 1.0, ay + t * dy));
    }
    return classify_case(env) == CaseLabel::C ? best : -best;
}

inline void write_envelope_csv(std::ostream& out, const RewardEnvelope& env) {
    out << "growth,reward,arm_id\n";
    char buf[96];
    for (const ArmPoint& v : env.vertices()) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", v.growth, v.reward, v.arm);
        out << buf;
    }
}

} // namespace crowdbandit
