#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "crowdbandit/envelope.hpp"
#include "crowdbandit/errors.hpp"

namespace crowdbandit {

struct PlannerConfig {
    std::size_t grid_size = 512;   // crowd sizes, geometric on [1, x_top]
    std::size_t action_grid = 256; // uniform growth candidates on [g_bot, g_top]
    // Stop when the sweep residual is <= tolerance * (1 - gamma) * x_top * max|R|.
    double tolerance = 1e-8;
    // 0 selects 10 * ceil(ln(1/tolerance) / (1 - gamma)), capped at kMaxSweeps.
    std::size_t max_iterations = 0;
    // Only growth actions strictly below 1 are considered (used to check the
    // Case (a-b) closed form, where growing the crowd is never optimal).
    bool depleting_only = false;
    // When false, hitting max_iterations returns the current iterate instead of
    // throwing; the residual is still reported in the ValueTable.
    bool require_convergence = true;
    // Also try every growth x_j / x_i that lands on a grid point. With V linear
    // between grid points and R piecewise linear, these plus the envelope vertices
    // are all the kinks of the Bellman objective, so the maximisation is exact.
    bool exact_actions = true;

    static constexpr std::size_t kMaxSweeps = 1'000'000;
};

// Geometric crowd grid x_i = x_top^{i/(n-1)}, with both end points exact.
inline std::vector<double> geometric_grid(std::int64_t x_top, std::size_t n) {
    if (x_top < 1) throw DomainError("x_top must be at least 1");
    if (x_top == 1) return {1.0};
    if (n < 2) throw DomainError("grid needs at least two points");
    std::vector<double> xs(n);
    const double step = std::log(static_cast<double>(x_top)) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) xs[i] = std::exp(step * static_cast<double>(i));
    xs.front() = 1.0;
    xs.back() = static_cast<double>(x_top);
    return xs;
}

// Piecewise-constant policy over crowd sizes, left-closed cells; or a constant one.
class GrowthPolicy {
public:
    enum class Kind { constant, tabulated };

    GrowthPolicy() = default;

    static GrowthPolicy constant(double growth, Mixture mixture) {
        GrowthPolicy p;
        p.kind_ = Kind::constant;
        p.grid_ = {1.0};
        p.growth_ = {growth};
        p.mixture_ = {mixture};
        return p;
    }

    static GrowthPolicy tabulated(std::vector<double> grid, std::vector<double> growth,
                                  std::vector<Mixture> mixtures) {
        if (grid.empty() || grid.size() != growth.size() || grid.size() != mixtures.size()) {
            throw UsageError("tabulated policy needs matching, non-empty columns");
        }
        GrowthPolicy p;
        p.kind_ = Kind::tabulated;
        p.grid_ = std::move(grid);
        p.growth_ = std::move(growth);
        p.mixture_ = std::move(mixtures);
        return p;
    }

    Kind kind() const noexcept { return kind_; }
    bool is_constant() const noexcept { return kind_ == Kind::constant; }

    std::size_t cell(double x) const noexcept {
        if (kind_ == Kind::constant) return 0;
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
        if (it == grid_.begin()) return 0;
        return static_cast<std::size_t>(it - grid_.begin()) - 1;
    }

    double growth_at(double x) const noexcept { return growth_[cell(x)]; }
    const Mixture& mixture_at(double x) const noexcept { return mixture_[cell(x)]; }

    std::span<const double> grid() const noexcept { return grid_; }
    std::span<const double> growths() const noexcept { return growth_; }
    std::span<const Mixture> mixtures() const noexcept { return mixture_; }

private:
    Kind kind_ = Kind::constant;
    std::vector<double> grid_;
    std::vector<double> growth_;
    std::vector<Mixture> mixture_;
};

struct ValueTable {
    std::vector<double> grid;
    std::vector<double> values;
    double gamma = 1.0;
    double residual = 0.0; // plain Bellman residual of the returned values
    std::size_t sweeps = 0;

    // Linear in x between grid points; below the first point it interpolates
    // towards V(0) = 0 (an empty crowd earns nothing); clamps above x_top.
    double value_at(double x) const noexcept {
        if (x <= 0.0) return 0.0;
        if (x < grid.front()) return values.front() * x / grid.front();
        if (x >= grid.back()) return values.back();
        const auto it = std::upper_bound(grid.begin(), grid.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
        const double w = (x - grid[j]) / (grid[j + 1] - grid[j]);
        return (1.0 - w) * values[j] + w * values[j + 1];
    }
};

struct CaseAbSolution {
    GrowthPolicy policy;
    std::size_t arm = 0;  // the arm played forever
    double growth = 0.0;  // its mean growth
    double slope = 0.0;   // V(x) = slope * x
    double gamma = 1.0;

    double value_at(double x) const noexcept { return slope * x; }
};

struct PlannerSolution {
    GrowthPolicy policy;
    ValueTable values;
    double action_step = 0.0; // spacing of the uniform growth candidates
};

// Lower bound on gamma under which the constant-arm policy is optimal in Cases (a-b).
// Zero whenever the best arm reward is non-negative.
inline double gamma_floor_ab(const RewardEnvelope& env) {
    if (classify_case(env) == CaseLabel::C) {
        throw UsageError("gamma_floor_ab requires a Case (a) or (b) envelope");
    }
    const double r_top = env.r_top();
    bool any_depleting = false;
    double floor = 0.0;
    for (const ArmPoint& p : env.points()) {
        if (p.growth >= 1.0) continue;
        any_depleting = true;
        if (r_top >= 0.0) continue;
        floor = std::max(floor, (r_top - p.reward) / (p.growth * r_top - p.reward));
    }
    if (!any_depleting) throw InfeasibleError("no arm with mean growth below 1");
    return floor;
}

// Closed-form Case (a-b) solution: play forever the envelope arm with mean growth
// below 1 that maximises r / (1 - gamma g).
inline CaseAbSolution solve_case_ab(const RewardEnvelope& env, double gamma = 1.0) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in (0, 1]");
    const double floor = gamma_floor_ab(env);
    if (gamma < floor) throw DomainError("gamma below the Case (a-b) lower bound");
    CaseAbSolution best;
    best.gamma = gamma;
    bool found = false;
    for (const ArmPoint& v : env.vertices()) {
        if (v.growth >= 1.0) continue;
        const double value = v.reward / (1.0 - gamma * v.growth);
        if (!found || value > best.slope) {
            best.slope = value;
            best.arm = v.arm;
            best.growth = v.growth;
            found = true;
        }
    }
    if (!found) throw InfeasibleError("no envelope arm with mean growth below 1");
    best.policy = GrowthPolicy::constant(best.growth, Mixture::single(best.arm));
    return best;
}

// Smallest gamma = 1 - 2^-j (j >= 1) with max_{g >= 1/gamma} R(g) > margin,
// capped at 1 - 2^-20.
inline double choose_gamma_c(const RewardEnvelope& env, double margin = 0.0) {
    if (classify_case(env) != CaseLabel::C) {
        throw UsageError("choose_gamma_c requires a Case (c) envelope");
    }
    for (int j = 1; j <= 20; ++j) {
        const double gamma = 1.0 - std::ldexp(1.0, -j);
        if (env.max_reward_from(1.0 / gamma) > margin) return gamma;
    }
    return 1.0 - std::ldexp(1.0, -20);
}

// choose_gamma_c, raised further (same 1 - 2^-j ladder) until holding the best
// sustainable growth g* at the cap beats playing any depleting vertex forever:
// R(g*) / (1 - gamma) >= r_v / (1 - gamma g_v) for every vertex with g_v < 1.
inline double planning_gamma_c(const RewardEnvelope& env, double margin = 0.0) {
    const double base = choose_gamma_c(env, margin);
    const double r_hold = env.max_reward_from(1.0);
    int j = 1;
    while (1.0 - std::ldexp(1.0, -j) < base) ++j;
    for (; j <= 20; ++j) {
        const double gamma = 1.0 - std::ldexp(1.0, -j);
        bool dominated = true;
        for (const ArmPoint& v : env.vertices()) {
            if (v.growth >= 1.0) break;
            if (r_hold * (1.0 - gamma * v.growth) < v.reward * (1.0 - gamma)) {
                dominated = false;
                break;
            }
        }
        if (dominated) return gamma;
    }
    return 1.0 - std::ldexp(1.0, -20);
}

namespace detail {

// Successor of one (state, action) pair as a linear combination of grid values.
struct Transition {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;
    double w_lo = 0.0;
    double w_hi = 0.0;
    double reward = 0.0; // x R(g)
    double growth = 0.0;
};

// `pos` estimates the fractional grid index of the successor x_i g; it only has to
// be within one cell of the truth.
inline Transition make_transition(std::span<const double> xs, std::size_t i, double g,
                                  double r, double pos) {
    Transition tr;
    tr.growth = g;
    tr.reward = xs[i] * r;
    const std::size_t n = xs.size();
    const double y = xs[i] * g;
    if (y >= xs[n - 1]) {
        tr.lo = tr.hi = static_cast<std::uint32_t>(n - 1);
        tr.w_lo = 1.0;
        return tr;
    }
    if (y < xs[0]) {
        // V(y) = y V(1) / 1 on [0, 1].
        tr.lo = tr.hi = 0;
        tr.w_lo = y / xs[0];
        return tr;
    }
    std::size_t j = pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), n - 2);
    while (j > 0 && xs[j] > y) --j;
    while (j + 2 < n && xs[j + 1] <= y) ++j;
    const double w = (y - xs[j]) / (xs[j + 1] - xs[j]);
    tr.lo = static_cast<std::uint32_t>(j);
    tr.hi = static_cast<std::uint32_t>(j + 1);
    tr.w_lo = 1.0 - w;
    tr.w_hi = w;
    return tr;
}

inline double plain_q(const Transition& tr, std::span<const double> v, double gamma) noexcept {
    return tr.reward + gamma * (tr.w_lo * v[tr.lo] + tr.w_hi * v[tr.hi]);
}

} // namespace detail

// Value iteration on the reduced deterministic MDP
//   V(x) = max_g { x R(g) + gamma V(min(x g, x_top)) }
// over a geometric crowd grid, with V linear in x between grid points. Sweeps are
// Gauss-Seidel in alternating directions, and the weight a state puts on itself
// through interpolation is eliminated exactly; the fixed point is that of the plain
// Bellman operator. The extracted policy breaks ties toward the largest growth.
inline PlannerSolution value_iteration(const RewardEnvelope& env, double gamma,
                                       std::int64_t x_top, const PlannerConfig& config = {},
                                       std::span<const double> warm_start = {}) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in (0, 1]");
    if (config.action_grid < 2 && env.g_bot() != env.g_top()) {
        throw DomainError("action grid needs at least two points");
    }
    const std::vector<double> xs = geometric_grid(x_top, config.grid_size);
    const std::size_t n = xs.size();
    const double g_bot = env.g_bot();
    const double g_top = env.g_top();
    const double action_step =
        g_top > g_bot ? (g_top - g_bot) / static_cast<double>(config.action_grid - 1) : 0.0;

    auto admissible = [&](double g) { return !config.depleting_only || g < 1.0; };

    std::vector<double> base;
    for (const ArmPoint& v : env.vertices()) base.push_back(v.growth);
    if (g_top > g_bot) {
        for (std::size_t k = 0; k < config.action_grid; ++k) {
            base.push_back(k + 1 == config.action_grid
                               ? g_top
                               : g_bot + action_step * static_cast<double>(k));
        }
    }
    if (const double inv = 1.0 / gamma; inv >= g_bot && inv <= g_top) base.push_back(inv);
    std::erase_if(base, [&](double g) { return !admissible(g); });
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    if (base.empty()) throw InfeasibleError("no admissible growth action");

    std::vector<double> base_reward(base.size());
    double r_max = 0.0;
    for (std::size_t c = 0; c < base.size(); ++c) {
        base_reward[c] = env.reward_at(base[c]);
        r_max = std::max(r_max, std::abs(base_reward[c]));
    }

    // Grid index shift of each candidate: x_i g sits near index i + ln(g) / ln-step.
    const double inv_step =
        n > 1 ? static_cast<double>(n - 1) / std::log(static_cast<double>(x_top)) : 0.0;
    std::vector<double> shift(base.size());
    for (std::size_t c = 0; c < base.size(); ++c) {
        shift[c] = base[c] > 0.0 ? std::log(base[c]) * inv_step : -1e300;
    }

    thread_local std::vector<detail::Transition> trans;
    thread_local std::vector<std::size_t> offset;
    trans.clear();
    offset.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        offset[i] = trans.size();
        const auto fi = static_cast<double>(i);
        for (std::size_t c = 0; c < base.size(); ++c) {
            trans.push_back(detail::make_transition(xs, i, base[c], base_reward[c], fi + shift[c]));
        }
        if (config.exact_actions) {
            for (std::size_t j = 0; j < n; ++j) {
                const double g = xs[j] / xs[i];
                if (g < g_bot || g > g_top || !admissible(g)) continue;
                trans.push_back(detail::make_transition(xs, i, g, env.reward_at(g),
                                                        static_cast<double>(j)));
            }
        }
        const double hit = static_cast<double>(x_top) / xs[i];
        if (env.contains(hit) && admissible(hit) &&
            !std::binary_search(base.begin(), base.end(), hit)) {
            const double g = std::clamp(hit, g_bot, g_top);
            trans.push_back(detail::make_transition(xs, i, g, env.reward_at(g),
                                                    static_cast<double>(n - 1)));
        }
    }
    offset[n] = trans.size();

    std::vector<double> v(n, 0.0);
    if (warm_start.size() == n) std::copy(warm_start.begin(), warm_start.end(), v.begin());

    std::size_t max_sweeps = config.max_iterations;
    if (max_sweeps == 0) {
        max_sweeps = PlannerConfig::kMaxSweeps;
        if (gamma < 1.0) {
            const double est = 10.0 * std::ceil(std::log(1.0 / config.tolerance) / (1.0 - gamma));
            if (est < static_cast<double>(max_sweeps)) max_sweeps = static_cast<std::size_t>(est);
        }
    }
    const double threshold = config.tolerance * (1.0 - gamma) * static_cast<double>(x_top) * r_max;

    auto update = [&](std::size_t i) -> double {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = offset[i]; c < offset[i + 1]; ++c) {
            const detail::Transition& tr = trans[c];
            double self = 0.0;
            double other = 0.0;
            if (tr.lo == i) self += tr.w_lo; else other += tr.w_lo * v[tr.lo];
            if (tr.w_hi != 0.0) {
                if (tr.hi == i) self += tr.w_hi; else other += tr.w_hi * v[tr.hi];
            }
            const double num = tr.reward + gamma * other;
            const double denom = 1.0 - gamma * self;
            double q;
            if (denom > 1e-14) {
                q = num / denom;
            } else if (num < 0.0) {
                continue; // staying here forever at a loss
            } else if (num == 0.0) {
                q = 0.0;
            } else {
                throw NumericError("undiscounted problem with unbounded value");
            }
            best = std::max(best, q);
        }
        return best;
    };

    std::size_t sweeps = 0;
    bool converged = false;
    double residual = std::numeric_limits<double>::infinity();
    while (!converged && sweeps < max_sweeps) {
        residual = 0.0;
        double v_abs = 0.0;
        const bool downward = (sweeps % 2 == 0);
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t i = downward ? n - 1 - s : s;
            const double nv = update(i);
            residual = std::max(residual, std::abs(nv - v[i]));
            v[i] = nv;
            v_abs = std::max(v_abs, std::abs(nv));
        }
        ++sweeps;
        if (!std::isfinite(residual)) throw NumericError("value iteration diverged");
        converged = residual <= std::max(threshold, 64.0 * DBL_EPSILON * v_abs);
    }
    if (!converged && config.require_convergence) {
        throw ConvergenceError("value iteration did not converge", residual, sweeps);
    }

    // Greedy policy and plain Bellman residual.
    std::vector<double> growth(n);
    std::vector<Mixture> mixtures(n);
    double bellman = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = offset[i]; c < offset[i + 1]; ++c) {
            best = std::max(best, detail::plain_q(trans[c], v, gamma));
        }
        const double tie = 1e-12 * std::max(1.0, std::abs(best));
        double g_best = -1.0;
        for (std::size_t c = offset[i]; c < offset[i + 1]; ++c) {
            if (detail::plain_q(trans[c], v, gamma) >= best - tie) {
                g_best = std::max(g_best, trans[c].growth);
            }
        }
        growth[i] = g_best;
        mixtures[i] = env.action_at(g_best);
        bellman = std::max(bellman, std::abs(best - v[i]));
    }

    PlannerSolution sol;
    sol.values.grid = xs;
    sol.values.values = std::move(v);
    sol.values.gamma = gamma;
    sol.values.residual = bellman;
    sol.values.sweeps = sweeps;
    sol.policy = GrowthPolicy::tabulated(xs, std::move(growth), std::move(mixtures));
    sol.action_step = action_step;
    return sol;
}

// Case (c): solve the reduced MDP numerically. The gamma condition of the
// decreasing-policy property is the caller's business (see planning_gamma_c).
inline PlannerSolution solve_case_c(const RewardEnvelope& env, double gamma, std::int64_t x_top,
                                    const PlannerConfig& config = {},
                                    std::span<const double> warm_start = {}) {
    if (classify_case(env) != CaseLabel::C) {
        throw UsageError("solve_case_c requires a Case (c) envelope");
    }
    return value_iteration(env, gamma, x_top, config, warm_start);
}

// Discounted return of a policy in the reduced MDP over a fixed number of steps.
inline double policy_value_roemdp(const GrowthPolicy& policy, const RewardEnvelope& env,
                                  double gamma, double x0, std::int64_t x_top,
                                  std::size_t horizon) {
    double x = x0;
    double discount = 1.0;
    double total = 0.0;
    for (std::size_t t = 0; t < horizon && x > 0.0; ++t) {
        const double g = policy.growth_at(x);
        total += discount * x * env.reward_at(g);
        x = std::min(x * g, static_cast<double>(x_top));
        discount *= gamma;
    }
    return total;
}

// Same, truncated once gamma^t x_top max|R| < tolerance; for gamma == 1 once
// x_t max|R| < tolerance (the crowd has died out).
inline double policy_value_roemdp(const GrowthPolicy& policy, const RewardEnvelope& env,
                                  double gamma, double x0, std::int64_t x_top, double tolerance) {
    double r_max = 0.0;
    for (const ArmPoint& v : env.vertices()) r_max = std::max(r_max, std::abs(v.reward));
    if (r_max == 0.0) return 0.0;
    constexpr std::size_t kMaxSteps = 100'000'000;
    double x = x0;
    double discount = 1.0;
    double total = 0.0;
    for (std::size_t t = 0; t < kMaxSteps; ++t) {
        const double scale = gamma < 1.0 ? static_cast<double>(x_top) : x;
        if (discount * scale * r_max < tolerance) return total;
        const double g = policy.growth_at(x);
        total += discount * x * env.reward_at(g);
        x = std::min(x * g, static_cast<double>(x_top));
        discount *= gamma;
    }
    throw NumericError("policy value does not converge");
}

// Rows: x, growth, arm_id_1, weight_1, arm_id_2, weight_2, value. Missing second
// arm is written as -1 with weight 0.
inline void write_policy_csv(std::ostream& out, const GrowthPolicy& policy,
                             std::span<const double> xs,
                             const std::function<double(double)>& value) {
    out << "x,growth,arm_id_1,weight_1,arm_id_2,weight_2,value\n";
    char buf[256];
    for (double x : xs) {
        const Mixture& m = policy.mixture_at(x);
        const long long a2 = m.size > 1 ? static_cast<long long>(m.parts[1].arm) : -1;
        const double w2 = m.size > 1 ? m.parts[1].weight : 0.0;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g,%lld,%.17g,%.17g\n", x,
                      policy.growth_at(x), m.parts[0].arm, m.parts[0].weight, a2, w2, value(x));
        out << buf;
    }
}

} // namespace crowdbandit
