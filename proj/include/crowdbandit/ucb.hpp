#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/errors.hpp"
#include "crowdbandit/planner.hpp"
#include "crowdbandit/random.hpp"
#include "crowdbandit/simulator.hpp"

namespace crowdbandit {

enum class UcbMode { online, batched };

inline std::string to_string(UcbMode m) { return m == UcbMode::online ? "online" : "batched"; }

inline PlannerConfig default_ucb_planner() {
    PlannerConfig cfg;
    cfg.grid_size = 128;
    cfg.action_grid = 32;
    cfg.exact_actions = false; // re-solved often; the uniform grid is enough
    cfg.tolerance = 1e-6;
    cfg.max_iterations = 5000;
    cfg.require_convergence = false;
    return cfg;
}

struct UcbConfig {
    UcbMode mode = UcbMode::batched;
    double xi = 1.0;
    double g_cap = 50.0; // bound on a single growth draw
    double r_lo = -2.0;
    double r_hi = 2.0;
    // Re-solve the optimistic planner before every subject instead of once per batch.
    bool strict = false;
    double gamma_margin = 0.0;
    PlannerConfig planner = default_ucb_planner();
};

// ξ = (1/√2) max(g_cap, reward_range) √ln(2/δ).
inline double xi_from_delta(double delta, double g_cap, double reward_range) {
    if (!(delta > 0.0 && delta <= 2.0)) throw DomainError("delta must lie in (0, 2]");
    return std::max(g_cap, reward_range) * std::sqrt(std::log(2.0 / delta)) / std::sqrt(2.0);
}

inline double confidence_radius(std::int64_t n, double xi) {
    if (n < 1) throw DomainError("confidence radius needs at least one sample");
    return xi / std::sqrt(static_cast<double>(n));
}

struct ArmHistory {
    std::vector<std::int64_t> n;
    std::vector<double> sum_growth;
    std::vector<double> sum_reward;
    std::vector<std::int64_t> provisional; // s_k, batched mode only

    explicit ArmHistory(std::size_t K = 0)
        : n(K, 0), sum_growth(K, 0.0), sum_reward(K, 0.0), provisional(K, 0) {}

    std::size_t size() const noexcept { return n.size(); }

    void add(std::size_t k, double growth, double reward) {
        ++n[k];
        sum_growth[k] += growth;
        sum_reward[k] += reward;
    }
};

struct OptimisticArm {
    double ci = 0.0;
    double g_plus = 0.0;
    double g_minus = 0.0;
    double r_plus = 0.0;
};

struct OptimisticEstimates {
    std::vector<OptimisticArm> arms;
    double xi = 0.0;
};

// Upper/lower confidence values for one arm. An arm never observed gets
// (g_cap, 0, r_hi). In batched mode an arm already selected in the current batch
// but never observed (n = 0 < s) is centred on the middle of the admissible box
// with radius ξ/√s, so that provisional selections still shrink its optimism.
inline OptimisticArm optimistic_arm(std::int64_t n, double sum_growth, double sum_reward,
                                    std::int64_t s, double xi, double g_cap, double r_lo,
                                    double r_hi) {
    OptimisticArm a;
    if (n == 0 && s == 0) {
        a.ci = std::numeric_limits<double>::infinity();
        a.g_plus = g_cap;
        a.g_minus = 0.0;
        a.r_plus = r_hi;
        return a;
    }
    a.ci = xi / std::sqrt(static_cast<double>(n + s));
    const double mg = n > 0 ? sum_growth / static_cast<double>(n) : 0.5 * g_cap;
    const double mr = n > 0 ? sum_reward / static_cast<double>(n) : 0.5 * (r_lo + r_hi);
    a.g_plus = std::clamp(mg + a.ci, 0.0, g_cap);
    a.g_minus = std::max(mg - a.ci, 0.0);
    a.r_plus = std::min(mr + a.ci, r_hi);
    return a;
}

inline OptimisticEstimates optimistic_estimates(const ArmHistory& hist, double xi, double g_cap,
                                                double r_hi, bool use_provisional,
                                                double r_lo = -2.0) {
    OptimisticEstimates est;
    est.xi = xi;
    est.arms.reserve(hist.size());
    for (std::size_t k = 0; k < hist.size(); ++k) {
        est.arms.push_back(optimistic_arm(hist.n[k], hist.sum_growth[k], hist.sum_reward[k],
                                          use_provisional ? hist.provisional[k] : 0, xi, g_cap,
                                          r_lo, r_hi));
    }
    return est;
}

// Decided-branch choice: g^o = g^+ when r^+ >= 0 else g^-, then
// argmax over {g^o < 1} of r^+ / (1 - g^o); argmin g^o when that set is empty.
inline std::size_t decided_arm(std::span<const OptimisticArm> arms) {
    std::size_t best = arms.size();
    double best_value = -std::numeric_limits<double>::infinity();
    std::size_t fallback = 0;
    double fallback_g = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < arms.size(); ++k) {
        const double go = arms[k].r_plus >= 0.0 ? arms[k].g_plus : arms[k].g_minus;
        if (go < fallback_g) {
            fallback_g = go;
            fallback = k;
        }
        if (go >= 1.0) continue;
        const double v = arms[k].r_plus / (1.0 - go);
        if (best == arms.size() || v > best_value) {
            best = k;
            best_value = v;
        }
    }
    return best == arms.size() ? fallback : best;
}

// Shared decision engine of both algorithms. Keeps the optimistic arm points in
// envelope order and updates them one arm at a time.
class UcbCore {
public:
    UcbCore(std::size_t num_arms, std::int64_t x_top, const UcbConfig& config)
        : config_(config), x_top_(x_top), hist_(num_arms), est_(num_arms), pos_(num_arms) {
        if (num_arms == 0) throw DomainError("UCB needs at least one arm");
        if (!(config.xi >= 0.0)) throw DomainError("xi must be non-negative");
        if (!(config.g_cap > 0.0) || !(config.r_hi >= config.r_lo)) {
            throw DomainError("malformed UCB bounds");
        }
        points_.resize(num_arms);
        for (std::size_t k = 0; k < num_arms; ++k) {
            est_[k] = estimate(k);
            points_[k] = {est_[k].g_plus, est_[k].r_plus, k};
        }
        std::sort(points_.begin(), points_.end(), envelope_order);
        for (std::size_t i = 0; i < num_arms; ++i) pos_[points_[i].arm] = i;
        env_.rebuild_sorted(points_);
    }

    const UcbConfig& config() const noexcept { return config_; }
    const ArmHistory& history() const noexcept { return hist_; }
    std::span<const OptimisticArm> estimates() const noexcept { return est_; }
    const RewardEnvelope& envelope() const noexcept { return env_; }
    std::size_t solves() const noexcept { return solves_; }

    // ∀g ≥ 1: R+(g) ≤ 0 on the current optimistic envelope.
    bool decided() const noexcept { return !(env_.max_reward_from(1.0) > 0.0); }

    // Start of a time step: provisional counts reset, cached plan dropped.
    void begin_batch() {
        for (std::size_t k = 0; k < hist_.size(); ++k) {
            if (hist_.provisional[k] != 0) {
                hist_.provisional[k] = 0;
                refresh(k);
            }
        }
        policy_valid_ = false;
    }

    // One subject: the arm both modes select for a crowd of size x.
    std::size_t decide(std::int64_t crowd, RandomStream& rng) {
        const double u = rng.uniform();
        const bool now_decided = decided();
        if (now_decided) {
            last_decided_ = true;
            return decided_arm(est_);
        }
        if (last_decided_) policy_valid_ = false;
        last_decided_ = false;
        double g;
        if (crowd >= x_top_) {
            g = env_.argmax_reward_from(1.0);
        } else {
            if (!policy_valid_ || config_.strict) solve();
            g = policy_.growth_at(static_cast<double>(crowd));
        }
        g = std::clamp(g, env_.g_bot(), env_.g_top());
        return env_.action_at(g).sample(u);
    }

    void add_provisional(std::size_t k) {
        ++hist_.provisional[k];
        refresh(k);
    }

    void record(std::size_t k, double growth, double reward) {
        hist_.add(k, growth, reward);
        refresh(k);
    }

    void record(std::span<const ArmStepStats> stats) {
        for (std::size_t k = 0; k < stats.size(); ++k) {
            if (stats[k].pulls == 0) continue;
            hist_.n[k] += stats[k].pulls;
            hist_.sum_growth[k] += static_cast<double>(stats[k].sum_growth);
            hist_.sum_reward[k] += stats[k].sum_reward;
            refresh(k);
        }
    }

private:
    OptimisticArm estimate(std::size_t k) const {
        return optimistic_arm(hist_.n[k], hist_.sum_growth[k], hist_.sum_reward[k],
                              config_.mode == UcbMode::batched ? hist_.provisional[k] : 0,
                              config_.xi, config_.g_cap, config_.r_lo, config_.r_hi);
    }

    // Recompute arm k's point and move it to its sorted slot.
    void refresh(std::size_t k) {
        est_[k] = estimate(k);
        std::size_t i = pos_[k];
        points_[i] = {est_[k].g_plus, est_[k].r_plus, k};
        while (i > 0 && envelope_order(points_[i], points_[i - 1])) {
            std::swap(points_[i], points_[i - 1]);
            pos_[points_[i].arm] = i;
            --i;
        }
        while (i + 1 < points_.size() && envelope_order(points_[i + 1], points_[i])) {
            std::swap(points_[i], points_[i + 1]);
            pos_[points_[i].arm] = i;
            ++i;
        }
        pos_[k] = i;
        env_.rebuild_sorted(points_);
    }

    void solve() {
        const double gamma = planning_gamma_c(env_, config_.gamma_margin);
        PlannerSolution sol = value_iteration(env_, gamma, x_top_, config_.planner);
        policy_ = std::move(sol.policy);
        policy_valid_ = true;
        ++solves_;
    }

    UcbConfig config_;
    std::int64_t x_top_;
    ArmHistory hist_;
    std::vector<OptimisticArm> est_;
    std::vector<std::size_t> pos_;
    std::vector<ArmPoint> points_;
    RewardEnvelope env_;
    GrowthPolicy policy_;
    bool policy_valid_ = false;
    bool last_decided_ = false;
    std::size_t solves_ = 0;
};

struct UcbRunSummary {
    std::int64_t final_crowd = 0;
    double total_reward = 0.0;
    std::optional<std::size_t> decided_at; // first step with a decided-branch choice
    bool decided_at_end = false;
};

// Online mode: one subject at a time, history updated after every pull.
class OnlineUcbAgent {
public:
    OnlineUcbAgent(const ProblemInstance& problem, UcbConfig config)
        : core_(problem.arms.size(), problem.x_top, with_mode(config, UcbMode::online)) {}

    void begin_step(const SimState& s) {
        t_ = s.t;
        core_.begin_batch();
    }
    std::size_t select(const SimState& s, RandomStream& rng) {
        const std::size_t k = core_.decide(s.crowd, rng);
        note_branch();
        return k;
    }
    void observe_pull(const Observation& o) {
        core_.record(o.arm, static_cast<double>(o.growth), o.reward);
    }
    void end_step(const StepResult&) {}

    const UcbCore& core() const noexcept { return core_; }
    std::optional<std::size_t> decided_at() const noexcept { return decided_at_; }

private:
    static UcbConfig with_mode(UcbConfig c, UcbMode m) {
        c.mode = m;
        return c;
    }
    void note_branch() {
        if (!decided_at_ && core_.decided()) decided_at_ = t_;
    }

    UcbCore core_;
    std::size_t t_ = 0;
    std::optional<std::size_t> decided_at_;
};

// Batched mode: the whole crowd is assigned before any outcome is seen; the
// provisional counts s_k shrink the radii within the batch.
class BatchedUcbAgent {
public:
    BatchedUcbAgent(const ProblemInstance& problem, UcbConfig config)
        : core_(problem.arms.size(), problem.x_top, with_mode(config, UcbMode::batched)) {}

    void decide(const SimState& s, RandomStream& rng, std::span<std::int64_t> counts) {
        core_.begin_batch();
        std::fill(counts.begin(), counts.end(), 0);
        for (std::int64_t i = 0; i < s.crowd; ++i) {
            const bool was_decided = core_.decided();
            const std::size_t k = core_.decide(s.crowd, rng);
            if (was_decided && !decided_at_) decided_at_ = s.t;
            ++counts[k];
            core_.add_provisional(k);
        }
    }
    void observe(const StepResult& r) {
        core_.begin_batch();
        core_.record(r.arms);
    }

    const UcbCore& core() const noexcept { return core_; }
    std::optional<std::size_t> decided_at() const noexcept { return decided_at_; }

private:
    static UcbConfig with_mode(UcbConfig c, UcbMode m) {
        c.mode = m;
        return c;
    }

    UcbCore core_;
    std::optional<std::size_t> decided_at_;
};

template <class Agent>
UcbRunSummary summarize_run(const Agent& agent, const SimTrace& trace) {
    UcbRunSummary s;
    s.final_crowd = trace.final_crowd;
    s.total_reward = trace.total_reward();
    s.decided_at = agent.decided_at();
    s.decided_at_end = agent.core().decided();
    return s;
}

// Full rollout of one algorithm run.
inline UcbRunSummary run_ucb(const ProblemInstance& problem, const UcbConfig& config,
                             const RunStreams& streams, SimTrace& trace,
                             const RolloutOptions& options = {}) {
    if (config.mode == UcbMode::online) {
        OnlineUcbAgent agent(problem, config);
        rollout(agent, problem, streams, trace, options);
        return summarize_run(agent, trace);
    }
    BatchedUcbAgent agent(problem, config);
    rollout(agent, problem, streams, trace, options);
    return summarize_run(agent, trace);
}

inline SimTrace run_ucb(const ProblemInstance& problem, const UcbConfig& config,
                        const RunStreams& streams) {
    SimTrace trace;
    run_ucb(problem, config, streams, trace);
    return trace;
}

} // namespace crowdbandit
