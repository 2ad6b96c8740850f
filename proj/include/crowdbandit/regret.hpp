#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/errors.hpp"
#include "crowdbandit/planner.hpp"
#include "crowdbandit/simulator.hpp"

namespace crowdbandit {

struct OracleSolution {
    CaseLabel case_label = CaseLabel::A;
    double gamma = 1.0;
    GrowthPolicy policy;
    std::optional<CaseAbSolution> closed_form;
    std::optional<PlannerSolution> numeric;
};

// π#: the optimal ROeMDP policy for the true parameters. Cases (a-b) use the closed
// form with γ = 1; Case (c) runs value iteration at planning_gamma_c.
inline OracleSolution solve_oracle(const RewardEnvelope& env, std::int64_t x_top,
                                   const PlannerConfig& config = {}) {
    OracleSolution out;
    out.case_label = classify_case(env);
    if (out.case_label == CaseLabel::C) {
        out.gamma = planning_gamma_c(env);
        out.numeric = solve_case_c(env, out.gamma, x_top, config);
        out.policy = out.numeric->policy;
    } else {
        out.gamma = 1.0;
        out.closed_form = solve_case_ab(env, 1.0);
        out.policy = out.closed_form->policy;
    }
    return out;
}

inline GrowthPolicy oracle_policy(const ProblemInstance& problem, const PlannerConfig& config = {}) {
    return solve_oracle(build_envelope(problem.arms), problem.x_top, config).policy;
}

// Plays a fixed growth policy through its Ψ mixtures.
class PolicyAgent {
public:
    explicit PolicyAgent(const GrowthPolicy& policy) : policy_(&policy) {}

    void decide(const SimState& s, RandomStream&, std::span<std::int64_t> counts) {
        allocate_pulls(policy_->mixture_at(static_cast<double>(s.crowd)), s.crowd, counts);
    }
    void observe(const StepResult&) {}

private:
    const GrowthPolicy* policy_;
};

struct RegretPoint {
    double oracle_mean = 0.0;
    double alg_mean = 0.0;
    double regret = 0.0;
    double std_error = 0.0;
};

struct RegretSeries {
    std::vector<RegretPoint> points;
    std::size_t oracle_runs = 0;
    std::size_t alg_runs = 0;

    std::size_t horizon() const noexcept { return points.size(); }
};

// Running per-step sums of batch rewards across runs, so traces need not be kept.
class RewardAccumulator {
public:
    explicit RewardAccumulator(std::size_t horizon = 0) : sum_(horizon, 0.0), sq_(horizon, 0.0) {}

    void add(const SimTrace& trace) {
        if (trace.horizon != sum_.size()) throw UsageError("trace horizon mismatch");
        for (std::size_t t = 0; t < sum_.size(); ++t) {
            sum_[t] += trace.reward[t];
            sq_[t] += trace.reward[t] * trace.reward[t];
        }
        ++runs_;
    }

    void merge(const RewardAccumulator& other) {
        if (other.sum_.size() != sum_.size()) throw UsageError("trace horizon mismatch");
        for (std::size_t t = 0; t < sum_.size(); ++t) {
            sum_[t] += other.sum_[t];
            sq_[t] += other.sq_[t];
        }
        runs_ += other.runs_;
    }

    std::size_t runs() const noexcept { return runs_; }
    std::size_t horizon() const noexcept { return sum_.size(); }
    double mean(std::size_t t) const noexcept { return sum_[t] / static_cast<double>(runs_); }
    // Unbiased sample variance; 0 with a single run.
    double variance(std::size_t t) const noexcept {
        if (runs_ < 2) return 0.0;
        const double n = static_cast<double>(runs_);
        const double m = sum_[t] / n;
        return std::max(0.0, (sq_[t] - n * m * m) / (n - 1.0));
    }

private:
    std::vector<double> sum_;
    std::vector<double> sq_;
    std::size_t runs_ = 0;
};

inline RegretSeries regret_series(const RewardAccumulator& oracle, const RewardAccumulator& alg) {
    if (oracle.runs() == 0 || alg.runs() == 0) throw UsageError("regret needs runs on both sides");
    if (oracle.horizon() != alg.horizon()) throw UsageError("mismatched horizons");
    RegretSeries s;
    s.oracle_runs = oracle.runs();
    s.alg_runs = alg.runs();
    s.points.resize(oracle.horizon());
    for (std::size_t t = 0; t < oracle.horizon(); ++t) {
        RegretPoint& p = s.points[t];
        p.oracle_mean = oracle.mean(t);
        p.alg_mean = alg.mean(t);
        p.regret = p.oracle_mean - p.alg_mean;
        p.std_error = std::sqrt(oracle.variance(t) / static_cast<double>(oracle.runs()) +
                              alg.variance(t) / static_cast<double>(alg.runs()));
    }
    return s;
}

inline RegretSeries regret_series(std::span<const SimTrace> oracle, std::span<const SimTrace> alg) {
    if (oracle.empty() || alg.empty()) throw UsageError("regret needs runs on both sides");
    RewardAccumulator a(oracle.front().horizon);
    RewardAccumulator b(alg.front().horizon);
    if (a.horizon() != b.horizon()) throw UsageError("mismatched horizons");
    for (const SimTrace& tr : oracle) a.add(tr);
    for (const SimTrace& tr : alg) b.add(tr);
    return regret_series(a, b);
}

// ρ_ins(t) with its standard error.
inline RegretPoint instantaneous_regret(std::span<const SimTrace> oracle,
                                        std::span<const SimTrace> alg, std::size_t t) {
    const RegretSeries s = regret_series(oracle, alg);
    if (t >= s.horizon()) throw UsageError("time step beyond the horizon");
    return s.points[t];
}

// Σ_t γ^t ρ_ins(t).
inline double cumulative_regret(const RegretSeries& series, double gamma = 1.0) {
    double total = 0.0;
    double discount = 1.0;
    for (const RegretPoint& p : series.points) {
        total += discount * p.regret;
        discount *= gamma;
    }
    return total;
}

inline void write_regret_csv(std::ostream& out, const RegretSeries& s) {
    out << "t,oracle_mean,alg_mean,regret,stderr\n";
    char buf[160];
    for (std::size_t t = 0; t < s.points.size(); ++t) {
        const RegretPoint& p = s.points[t];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", t, p.oracle_mean,
                      p.alg_mean, p.regret, p.std_error);
        out << buf;
    }
}

} // namespace crowdbandit
