#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/errors.hpp"
#include "crowdbandit/random.hpp"

namespace crowdbandit {

struct SimState {
    std::size_t t = 0;
    std::int64_t crowd = 0;
    bool terminated = false;
};

// Sufficient statistics of the pulls made on one arm during one step.
struct ArmStepStats {
    std::int64_t pulls = 0;
    std::int64_t sum_growth = 0;
    double sum_reward = 0.0;
};

struct Observation {
    std::uint32_t arm = 0;
    std::int64_t growth = 0;
    double reward = 0.0;
};

struct StepResult {
    SimState next;
    double batch_reward = 0.0;
    std::span<const ArmStepStats> arms; // valid until the next step
    std::span<const Observation> observations; // empty unless retained
};

// Flat per-step record of a rollout. Steps after extinction are kept as crowd 0,
// reward 0 so that traces of one problem always have `horizon` rows.
struct SimTrace {
    std::size_t horizon = 0;
    std::size_t num_arms = 0;
    std::vector<std::int64_t> crowd;   // crowd at the start of step t
    std::vector<double> reward;        // batch reward of step t
    std::vector<std::int64_t> pulls;   // t * num_arms + k
    std::vector<Observation> observations;
    std::vector<std::size_t> observation_offsets; // t -> first observation, size horizon + 1
    std::int64_t final_crowd = 0;

    void reset(std::size_t T, std::size_t K, bool keep_observations) {
        horizon = T;
        num_arms = K;
        crowd.assign(T, 0);
        reward.assign(T, 0.0);
        pulls.assign(T * K, 0);
        observations.clear();
        observation_offsets.clear();
        if (keep_observations) observation_offsets.assign(T + 1, 0);
        final_crowd = 0;
    }

    std::int64_t pulls_at(std::size_t t, std::size_t k) const { return pulls[t * num_arms + k]; }
    bool depleted() const noexcept { return final_crowd == 0; }
    double total_reward() const noexcept {
        double s = 0.0;
        for (double r : reward) s += r;
        return s;
    }
};

// Largest-remainder rounding of `weights * crowd`; remainder ties go to the lowest index.
inline void allocate_pulls(std::span<const double> weights, std::int64_t crowd,
                           std::span<std::int64_t> counts) {
    if (crowd < 0) throw UsageError("crowd must be non-negative");
    if (counts.size() != weights.size()) throw UsageError("counts and weights differ in size");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw UsageError("mixture weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("mixture weights must sum to 1");
    std::int64_t assigned = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        counts[k] = static_cast<std::int64_t>(std::floor(weights[k] * static_cast<double>(crowd)));
        assigned += counts[k];
    }
    while (assigned < crowd) {
        std::size_t best = 0;
        double best_rem = -1.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            const double rem = weights[k] * static_cast<double>(crowd) - static_cast<double>(counts[k]);
            if (rem > best_rem) {
                best_rem = rem;
                best = k;
            }
        }
        ++counts[best];
        ++assigned;
    }
    // Floating error can overshoot by one on near-integral products.
    while (assigned > crowd) {
        std::size_t worst = 0;
        double worst_rem = 2.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (counts[k] == 0) continue;
            const double rem = weights[k] * static_cast<double>(crowd) - static_cast<double>(counts[k]);
            if (rem < worst_rem) {
                worst_rem = rem;
                worst = k;
            }
        }
        --counts[worst];
        --assigned;
    }
}

inline std::vector<std::int64_t> allocate_pulls(std::span<const double> weights, std::int64_t crowd) {
    std::vector<std::int64_t> counts(weights.size(), 0);
    allocate_pulls(weights, crowd, counts);
    return counts;
}

// Mixture over at most two arms spread onto a full K-vector of counts.
inline void allocate_pulls(const Mixture& mixture, std::int64_t crowd,
                           std::span<std::int64_t> counts) {
    std::fill(counts.begin(), counts.end(), 0);
    if (mixture.size == 1) {
        counts[mixture.parts[0].arm] = crowd;
        return;
    }
    // Order by arm index so the remainder tie-break refers to arms.
    ArmWeight a = mixture.parts[0];
    ArmWeight b = mixture.parts[1];
    if (a.arm > b.arm) std::swap(a, b);
    const double w[2] = {a.weight, b.weight};
    std::int64_t c[2] = {0, 0};
    allocate_pulls(std::span<const double>(w, 2), crowd, std::span<std::int64_t>(c, 2));
    counts[a.arm] += c[0];
    counts[b.arm] += c[1];
}

// Stateless stepping engine with reusable scratch space.
class Simulator {
public:
    explicit Simulator(const ProblemInstance& problem) : problem_(&problem) {
        stats_.resize(problem.arms.size());
    }

    const ProblemInstance& problem() const noexcept { return *problem_; }

    void keep_observations(bool keep) noexcept { keep_obs_ = keep; }

    // Draws one (growth, reward) per pull. Pull j on arm k at step t uses the j-th
    // draw of the (k, t) streams, so the outcome does not depend on pull order.
    StepResult step(const SimState& state, std::span<const std::int64_t> counts,
                    const RunStreams& streams) {
        if (state.terminated || state.crowd == 0) throw UsageError("cannot step a terminated state");
        if (counts.size() != problem_->arms.size()) throw ContractViolation("wrong number of counts");
        std::int64_t total = 0;
        for (std::int64_t c : counts) {
            if (c < 0) throw ContractViolation("negative pull count");
            total += c;
        }
        if (total != state.crowd) throw ContractViolation("pull counts do not sum to the crowd");
        observations_.clear();
        std::int64_t growth = 0;
        double reward = 0.0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            ArmStepStats& s = stats_[k];
            s = {};
            if (counts[k] == 0) continue;
            const ArmModel& arm = problem_->arms[k];
            RandomStream gs = streams.growth(k, state.t);
            RandomStream rs = streams.reward(k, state.t);
            for (std::int64_t j = 0; j < counts[k]; ++j) {
                const std::int64_t g = sample_growth(arm, gs);
                const double r = sample_reward(arm, rs);
                s.sum_growth += g;
                s.sum_reward += r;
                if (keep_obs_) observations_.push_back({static_cast<std::uint32_t>(k), g, r});
            }
            s.pulls = counts[k];
            growth += s.sum_growth;
            reward += s.sum_reward;
        }
        return finish(state, growth, reward);
    }

    // Per-pull stepping for agents that learn inside a step.
    template <class Select, class Observe>
    StepResult step_pulls(const SimState& state, const RunStreams& streams, Select&& select,
                          Observe&& observe) {
        if (state.terminated || state.crowd == 0) throw UsageError("cannot step a terminated state");
        const std::size_t K = problem_->arms.size();
        std::fill(stats_.begin(), stats_.end(), ArmStepStats{});
        observations_.clear();
        gs_.clear();
        rs_.clear();
        for (std::size_t k = 0; k < K; ++k) {
            gs_.push_back(streams.growth(k, state.t));
            rs_.push_back(streams.reward(k, state.t));
        }
        std::int64_t growth = 0;
        double reward = 0.0;
        for (std::int64_t i = 0; i < state.crowd; ++i) {
            const std::size_t k = select();
            if (k >= K) throw ContractViolation("agent selected a non-existent arm");
            const ArmModel& arm = problem_->arms[k];
            const Observation obs{static_cast<std::uint32_t>(k), sample_growth(arm, gs_[k]),
                                  sample_reward(arm, rs_[k])};
            ArmStepStats& s = stats_[k];
            ++s.pulls;
            s.sum_growth += obs.growth;
            s.sum_reward += obs.reward;
            growth += obs.growth;
            reward += obs.reward;
            if (keep_obs_) observations_.push_back(obs);
            observe(obs);
        }
        return finish(state, growth, reward);
    }

private:
    StepResult finish(const SimState& state, std::int64_t growth, double reward) {
        StepResult out;
        out.next.t = state.t + 1;
        out.next.crowd = std::min(growth, problem_->x_top);
        out.next.terminated = out.next.crowd == 0;
        out.batch_reward = reward;
        out.arms = stats_;
        out.observations = observations_;
        return out;
    }

    const ProblemInstance* problem_;
    bool keep_obs_ = false;
    std::vector<ArmStepStats> stats_;
    std::vector<Observation> observations_;
    std::vector<RandomStream> gs_;
    std::vector<RandomStream> rs_;
};

// Agent that fixes the whole allocation of a step at once.
template <class A>
concept BatchAgent = requires(A a, const SimState& s, RandomStream& rng,
                              std::span<std::int64_t> counts, const StepResult& r) {
    a.decide(s, rng, counts);
    a.observe(r);
};

// Agent that picks subjects one at a time and sees each outcome immediately.
template <class A>
concept PullAgent = requires(A a, const SimState& s, RandomStream& rng, const Observation& o,
                             const StepResult& r) {
    a.begin_step(s);
    { a.select(s, rng) } -> std::convertible_to<std::size_t>;
    a.observe_pull(o);
    a.end_step(r);
};

struct RolloutOptions {
    bool keep_observations = false;
};

template <class Agent>
    requires BatchAgent<Agent> || PullAgent<Agent>
void rollout(Agent& agent, const ProblemInstance& problem, const RunStreams& streams,
             SimTrace& trace, const RolloutOptions& options = {}) {
    const auto T = static_cast<std::size_t>(problem.horizon);
    const std::size_t K = problem.arms.size();
    trace.reset(T, K, options.keep_observations);
    Simulator sim(problem);
    sim.keep_observations(options.keep_observations);
    std::vector<std::int64_t> counts(K, 0);
    SimState state{0, problem.x0, false};
    for (std::size_t t = 0; t < T; ++t) {
        state.t = t;
        trace.crowd[t] = state.crowd;
        if (options.keep_observations) trace.observation_offsets[t] = trace.observations.size();
        if (state.terminated) continue;
        RandomStream rng = streams.agent(t);
        StepResult res;
        if constexpr (BatchAgent<Agent>) {
            std::fill(counts.begin(), counts.end(), 0);
            agent.decide(state, rng, std::span<std::int64_t>(counts));
            res = sim.step(state, counts, streams);
            agent.observe(res);
        } else {
            agent.begin_step(state);
            res = sim.step_pulls(
                state, streams, [&] { return static_cast<std::size_t>(agent.select(state, rng)); },
                [&](const Observation& o) { agent.observe_pull(o); });
            agent.end_step(res);
        }
        for (std::size_t k = 0; k < K; ++k) trace.pulls[t * K + k] = res.arms[k].pulls;
        trace.reward[t] = res.batch_reward;
        if (options.keep_observations) {
            trace.observations.insert(trace.observations.end(), res.observations.begin(),
                                      res.observations.end());
        }
        state = res.next;
    }
    if (options.keep_observations) trace.observation_offsets[T] = trace.observations.size();
    trace.final_crowd = state.crowd;
}

template <class Agent>
SimTrace rollout(Agent& agent, const ProblemInstance& problem, const RunStreams& streams,
                 const RolloutOptions& options = {}) {
    SimTrace trace;
    rollout(agent, problem, streams, trace, options);
    return trace;
}

// Rows: run_id, t, crowd, reward, pulls_0 .. pulls_{K-1}.
inline void write_trace_header(std::ostream& out, std::size_t num_arms) {
    out << "run_id,t,crowd,reward";
    for (std::size_t k = 0; k < num_arms; ++k) out << ",pulls_" << k;
    out << '\n';
}

inline void write_trace_rows(std::ostream& out, std::size_t run_id, const SimTrace& trace) {
    char buf[64];
    for (std::size_t t = 0; t < trace.horizon; ++t) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%lld,%.17g", run_id, t,
                      static_cast<long long>(trace.crowd[t]), trace.reward[t]);
        out << buf;
        for (std::size_t k = 0; k < trace.num_arms; ++k) out << ',' << trace.pulls_at(t, k);
        out << '\n';
    }
}

} // namespace crowdbandit
