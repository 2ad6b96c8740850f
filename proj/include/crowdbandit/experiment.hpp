#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/errors.hpp"
#include "crowdbandit/planner.hpp"
#include "crowdbandit/problem_io.hpp"
#include "crowdbandit/random.hpp"
#include "crowdbandit/regret.hpp"
#include "crowdbandit/simulator.hpp"
#include "crowdbandit/ucb.hpp"

namespace crowdbandit {

// ---- small utilities -------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Runs body(i) for i in [0, n) on `workers` threads. Results must be written by
// index; the first exception (lowest index) is rethrown after all threads join.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        loop();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
        for (std::thread& th : pool) th.join();
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Spearman rank correlation with average ranks for ties. NaN if either side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw UsageError("spearman needs equal-length samples");
    const std::size_t n = x.size();
    auto ranks = [n](std::span<const double> v) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    const double mean = 0.5 * static_cast<double>(n + 1);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

// ---- configuration ---------------------------------------------------------

struct ExperimentConfig {
    std::uint64_t seed = 0;
    // Generated problems unless problem_files is non-empty.
    std::size_t num_problems = 50;
    std::size_t num_arms = 20;
    std::vector<std::string> problem_files;
    std::int64_t x_top = 1000;
    std::int64_t x0 = 100;
    std::int64_t horizon = 300;
    double gamma = 1.0;
    std::int64_t growth_cap = 50;
    std::size_t runs = 200;
    std::vector<double> xis{1.0, 2.0, 4.0, 8.0};
    std::optional<double> delta; // replaces xis by a single ξ from the δ formula
    std::vector<UcbMode> modes{UcbMode::batched};
    bool strict = false;
    PlannerConfig oracle_planner{};
    PlannerConfig ucb_planner = default_ucb_planner();
    std::size_t trace_runs = 0; // traces written for the first runs of each side
    // Not part of the hash.
    std::size_t workers = 1;
    std::filesystem::path out_dir;

    void validate() const {
        if (runs == 0) throw ConfigError("--runs must be at least 1");
        if (problem_files.empty() && num_arms == 0) throw ConfigError("--arms must be at least 1");
        if (x_top < 1) throw ConfigError("--x-top must be at least 1");
        if (x0 < 1 || x0 > x_top) throw ConfigError("--x0 must lie in [1, x_top]");
        if (horizon < 1) throw ConfigError("--horizon must be at least 1");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("--gamma must lie in (0, 1]");
        if (growth_cap < 1) throw ConfigError("--growth-cap must be at least 1");
        if (!delta && xis.empty()) throw ConfigError("need at least one xi value");
        for (double xi : xis) {
            if (!(xi >= 0.0) || !std::isfinite(xi)) throw ConfigError("xi values must be finite and >= 0");
        }
        if (delta && !(*delta > 0.0 && *delta < 1.0)) throw ConfigError("--delta must lie in (0, 1)");
        if (modes.empty()) throw ConfigError("need at least one mode");
        for (const PlannerConfig* p : {&oracle_planner, &ucb_planner}) {
            if (p->grid_size < 2 || p->action_grid < 2) throw ConfigError("planner grids need >= 2 points");
            if (!(p->tolerance > 0.0)) throw ConfigError("planner tolerance must be positive");
        }
        if (workers == 0) throw ConfigError("--workers must be at least 1");
    }
};

inline nlohmann::json planner_json(const PlannerConfig& p) {
    return {{"grid_size", p.grid_size},
            {"action_grid", p.action_grid},
            {"tolerance", p.tolerance},
            {"max_iterations", p.max_iterations},
            {"exact_actions", p.exact_actions}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json modes = nlohmann::json::array();
    for (UcbMode m : c.modes) modes.push_back(to_string(m));
    nlohmann::json j = {
        {"seed", c.seed},
        {"num_problems", c.num_problems},
        {"num_arms", c.num_arms},
        {"problem_files", c.problem_files},
        {"x_top", c.x_top},
        {"x0", c.x0},
        {"horizon", c.horizon},
        {"gamma", c.gamma},
        {"growth_cap", c.growth_cap},
        {"runs", c.runs},
        {"xis", c.xis},
        {"delta", c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr)},
        {"modes", modes},
        {"strict", c.strict},
        {"oracle_planner", planner_json(c.oracle_planner)},
        {"ucb_planner", planner_json(c.ucb_planner)},
        {"trace_runs", c.trace_runs},
    };
    return j;
}

inline std::string config_hash(const nlohmann::json& canonical) { return hex64(fnv1a64(canonical.dump())); }

inline std::string config_hash(const ExperimentConfig& c) { return config_hash(to_json(c)); }

// ---- results ---------------------------------------------------------------

struct AlgorithmResult {
    UcbMode mode = UcbMode::batched;
    double xi = 0.0;
    std::size_t xi_index = 0;
    RegretSeries series;
    double cumulative = 0.0;
    double discounted = 0.0;
    std::size_t depleted_runs = 0;
    std::size_t runs_missing_an_arm = 0; // runs in which some arm was never pulled
    std::vector<UcbRunSummary> run_summaries; // first trace_runs runs
    std::vector<SimTrace> traces;
};

struct ProblemResult {
    std::size_t id = 0;
    ProblemInstance problem;
    RewardEnvelope envelope;
    CaseLabel case_label = CaseLabel::A;
    double decidability = 0.0;
    std::optional<std::string> error; // planner failure; the instance is skipped
    OracleSolution oracle;
    RewardAccumulator oracle_rewards;
    std::size_t oracle_depleted = 0;
    std::vector<SimTrace> oracle_traces;
    std::vector<AlgorithmResult> algorithms;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::string hash;
    std::vector<double> xis;
    std::vector<ProblemResult> problems;
};

inline std::vector<double> effective_xis(const ExperimentConfig& c, double g_cap, double range) {
    if (c.delta) return {xi_from_delta(*c.delta, g_cap, range)};
    return c.xis;
}

inline std::vector<ProblemInstance> experiment_problems(const ExperimentConfig& c) {
    std::vector<ProblemInstance> out;
    if (!c.problem_files.empty()) {
        for (const std::string& f : c.problem_files) out.push_back(load_problem(f));
        return out;
    }
    GeneratorOptions opts;
    opts.growth_cap = c.growth_cap;
    for (std::size_t i = 0; i < c.num_problems; ++i) {
        RandomStream rng(derive_key(c.seed, {static_cast<std::uint64_t>(StreamDomain::generator), i}));
        ProblemInstance p = generate_instance(c.num_arms, c.x_top, c.x0, c.horizon, rng, opts);
        p.gamma = c.gamma;
        out.push_back(std::move(p));
    }
    return out;
}

inline RunStreams oracle_streams(std::uint64_t seed, std::size_t problem, std::size_t run) {
    return RunStreams(derive_key(seed, {static_cast<std::uint64_t>(StreamDomain::oracle_runs), problem, run}));
}

inline RunStreams algorithm_streams(std::uint64_t seed, std::size_t problem, UcbMode mode,
                                    std::size_t xi_index, std::size_t run) {
    return RunStreams(derive_key(seed, {static_cast<std::uint64_t>(StreamDomain::algorithm_runs),
                                        problem, static_cast<std::uint64_t>(mode), xi_index, run}));
}

inline UcbConfig ucb_config_for(const ExperimentConfig& c, const ProblemInstance& p, UcbMode mode,
                                double xi) {
    UcbConfig u;
    u.mode = mode;
    u.xi = xi;
    u.g_cap = std::isfinite(p.growth_cap()) ? p.growth_cap() : static_cast<double>(c.growth_cap);
    u.r_lo = p.reward_lo();
    u.r_hi = p.reward_hi();
    u.strict = c.strict;
    u.planner = c.ucb_planner;
    return u;
}

// Runs the whole protocol in memory. Work is split into (problem, side) tasks, each
// accumulating its runs in run order, so results do not depend on the worker count.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult res;
    res.config = config;
    res.hash = config_hash(config);
    const std::vector<ProblemInstance> problems = experiment_problems(config);
    res.problems.resize(problems.size());
    const auto T = static_cast<std::size_t>(config.horizon);

    // Phase 1: envelopes and oracle policies.
    parallel_for(problems.size(), config.workers, [&](std::size_t i) {
        ProblemResult& pr = res.problems[i];
        pr.id = i;
        pr.problem = problems[i];
        pr.envelope = build_envelope(pr.problem.arms);
        pr.case_label = classify_case(pr.envelope);
        pr.decidability = decidability(pr.envelope);
        try {
            pr.oracle = solve_oracle(pr.envelope, pr.problem.x_top, config.oracle_planner);
        } catch (const NumericError& e) {
            pr.error = e.what();
        }
    });

    // Phase 2: rollouts.
    struct Task {
        std::size_t problem;
        std::optional<std::size_t> alg; // none = oracle side
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        ProblemResult& pr = res.problems[i];
        if (pr.error) continue;
        tasks.push_back({i, std::nullopt});
        const double g_cap = ucb_config_for(config, pr.problem, UcbMode::batched, 0.0).g_cap;
        const std::vector<double> xis =
            effective_xis(config, g_cap, pr.problem.reward_hi() - pr.problem.reward_lo());
        if (i == 0 || res.xis.empty()) res.xis = xis;
        for (UcbMode mode : config.modes) {
            for (std::size_t x = 0; x < xis.size(); ++x) {
                AlgorithmResult ar;
                ar.mode = mode;
                ar.xi = xis[x];
                ar.xi_index = x;
                pr.algorithms.push_back(std::move(ar));
                tasks.push_back({i, pr.algorithms.size() - 1});
            }
        }
    }

    std::vector<RewardAccumulator> alg_acc(tasks.size());
    parallel_for(tasks.size(), config.workers, [&](std::size_t ti) {
        const Task& task = tasks[ti];
        ProblemResult& pr = res.problems[task.problem];
        const ProblemInstance& p = pr.problem;
        SimTrace trace;
        if (!task.alg) {
            RewardAccumulator acc(T);
            PolicyAgent agent(pr.oracle.policy);
            for (std::size_t r = 0; r < config.runs; ++r) {
                rollout(agent, p, oracle_streams(config.seed, task.problem, r), trace);
                acc.add(trace);
                if (trace.depleted()) ++pr.oracle_depleted;
                if (r < config.trace_runs) pr.oracle_traces.push_back(trace);
            }
            pr.oracle_rewards = std::move(acc);
            return;
        }
        AlgorithmResult& ar = pr.algorithms[*task.alg];
        const UcbConfig ucfg = ucb_config_for(config, p, ar.mode, ar.xi);
        RewardAccumulator acc(T);
        std::vector<std::int64_t> arm_totals(p.arms.size());
        for (std::size_t r = 0; r < config.runs; ++r) {
            const UcbRunSummary summary = run_ucb(
                p, ucfg, algorithm_streams(config.seed, task.problem, ar.mode, ar.xi_index, r), trace);
            acc.add(trace);
            if (trace.depleted()) ++ar.depleted_runs;
            std::fill(arm_totals.begin(), arm_totals.end(), 0);
            for (std::size_t t = 0; t < trace.horizon; ++t) {
                for (std::size_t k = 0; k < p.arms.size(); ++k) arm_totals[k] += trace.pulls_at(t, k);
            }
            if (std::any_of(arm_totals.begin(), arm_totals.end(), [](std::int64_t c) { return c == 0; })) {
                ++ar.runs_missing_an_arm;
            }
            if (r < config.trace_runs) {
                ar.traces.push_back(trace);
                ar.run_summaries.push_back(summary);
            }
        }
        alg_acc[ti] = std::move(acc);
    });

    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        if (!tasks[ti].alg) continue;
        ProblemResult& pr = res.problems[tasks[ti].problem];
        AlgorithmResult& ar = pr.algorithms[*tasks[ti].alg];
        ar.series = regret_series(pr.oracle_rewards, alg_acc[ti]);
        ar.cumulative = cumulative_regret(ar.series, 1.0);
        ar.discounted = cumulative_regret(ar.series, pr.problem.gamma);
    }
    return res;
}

// ---- aggregate views -------------------------------------------------------

enum class RegretGroup { all, case_c, case_c_no_depletion };

inline const char* to_string(RegretGroup g) {
    switch (g) {
    case RegretGroup::all: return "all";
    case RegretGroup::case_c: return "case_c";
    case RegretGroup::case_c_no_depletion: return "case_c_no_depletion";
    }
    return "?";
}

inline bool in_group(const ProblemResult& pr, const AlgorithmResult& ar, RegretGroup g) {
    switch (g) {
    case RegretGroup::all: return true;
    case RegretGroup::case_c: return pr.case_label == CaseLabel::C;
    case RegretGroup::case_c_no_depletion:
        return pr.case_label == CaseLabel::C && ar.depleted_runs == 0 && pr.oracle_depleted == 0;
    }
    return false;
}

struct GroupCurve {
    UcbMode mode = UcbMode::batched;
    double xi = 0.0;
    RegretGroup group = RegretGroup::all;
    std::size_t problems = 0;
    std::vector<double> regret;    // mean over problems of ρ(t)
    std::vector<double> std_error; // sqrt(Σ se_i²) / n
};

inline std::vector<GroupCurve> group_curves(const ExperimentResult& res) {
    std::vector<GroupCurve> out;
    const auto T = static_cast<std::size_t>(res.config.horizon);
    for (UcbMode mode : res.config.modes) {
        for (std::size_t x = 0; x < res.xis.size(); ++x) {
            for (RegretGroup g : {RegretGroup::all, RegretGroup::case_c, RegretGroup::case_c_no_depletion}) {
                GroupCurve c;
                c.mode = mode;
                c.xi = res.xis[x];
                c.group = g;
                c.regret.assign(T, 0.0);
                c.std_error.assign(T, 0.0);
                for (const ProblemResult& pr : res.problems) {
                    for (const AlgorithmResult& ar : pr.algorithms) {
                        if (ar.mode != mode || ar.xi_index != x || !in_group(pr, ar, g)) continue;
                        ++c.problems;
                        for (std::size_t t = 0; t < T; ++t) {
                            c.regret[t] += ar.series.points[t].regret;
                            c.std_error[t] += ar.series.points[t].std_error * ar.series.points[t].std_error;
                        }
                    }
                }
                if (c.problems > 0) {
                    const auto n = static_cast<double>(c.problems);
                    for (std::size_t t = 0; t < T; ++t) {
                        c.regret[t] /= n;
                        c.std_error[t] = std::sqrt(c.std_error[t]) / n;
                    }
                }
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

// ---- output ----------------------------------------------------------------

inline std::string provenance_line(const std::string& hash, std::uint64_t seed) {
    return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out = open_output(path);
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
}

inline std::string problem_tag(std::size_t id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%04zu", id);
    return buf;
}

inline std::string side_tag(UcbMode mode, double xi) { return to_string(mode) + "_xi" + fmt_double(xi); }

inline void write_arms_csv(std::ostream& out, const ProblemInstance& p) {
    out << "growth,reward,arm_id\n";
    for (std::size_t k = 0; k < p.arms.size(); ++k) {
        out << fmt_double(p.arms[k].mean_growth) << ',' << fmt_double(p.arms[k].mean_reward) << ',' << k
            << '\n';
    }
}

inline nlohmann::json problem_summary_json(const ProblemResult& pr) {
    nlohmann::json j = {{"problem_id", pr.id},
                        {"case", std::string(to_string(pr.case_label))},
                        {"decidability", pr.decidability},
                        {"oracle_depleted_runs", pr.oracle_depleted}};
    if (pr.error) {
        j["error"] = *pr.error;
        return j;
    }
    j["oracle_gamma"] = pr.oracle.gamma;
    nlohmann::json algs = nlohmann::json::array();
    for (const AlgorithmResult& ar : pr.algorithms) {
        algs.push_back({{"mode", to_string(ar.mode)},
                        {"xi", ar.xi},
                        {"cumulative_regret", ar.cumulative},
                        {"discounted_regret", ar.discounted},
                        {"depleted_runs", ar.depleted_runs},
                        {"runs_missing_an_arm", ar.runs_missing_an_arm}});
    }
    j["algorithms"] = algs;
    return j;
}

inline nlohmann::json run_summary_json(const UcbRunSummary& s) {
    return {{"final_crowd", s.final_crowd},
            {"total_reward", s.total_reward},
            {"decided_at", s.decided_at ? nlohmann::json(*s.decided_at) : nlohmann::json(nullptr)},
            {"case_decided", s.decided_at_end ? "ab" : "undecided"}};
}

inline void write_experiment(const ExperimentResult& res, const std::filesystem::path& dir) {
    const std::string head = provenance_line(res.hash, res.config.seed);
    const std::uint64_t seed = res.config.seed;

    nlohmann::json manifest = {{"config", to_json(res.config)},
                               {"config_hash", res.hash},
                               {"seed", seed},
                               {"problems", res.problems.size()},
                               {"xis", res.xis}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    for (const ProblemResult& pr : res.problems) {
        const std::string tag = problem_tag(pr.id);
        write_text(dir / "problems" / (tag + ".json"), dump_problem(pr.problem));
        {
            std::ofstream out = open_output(dir / "plots-data" / ("envelope_" + tag + ".csv"));
            out << head;
            write_envelope_csv(out, pr.envelope);
        }
        {
            std::ofstream out = open_output(dir / "plots-data" / ("arms_" + tag + ".csv"));
            out << head;
            write_arms_csv(out, pr.problem);
        }
        if (pr.error) continue;
        if (!pr.oracle_traces.empty()) {
            std::ofstream out = open_output(dir / "traces" / (tag + "_oracle.csv"));
            out << head;
            write_trace_header(out, pr.problem.arms.size());
            for (std::size_t r = 0; r < pr.oracle_traces.size(); ++r) write_trace_rows(out, r, pr.oracle_traces[r]);
        }
        for (const AlgorithmResult& ar : pr.algorithms) {
            const std::string side = side_tag(ar.mode, ar.xi);
            {
                std::ofstream out = open_output(dir / "regret" / (tag + "_" + side + ".csv"));
                out << head;
                write_regret_csv(out, ar.series);
            }
            if (!ar.traces.empty()) {
                std::ofstream out = open_output(dir / "traces" / (tag + "_" + side + ".csv"));
                out << head;
                write_trace_header(out, pr.problem.arms.size());
                for (std::size_t r = 0; r < ar.traces.size(); ++r) write_trace_rows(out, r, ar.traces[r]);
                nlohmann::json runs = nlohmann::json::array();
                for (const UcbRunSummary& s : ar.run_summaries) runs.push_back(run_summary_json(s));
                nlohmann::json doc = {{"config_hash", res.hash}, {"seed", seed}, {"runs", runs}};
                write_text(dir / "traces" / (tag + "_" + side + "_runs.json"), doc.dump(2) + "\n");
            }
        }
    }

    {
        std::ofstream out = open_output(dir / "plots-data" / "regret_curves.csv");
        out << head << "mode,xi,group,t,regret,stderr\n";
        for (const GroupCurve& c : group_curves(res)) {
            if (c.problems == 0) continue;
            for (std::size_t t = 0; t < c.regret.size(); ++t) {
                out << to_string(c.mode) << ',' << fmt_double(c.xi) << ',' << to_string(c.group) << ',' << t
                    << ',' << fmt_double(c.regret[t]) << ',' << fmt_double(c.std_error[t]) << '\n';
            }
        }
    }
    {
        std::ofstream out = open_output(dir / "plots-data" / "summary.csv");
        out << head
            << "problem_id,mode,xi,case,decidability,cumulative_regret,discounted_regret,depleted_runs\n";
        for (const ProblemResult& pr : res.problems) {
            for (const AlgorithmResult& ar : pr.algorithms) {
                out << pr.id << ',' << to_string(ar.mode) << ',' << fmt_double(ar.xi) << ','
                    << to_string(pr.case_label) << ',' << fmt_double(pr.decidability) << ','
                    << fmt_double(ar.cumulative) << ',' << fmt_double(ar.discounted) << ','
                    << ar.depleted_runs << '\n';
            }
        }
    }
    {
        nlohmann::json problems = nlohmann::json::array();
        for (const ProblemResult& pr : res.problems) problems.push_back(problem_summary_json(pr));
        nlohmann::json doc = {{"config_hash", res.hash}, {"seed", seed}, {"problems", problems}};
        write_text(dir / "plots-data" / "summary.json", doc.dump(2) + "\n");
    }
}

} // namespace crowdbandit
