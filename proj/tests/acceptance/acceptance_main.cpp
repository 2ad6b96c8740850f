// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/envelope.hpp"
#include "crowdbandit/experiment.hpp"
#include "crowdbandit/planner.hpp"
#include "crowdbandit/theory.hpp"
#include "crowdbandit/ucb.hpp"
#include "drivers.hpp"
#include "oracles.hpp"

using namespace crowdbandit;
namespace fs = std::filesystem;

namespace {

constexpr double kEnvelopeTol = 1e-9;
constexpr double kEnvelopeSeconds = 10.0;
constexpr double kClosedFormRel = 0.005;
constexpr double kClosedFormSeconds = 60.0;
constexpr double kShapeTolScale = 1e-6;
constexpr double kTreeSearchRel = 0.02;
constexpr double kCaseFreqTol = 0.10;
constexpr double kGeneratorSeconds = 60.0;
constexpr double kMcSigmas = 3.0;
constexpr double kS0Tol = 1e-8;
constexpr double kFinalRegretShare = 0.25;
constexpr double kSpearmanMax = -0.3;
constexpr std::size_t kSpearmanMinXi = 3;
constexpr double kDeskBudgetSeconds = 30.0 * 60.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RewardEnvelope generated_envelope(std::uint64_t seed, std::uint64_t i) {
    RandomStream rng(derive_key(seed, {i}));
    return build_envelope(generate_problem(20, rng));
}

Outcome envelope_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        RandomStream rng(derive_key(101, {s}));
        const std::size_t K = 1 + s % 6;
        std::vector<ArmPoint> pts;
        std::vector<oracle::Pt> o;
        for (std::size_t k = 0; k < K; ++k) {
            const double g = rng.uniform(0.0, 2.0);
            const double r = rng.uniform(-2.0, 2.0);
            pts.push_back({g, r, k});
            o.push_back({g, r});
        }
        const RewardEnvelope env(pts);
        for (int i = 0; i <= 100; ++i) {
            const double g = i == 100 ? env.g_top()
                                      : env.g_bot() + (env.g_top() - env.g_bot()) * i / 100.0;
            worst = std::max(worst, std::abs(transformed_reward(env, g) - oracle::mixture_max(o, g)));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= kEnvelopeTol && secs < kEnvelopeSeconds,
            "max error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome closed_form_ab() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int checked = 0;
    for (std::uint64_t i = 0; checked < 100; ++i) {
        const RewardEnvelope env = generated_envelope(202, i);
        if (classify_case(env) == CaseLabel::C || env.g_bot() >= 1.0) continue;
        ++checked;
        const double slope = solve_case_ab(env, 1.0).slope;
        PlannerConfig cfg;
        cfg.depleting_only = true;
        const PlannerSolution sol = value_iteration(env, 1.0, 1000, cfg);
        const double vi = sol.values.values.back() / 1000.0;
        const double rel = std::abs(vi - slope) / std::max(std::abs(slope), 1e-300);
        worst = std::max(worst, slope == 0.0 ? std::abs(vi) : rel);
    }
    const double secs = seconds_since(t0);
    return {worst <= kClosedFormRel && secs < kClosedFormSeconds,
            "100 instances, max relative error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome case_c_structure() {
    int checked = 0;
    int cap_fail = 0, path_fail = 0, mono_fail = 0, conc_fail = 0;
    for (std::uint64_t i = 0; checked < 100; ++i) {
        const RewardEnvelope env = generated_envelope(303, i);
        if (classify_case(env) != CaseLabel::C) continue;
        ++checked;
        const std::int64_t x_top = 1000;
        const double gamma = planning_gamma_c(env);
        const PlannerSolution sol = solve_case_c(env, gamma, x_top);
        const auto& xs = sol.values.grid;
        const auto& v = sol.values.values;
        double scale = 0.0;
        for (double x : v) scale = std::max(scale, std::abs(x));
        const double tol = kShapeTolScale * scale;
        const double step = sol.action_step + 1e-12;

        if (std::abs(sol.policy.growth_at(static_cast<double>(x_top)) - env.argmax_reward_from(1.0)) > step) {
            ++cap_fail;
        }
        bool path_ok = true;
        for (std::size_t i0 = 0; i0 < xs.size(); i0 += 16) {
            double x = xs[i0];
            double prev = sol.policy.growth_at(x);
            for (int t = 0; t < 2000 && x >= 1.0; ++t) {
                const double g = sol.policy.growth_at(x);
                if (g > prev + step) path_ok = false;
                prev = g;
                const double nx = std::min(x * g, static_cast<double>(x_top));
                if (nx == x) break;
                x = nx;
            }
        }
        if (!path_ok) ++path_fail;
        bool mono = true, conc = true;
        for (std::size_t j = 1; j < v.size(); ++j) {
            if (!(v[j] > v[j - 1] - tol)) mono = false;
        }
        for (std::size_t j = 1; j + 1 < v.size(); ++j) {
            const double w = (xs[j] - xs[j - 1]) / (xs[j + 1] - xs[j - 1]);
            if (v[j] < (1 - w) * v[j - 1] + w * v[j + 1] - tol) conc = false;
        }
        if (!mono) ++mono_fail;
        if (!conc) ++conc_fail;
    }
    std::ostringstream d;
    d << "100 instances; violations: cap " << cap_fail << ", trajectory " << path_fail
      << ", monotonicity " << mono_fail << ", concavity " << conc_fail;
    return {cap_fail + path_fail + mono_fail + conc_fail == 0, d.str()};
}

Outcome small_instance() {
    std::vector<ArmPoint> pts{{2.0, 0.0, 0}, {1.0, 1.0, 1}};
    const RewardEnvelope env(pts);
    const double gamma = 0.95;
    const PlannerSolution sol = solve_case_c(env, gamma, 64);
    const double value = policy_value_roemdp(sol.policy, env, gamma, 1.0, 64, 1e-12);
    oracle::TreeSearch ts{gamma, 90, 15, {}, [](double g) { return 2.0 - g; }, {}};
    for (int m = 0; m <= 15; ++m) ts.moves.push_back(m);
    const double brute = ts.value(24, 0);
    const double rel = std::abs(value - brute) / std::abs(brute);
    return {rel <= kTreeSearchRel, "planner " + fmt("%.6g", value) + " vs tree search " +
                                       fmt("%.6g", brute) + " (rel " + fmt("%.3g", rel) + ")"};
}

Outcome generator_stats() {
    const auto t0 = std::chrono::steady_clock::now();
    std::map<CaseLabel, double> freq;
    const int n = 10000;
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n); ++i) {
        freq[classify_case(generated_envelope(404, i))] += 1.0 / n;
    }
    const double secs = seconds_since(t0);
    const bool ok = std::abs(freq[CaseLabel::A] - 0.10) <= kCaseFreqTol &&
                    std::abs(freq[CaseLabel::B] - 0.40) <= kCaseFreqTol &&
                    std::abs(freq[CaseLabel::C] - 0.50) <= kCaseFreqTol && secs < kGeneratorSeconds;
    return {ok, "A/B/C = " + fmt("%.4f", freq[CaseLabel::A]) + "/" + fmt("%.4f", freq[CaseLabel::B]) +
                    "/" + fmt("%.4f", freq[CaseLabel::C]) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome exceedance_check() {
    bool ok = true;
    std::ostringstream d;
    double worst_s0 = 0.0;
    for (double m : {0.5, 0.7, 0.9}) {
        const GrowthDistribution dist = GeometricGrowth::with_mean(m, 0);
        worst_s0 = std::max(worst_s0, std::abs(solve_s0(dist) + std::log(m)));
        for (std::int64_t x_top : {8, 12}) {
            const ExceedanceBound b = exceedance(dist, 5, x_top);
            const MonteCarloEstimate mc = simulate_exceedance(dist, 5, x_top, 100000, 505);
            if (!(mc.p <= b.bound + kMcSigmas * mc.std_error)) ok = false;
            d << " m=" << m << ",x_top=" << x_top << ": " << fmt("%.4g", mc.p) << "<=" << fmt("%.4g", b.bound)
              << ";";
        }
    }
    ok = ok && worst_s0 <= kS0Tol;
    return {ok, "s0 error " + fmt("%.3g", worst_s0) + ";" + d.str()};
}

Outcome alg_equivalence() {
    std::size_t mismatches = 0;
    std::size_t decisions = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        RandomStream rng(derive_key(606, {s}));
        const ProblemInstance p = generate_instance(6 + s % 5, 100, 1, 1, rng);
        UcbConfig cfg;
        cfg.xi = 0.5 + 0.5 * static_cast<double>(s % 4);
        cfg.g_cap = p.growth_cap();
        const auto a = drivers::crowd_one_decisions(p, cfg, UcbMode::online, s, 150);
        const auto b = drivers::crowd_one_decisions(p, cfg, UcbMode::batched, s, 150);
        decisions += a.size();
        if (a != b) ++mismatches;
    }
    return {mismatches == 0, "20 instances, " + std::to_string(decisions) + " decisions, " +
                                 std::to_string(mismatches) + " instances differ"};
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out.emplace_back(fs::relative(e.path(), dir).string(), ss.str());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Outcome determinism(const fs::path& scratch) {
    ExperimentConfig c;
    c.seed = 707;
    c.num_problems = 6;
    c.num_arms = 8;
    c.x_top = 200;
    c.x0 = 20;
    c.horizon = 40;
    c.runs = 6;
    c.modes = {UcbMode::batched, UcbMode::online};
    c.trace_runs = 2;
    const fs::path a = scratch / "determinism_w1";
    const fs::path b = scratch / "determinism_w8";
    fs::remove_all(a);
    fs::remove_all(b);
    c.workers = 1;
    write_experiment(run_experiment(c), a);
    c.workers = 8;
    write_experiment(run_experiment(c), b);
    const auto sa = snapshot(a);
    const auto sb = snapshot(b);
    std::size_t csv = 0;
    for (const auto& f : sa) {
        if (f.first.size() > 4 && f.first.substr(f.first.size() - 4) == ".csv") ++csv;
    }
    fs::remove_all(a);
    fs::remove_all(b);
    return {sa == sb && csv > 0, std::to_string(sa.size()) + " files (" + std::to_string(csv) +
                                     " CSV), workers 1 vs 8 " + (sa == sb ? "identical" : "differ")};
}

Outcome ucb_desk(const fs::path& out_dir, std::size_t workers) {
    ExperimentConfig c; // defaults are the desk protocol
    c.seed = 2021;
    c.workers = workers;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(c);
    const double secs = seconds_since(t0);
    write_experiment(res, out_dir);

    std::ostringstream d;
    bool ok = true;

    // (i) final regret share on Case-(c) instances without depletion.
    d << "(i)";
    for (const GroupCurve& g : group_curves(res)) {
        if (g.group != RegretGroup::case_c_no_depletion) continue;
        if (g.problems == 0) {
            ok = false;
            d << " xi=" << g.xi << ": no instances;";
            continue;
        }
        const double peak = *std::max_element(g.regret.begin(), g.regret.end());
        const double share = peak > 0.0 ? g.regret.back() / peak : 1.0;
        if (!(share < kFinalRegretShare)) ok = false;
        d << " xi=" << g.xi << ": " << fmt("%.3f", share) << " (n=" << g.problems << ");";
    }

    // (ii) cumulative regret vs |decidability|.
    d << " (ii)";
    std::size_t good_xi = 0;
    for (std::size_t x = 0; x < res.xis.size(); ++x) {
        std::vector<double> dec, reg;
        for (const ProblemResult& pr : res.problems) {
            if (pr.error) continue;
            for (const AlgorithmResult& ar : pr.algorithms) {
                if (ar.xi_index != x) continue;
                dec.push_back(std::abs(pr.decidability));
                reg.push_back(ar.cumulative);
            }
        }
        const double rho = spearman(dec, reg);
        if (rho < kSpearmanMax) ++good_xi;
        d << " xi=" << res.xis[x] << ": " << fmt("%.3f", rho) << ";";
    }
    if (good_xi < kSpearmanMinXi) ok = false;

    // (iii) every arm pulled in every run.
    std::size_t missing = 0, skipped = 0;
    for (const ProblemResult& pr : res.problems) {
        if (pr.error) ++skipped;
        for (const AlgorithmResult& ar : pr.algorithms) missing += ar.runs_missing_an_arm;
    }
    if (missing != 0) ok = false;
    d << " (iii) runs missing an arm: " << missing << ";";
    if (skipped != 0) {
        ok = false;
        d << " planner failures: " << skipped << ";";
    }
    // Budget is stated for a multi-core laptop; report the measured wall time.
    const bool in_budget = secs < kDeskBudgetSeconds;
    d << " " << fmt("%.0f", secs) << " s on " << workers << " worker(s)"
      << (in_budget ? "" : " (over the 30 min budget)");
    return {ok && in_budget, d.str()};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::vector<std::string> only;
    std::string scratch = (fs::temp_directory_path() / "crowdbandit_acceptance").string();
    std::string desk_out = "desk-experiment";
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--only", only, "run only these criteria");
    app.add_option("--scratch", scratch, "scratch directory");
    app.add_option("--desk-out", desk_out, "output directory of the desk-scale experiment");
    app.add_option("--workers", workers, "worker threads for the desk-scale experiment");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"envelope_oracle", envelope_oracle},
        {"closed_form_ab", closed_form_ab},
        {"case_c_structure", case_c_structure},
        {"small_instance_planner", small_instance},
        {"generator_statistics", generator_stats},
        {"exceedance_bound", exceedance_check},
        {"ucb_desk_scale", [&] { return ucb_desk(desk_out, workers); }},
        {"online_batched_equivalence", alg_equivalence},
        {"determinism", [&] { return determinism(scratch); }},
    };
    fs::create_directories(scratch);

    bool all = true;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
