// crowdbandit: generate problems, solve them, simulate policies and run the
// regret experiment. Exit codes: 0 ok, 2 configuration error, 3 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdbandit/experiment.hpp"
#include "crowdbandit/theory.hpp"

namespace fs = std::filesystem;
using namespace crowdbandit;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    fs::path out = "out";
    std::size_t workers = 1;
    std::string format = "csv";
};

struct GenerateOpts {
    std::size_t count = 1;
    std::size_t arms = 20;
    std::int64_t x_top = 1000;
    std::int64_t x0 = 100;
    std::int64_t horizon = 300;
    double gamma = 1.0;
    std::int64_t growth_cap = 50;
};

struct SolveOpts {
    std::string problem;
    std::size_t grid = 512;
    std::size_t actions = 256;
    double tolerance = 1e-8;
};

struct SimulateOpts {
    std::string problem;
    std::string policy = "ucb";
    std::string mode = "batched";
    std::optional<double> xi;
    std::optional<double> delta;
    bool strict = false;
    std::size_t runs = 10;
    bool keep_observations = false;
};

struct ExperimentOpts {
    std::size_t problems = 50;
    std::string problem_dir;
    std::size_t arms = 20;
    std::int64_t x_top = 1000;
    std::int64_t x0 = 100;
    std::int64_t horizon = 300;
    double gamma = 1.0;
    std::int64_t growth_cap = 50;
    std::size_t runs = 200;
    std::vector<double> xis{1.0, 2.0, 4.0, 8.0};
    std::optional<double> delta;
    std::string mode = "batched";
    bool strict = false;
    std::size_t trace_runs = 0;
    std::size_t oracle_grid = 512;
    std::size_t oracle_actions = 256;
    std::size_t ucb_grid = 128;
    std::size_t ucb_actions = 64;
};

struct TheoryOpts {
    std::vector<double> means{0.5, 0.7, 0.9};
    std::int64_t x0 = 5;
    std::vector<std::int64_t> x_tops{8, 12};
    std::size_t runs = 100000;
};

std::string head(const std::string& hash, std::uint64_t seed) { return provenance_line(hash, seed); }

UcbMode parse_mode(const std::string& m) {
    if (m == "online") return UcbMode::online;
    if (m == "batched") return UcbMode::batched;
    throw ConfigError("unknown mode \"" + m + "\"");
}

// Table writer honouring --format: CSV with a provenance line, or a JSON document
// {config_hash, seed, columns, rows}.
class Table {
public:
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    void write(const fs::path& stem, const Globals& g, const std::string& hash) const {
        if (g.format == "json") {
            json rows = json::array();
            for (const auto& r : rows_) rows.push_back(r);
            json doc = {{"config_hash", hash}, {"seed", g.seed}, {"columns", columns_}, {"rows", rows}};
            write_text(fs::path(stem).replace_extension(".json"), doc.dump(2) + "\n");
            return;
        }
        std::string text = head(hash, g.seed);
        for (std::size_t i = 0; i < columns_.size(); ++i) text += (i ? "," : "") + columns_[i];
        text += '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) text += (i ? "," : "") + r[i];
            text += '\n';
        }
        write_text(fs::path(stem).replace_extension(".csv"), text);
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

void cmd_generate(const Globals& g, const GenerateOpts& o) {
    if (o.arms == 0) throw ConfigError("--arms must be at least 1");
    if (o.x_top < 1 || o.x0 < 1 || o.x0 > o.x_top) throw ConfigError("need 1 <= x0 <= x_top");
    if (o.horizon < 1) throw ConfigError("--horizon must be at least 1");
    if (!(o.gamma > 0.0 && o.gamma <= 1.0)) throw ConfigError("--gamma must lie in (0, 1]");
    if (o.growth_cap < 1) throw ConfigError("--growth-cap must be at least 1");
    if (o.count == 0) return;
    const json cfg = {{"command", "generate"}, {"seed", g.seed},   {"count", o.count},
                      {"arms", o.arms},        {"x_top", o.x_top}, {"x0", o.x0},
                      {"horizon", o.horizon},  {"gamma", o.gamma}, {"growth_cap", o.growth_cap}};
    const std::string hash = config_hash(cfg);
    GeneratorOptions gen;
    gen.growth_cap = o.growth_cap;
    Table dec({"problem_id", "case", "decidability"});
    std::vector<double> values;
    for (std::size_t i = 0; i < o.count; ++i) {
        RandomStream rng(derive_key(g.seed, {static_cast<std::uint64_t>(StreamDomain::generator), i}));
        ProblemInstance p = generate_instance(o.arms, o.x_top, o.x0, o.horizon, rng, gen);
        p.gamma = o.gamma;
        write_text(g.out / "problems" / (problem_tag(i) + ".json"), dump_problem(p));
        const RewardEnvelope env = build_envelope(p.arms);
        const double d = decidability(env);
        values.push_back(d);
        dec.add({std::to_string(i), std::string(to_string(classify_case(env))), fmt_double(d)});
    }
    dec.write(g.out / "decidability", g, hash);

    // Fixed-width histogram over [min, max] with ceil(sqrt(N)) bins (at most 50).
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const std::size_t bins = std::min<std::size_t>(
        50, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(values.size())))));
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        counts[std::min(b, bins - 1)]++;
    }
    Table hist({"bin_lo", "bin_hi", "count"});
    for (std::size_t b = 0; b < bins; ++b) {
        hist.add({fmt_double(lo + width * static_cast<double>(b)),
                  fmt_double(b + 1 == bins && hi > lo ? hi : lo + width * static_cast<double>(b + 1)),
                  std::to_string(counts[b])});
    }
    hist.write(g.out / "decidability_hist", g, hash);
}

void cmd_solve(const Globals& g, const SolveOpts& o) {
    const ProblemInstance p = load_problem(o.problem);
    const json cfg = {{"command", "solve"}, {"seed", g.seed}, {"problem", to_json(p)},
                      {"grid", o.grid},     {"actions", o.actions}, {"tolerance", o.tolerance}};
    const std::string hash = config_hash(cfg);
    const RewardEnvelope env = build_envelope(p.arms);
    PlannerConfig pc;
    pc.grid_size = o.grid;
    pc.action_grid = o.actions;
    pc.tolerance = o.tolerance;
    const OracleSolution sol = solve_oracle(env, p.x_top, pc);

    json info = {{"config_hash", hash},
                 {"seed", g.seed},
                 {"case", std::string(to_string(sol.case_label))},
                 {"decidability", decidability(env)},
                 {"gamma", sol.gamma}};
    Table table({"x", "growth", "arm_id_1", "weight_1", "arm_id_2", "weight_2", "value"});
    std::vector<double> xs;
    std::function<double(double)> value;
    if (sol.closed_form) {
        info["policy"] = "constant";
        info["arm"] = sol.closed_form->arm;
        info["slope"] = sol.closed_form->slope;
        info["gamma_floor"] = gamma_floor_ab(env);
        xs = geometric_grid(p.x_top, std::min<std::size_t>(o.grid, 64));
        const double slope = sol.closed_form->slope;
        value = [slope](double x) { return slope * x; };
    } else {
        info["policy"] = "tabulated";
        info["residual"] = sol.numeric->values.residual;
        info["sweeps"] = sol.numeric->values.sweeps;
        xs = sol.numeric->values.grid;
        const ValueTable* vt = &sol.numeric->values;
        value = [vt](double x) { return vt->value_at(x); };
    }
    for (double x : xs) {
        const Mixture& m = sol.policy.mixture_at(x);
        table.add({fmt_double(x), fmt_double(sol.policy.growth_at(x)), std::to_string(m.parts[0].arm),
                   fmt_double(m.parts[0].weight), m.size > 1 ? std::to_string(m.parts[1].arm) : "-1",
                   fmt_double(m.size > 1 ? m.parts[1].weight : 0.0), fmt_double(value(x))});
    }
    table.write(g.out / "policy", g, hash);
    {
        std::ofstream out = open_output(g.out / "envelope.csv");
        out << head(hash, g.seed);
        write_envelope_csv(out, env);
    }
    write_text(g.out / "solution.json", info.dump(2) + "\n");
}

void cmd_simulate(const Globals& g, const SimulateOpts& o) {
    if (o.runs == 0) throw ConfigError("--runs must be at least 1");
    if (o.policy != "ucb" && o.policy != "oracle") throw ConfigError("--policy must be ucb or oracle");
    if (o.xi && o.delta) throw ConfigError("give --xi or --delta, not both");
    if (o.delta && !(*o.delta > 0.0 && *o.delta < 1.0)) throw ConfigError("--delta must lie in (0, 1)");
    const ProblemInstance p = load_problem(o.problem);
    const UcbMode mode = parse_mode(o.mode);
    ExperimentConfig ec;
    ec.strict = o.strict;
    UcbConfig ucfg = ucb_config_for(ec, p, mode, 1.0);
    if (o.delta) ucfg.xi = xi_from_delta(*o.delta, ucfg.g_cap, ucfg.r_hi - ucfg.r_lo);
    if (o.xi) {
        if (!(*o.xi >= 0.0)) throw ConfigError("--xi must be non-negative");
        ucfg.xi = *o.xi;
    }
    const json cfg = {{"command", "simulate"}, {"seed", g.seed},  {"problem", to_json(p)},
                      {"policy", o.policy},    {"mode", o.mode},  {"xi", ucfg.xi},
                      {"strict", o.strict},    {"runs", o.runs},  {"keep_observations", o.keep_observations}};
    const std::string hash = config_hash(cfg);

    RolloutOptions ropts;
    ropts.keep_observations = o.keep_observations;
    std::vector<SimTrace> traces(o.runs);
    std::vector<json> summaries(o.runs);
    std::optional<GrowthPolicy> oracle;
    if (o.policy == "oracle") oracle = oracle_policy(p);
    parallel_for(o.runs, g.workers, [&](std::size_t r) {
        const RunStreams streams(derive_key(g.seed, {static_cast<std::uint64_t>(StreamDomain::simulate), r}));
        if (oracle) {
            PolicyAgent agent(*oracle);
            rollout(agent, p, streams, traces[r], ropts);
            summaries[r] = {{"final_crowd", traces[r].final_crowd}, {"total_reward", traces[r].total_reward()}};
        } else {
            summaries[r] = run_summary_json(run_ucb(p, ucfg, streams, traces[r], ropts));
        }
    });

    std::vector<std::string> cols{"run_id", "t", "crowd", "reward"};
    for (std::size_t k = 0; k < p.arms.size(); ++k) cols.push_back("pulls_" + std::to_string(k));
    Table table(cols);
    for (std::size_t r = 0; r < o.runs; ++r) {
        const SimTrace& tr = traces[r];
        for (std::size_t t = 0; t < tr.horizon; ++t) {
            std::vector<std::string> row{std::to_string(r), std::to_string(t), std::to_string(tr.crowd[t]),
                                         fmt_double(tr.reward[t])};
            for (std::size_t k = 0; k < p.arms.size(); ++k) row.push_back(std::to_string(tr.pulls_at(t, k)));
            table.add(std::move(row));
        }
    }
    table.write(g.out / "traces", g, hash);
    if (o.keep_observations) {
        Table obs({"run_id", "t", "arm", "growth", "reward"});
        for (std::size_t r = 0; r < o.runs; ++r) {
            const SimTrace& tr = traces[r];
            for (std::size_t t = 0; t < tr.horizon; ++t) {
                for (std::size_t i = tr.observation_offsets[t]; i < tr.observation_offsets[t + 1]; ++i) {
                    const Observation& ob = tr.observations[i];
                    obs.add({std::to_string(r), std::to_string(t), std::to_string(ob.arm),
                             std::to_string(ob.growth), fmt_double(ob.reward)});
                }
            }
        }
        obs.write(g.out / "observations", g, hash);
    }
    json doc = {{"config_hash", hash}, {"seed", g.seed}, {"runs", summaries}};
    write_text(g.out / "runs.json", doc.dump(2) + "\n");
}

void cmd_experiment(const Globals& g, const ExperimentOpts& o) {
    ExperimentConfig c;
    c.seed = g.seed;
    c.num_problems = o.problems;
    c.num_arms = o.arms;
    if (!o.problem_dir.empty()) {
        if (!fs::is_directory(o.problem_dir)) throw ConfigError("no such directory " + o.problem_dir);
        for (const auto& e : fs::directory_iterator(o.problem_dir)) {
            if (e.path().extension() == ".json") c.problem_files.push_back(e.path().string());
        }
        std::sort(c.problem_files.begin(), c.problem_files.end());
        if (c.problem_files.empty()) throw ConfigError("no problem files in " + o.problem_dir);
    }
    c.x_top = o.x_top;
    c.x0 = o.x0;
    c.horizon = o.horizon;
    c.gamma = o.gamma;
    c.growth_cap = o.growth_cap;
    c.runs = o.runs;
    c.xis = o.xis;
    c.delta = o.delta;
    if (o.mode == "both") {
        c.modes = {UcbMode::online, UcbMode::batched};
    } else {
        c.modes = {parse_mode(o.mode)};
    }
    c.strict = o.strict;
    c.trace_runs = o.trace_runs;
    c.oracle_planner.grid_size = o.oracle_grid;
    c.oracle_planner.action_grid = o.oracle_actions;
    c.ucb_planner.grid_size = o.ucb_grid;
    c.ucb_planner.action_grid = o.ucb_actions;
    c.workers = g.workers;
    c.out_dir = g.out;
    const ExperimentResult res = run_experiment(c);
    write_experiment(res, g.out);
    std::size_t failed = 0;
    for (const ProblemResult& pr : res.problems) {
        if (pr.error) {
            ++failed;
            std::cerr << "problem " << pr.id << ": " << *pr.error << '\n';
        }
    }
    std::cerr << "experiment " << res.hash << ": " << res.problems.size() << " problems, " << failed
              << " skipped\n";
}

void cmd_theory(const Globals& g, const TheoryOpts& o) {
    if (o.runs == 0) throw ConfigError("--runs must be at least 1");
    const json cfg = {{"command", "theory-check"}, {"seed", g.seed}, {"means", o.means},
                      {"x0", o.x0}, {"x_tops", o.x_tops}, {"runs", o.runs}};
    const std::string hash = config_hash(cfg);
    Table table({"m", "s0", "gap", "bound", "mc_estimate", "mc_stderr"});
    for (std::size_t i = 0; i < o.means.size(); ++i) {
        const double m = o.means[i];
        if (!(m > 0.0 && m < 1.0)) throw ConfigError("--m values must lie in (0, 1)");
        const GrowthDistribution dist = GeometricGrowth::with_mean(m, 0);
        const double s0 = solve_s0(dist);
        for (std::size_t j = 0; j < o.x_tops.size(); ++j) {
            const std::int64_t xt = o.x_tops[j];
            if (xt < o.x0) throw ConfigError("--x-top values must be >= x0");
            const MonteCarloEstimate mc = simulate_exceedance(
                dist, o.x0, xt, o.runs,
                derive_key(g.seed, {static_cast<std::uint64_t>(StreamDomain::theory), i, j}));
            table.add({fmt_double(m), fmt_double(s0), std::to_string(xt - o.x0),
                       fmt_double(exceedance_bound(s0, o.x0, xt)), fmt_double(mc.p), fmt_double(mc.std_error)});
        }
    }
    table.write(g.out / "theory", g, hash);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batched bandits with crowd externalities"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    auto* seed = app.add_option("--seed", g.seed, "root seed of every random stream")->required();
    (void)seed;
    app.add_option("--out", g.out, "output directory");
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--format", g.format, "tabular output format")->check(CLI::IsMember({"csv", "json"}));

    GenerateOpts gen;
    auto* sg = app.add_subcommand("generate", "write random problem instances");
    sg->add_option("-n,--count", gen.count, "number of problems");
    sg->add_option("-k,--arms", gen.arms, "arms per problem");
    sg->add_option("--x-top", gen.x_top);
    sg->add_option("--x0", gen.x0);
    sg->add_option("--horizon", gen.horizon);
    sg->add_option("--gamma", gen.gamma);
    sg->add_option("--growth-cap", gen.growth_cap);

    SolveOpts sol;
    auto* ss = app.add_subcommand("solve", "solve the reduced MDP of a problem file");
    ss->add_option("problem", sol.problem, "problem JSON")->required();
    ss->add_option("--grid", sol.grid);
    ss->add_option("--actions", sol.actions);
    ss->add_option("--tolerance", sol.tolerance);

    SimulateOpts sim;
    auto* sm = app.add_subcommand("simulate", "roll out a policy on a problem file");
    sm->add_option("problem", sim.problem, "problem JSON")->required();
    sm->add_option("--policy", sim.policy)->check(CLI::IsMember({"ucb", "oracle"}));
    sm->add_option("--mode", sim.mode)->check(CLI::IsMember({"online", "batched"}));
    sm->add_option("--xi", sim.xi);
    sm->add_option("--delta", sim.delta);
    sm->add_flag("--strict-batch", sim.strict, "re-solve the optimistic plan for every subject");
    sm->add_option("--runs", sim.runs);
    sm->add_flag("--keep-observations", sim.keep_observations);

    ExperimentOpts ex;
    auto* se = app.add_subcommand("experiment", "regret experiment over many problems");
    se->add_option("--problems", ex.problems, "number of generated problems");
    se->add_option("--problem-dir", ex.problem_dir, "use the *.json problems of a directory instead");
    se->add_option("-k,--arms", ex.arms);
    se->add_option("--x-top", ex.x_top);
    se->add_option("--x0", ex.x0);
    se->add_option("--horizon", ex.horizon);
    se->add_option("--gamma", ex.gamma);
    se->add_option("--growth-cap", ex.growth_cap);
    se->add_option("--runs", ex.runs, "runs per side");
    se->add_option("--xi", ex.xis, "xi values")->delimiter(',');
    se->add_option("--delta", ex.delta);
    se->add_option("--mode", ex.mode)->check(CLI::IsMember({"online", "batched", "both"}));
    se->add_flag("--strict-batch", ex.strict);
    se->add_option("--trace-runs", ex.trace_runs, "write traces of the first N runs");
    se->add_option("--oracle-grid", ex.oracle_grid);
    se->add_option("--oracle-actions", ex.oracle_actions);
    se->add_option("--ucb-grid", ex.ucb_grid);
    se->add_option("--ucb-actions", ex.ucb_actions);

    TheoryOpts th;
    auto* st = app.add_subcommand("theory-check", "exceedance bound vs Monte-Carlo");
    st->add_option("--m", th.means)->delimiter(',');
    st->add_option("--x0", th.x0);
    st->add_option("--x-top", th.x_tops)->delimiter(',');
    st->add_option("--runs", th.runs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sg) cmd_generate(g, gen);
        if (*ss) cmd_solve(g, sol);
        if (*sm) cmd_simulate(g, sim);
        if (*se) cmd_experiment(g, ex);
        if (*st) cmd_theory(g, th);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
