// Command-line entry point: scenario generation and validation, the
// perception benchmark sweeps, and the planning benchmark in centralized or
// decentralized execution. Every command is deterministic given --seed and
// its configuration; each output directory carries a manifest.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svbp/io.hpp"
#include "svbp/perception.hpp"
#include "svbp/planning/gabp_planner.hpp"
#include "svbp/planning/mpc.hpp"
#include "svbp/scenario_io.hpp"
#include "svbp/swarm.hpp"
#include "svbp/version.hpp"

namespace fs = std::filesystem;
using namespace svbp;

namespace {

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

// --out is resolved under SVBP_OUT_ROOT when that is set and the path is
// relative.
fs::path resolve_out_dir(const std::string& out) {
    fs::path p(out);
    if (p.is_relative()) {
        if (const char* root = std::getenv("SVBP_OUT_ROOT")) p = fs::path(root) / p;
    }
    fs::create_directories(p);
    return p;
}

int run_perception(const std::string& command_line, SweepConfig cfg, const std::string& out,
                   bool snapshots) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = resolve_out_dir(out);

    std::ofstream snapshot_stream;
    SweepObserver observer;
    if (snapshots) {
        snapshot_stream.open(dir / "snapshots.jsonl");
        observer = [&](const SweepCell& cell, long iteration,
                       const std::vector<ParticleBelief>& beliefs) {
            for (std::size_t node = 0; node < beliefs.size(); ++node) {
                snapshot_stream << "{\"method\":\"" << cell.method << "\",\"noise\":" << cell.noise
                                << ",\"particles\":" << cell.particles << ",\"run\":" << cell.run
                                << ",";
                std::ostringstream rest;
                append_belief_snapshot(rest, iteration, static_cast<int>(node), beliefs[node]);
                snapshot_stream << rest.str().substr(1);  // splice into the outer object
            }
        };
    }

    const std::vector<SweepCell> cells = run_sweep(cfg, observer);

    std::vector<std::string> outputs;
    {
        CsvWriter metrics((dir / "metrics.csv").string(),
                          {"method", "noise", "particles", "run", "error", "mmd", "seconds"});
        for (const auto& c : cells)
            metrics.row({c.method, std::to_string(c.noise), std::to_string(c.particles),
                         std::to_string(c.run), csv_number(c.error),
                         std::isnan(c.mmd) ? "" : csv_number(c.mmd), csv_number(c.seconds)});
        outputs.push_back("metrics.csv");
    }
    // plot-ready aggregates; timing columns are deliberately excluded so
    // reruns are byte-identical
    auto mean_over_runs = [&](const std::string& method, int noise, int particles,
                              bool use_mmd) -> double {
        double acc = 0.0;
        int count = 0;
        for (const auto& c : cells)
            if (c.method == method && c.noise == noise && c.particles == particles) {
                acc += use_mmd ? c.mmd : c.error;
                ++count;
            }
        return count ? acc / count : std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<std::string> methods;
    if (cfg.run_svbp) methods.push_back("svbp");
    if (cfg.run_pbp) methods.push_back("pbp");
    const int base_particles = cfg.particle_counts.front();
    {
        CsvWriter fig3((dir / "fig3.csv").string(), {"noise", "method", "mean_error"});
        for (int noise : cfg.noise_levels)
            for (const auto& m : methods)
                fig3.row({std::to_string(noise), m,
                          csv_number(mean_over_runs(m, noise, base_particles, false))});
        outputs.push_back("fig3.csv");
    }
    if (cfg.compute_mmd) {
        CsvWriter fig4((dir / "fig4.csv").string(), {"noise", "method", "mean_mmd"});
        for (int noise : cfg.noise_levels)
            for (const auto& m : methods)
                fig4.row({std::to_string(noise), m,
                          csv_number(mean_over_runs(m, noise, base_particles, true))});
        outputs.push_back("fig4.csv");
    }
    if (cfg.particle_counts.size() > 1) {
        CsvWriter fig6((dir / "fig6.csv").string(),
                       {"particles", "noise", "method", "mean_error"});
        for (int particles : cfg.particle_counts)
            for (int noise : cfg.noise_levels)
                for (const auto& m : methods)
                    fig6.row({std::to_string(particles), std::to_string(noise), m,
                              csv_number(mean_over_runs(m, noise, particles, false))});
        outputs.push_back("fig6.csv");
    }
    if (snapshots) outputs.push_back("snapshots.jsonl");

    RunManifest manifest;
    manifest.command_line = command_line;
    manifest.effective_config = {
        {"noise_levels", cfg.noise_levels},
        {"particle_counts", cfg.particle_counts},
        {"runs", cfg.runs},
        {"svbp", cfg.run_svbp},
        {"pbp", cfg.run_pbp},
        {"mmd", cfg.compute_mmd},
        {"svbp_iterations", cfg.svbp_iterations},
        {"pbp_iterations", cfg.pbp_iterations},
        {"svbp_step", cfg.svbp_step},
        {"pbp_jitter", cfg.pbp_jitter},
        {"alpha", cfg.scenario.alpha},
        {"gmm_sigma", cfg.scenario.gmm_sigma},
        {"distance_noise_sigma", cfg.scenario.distance_noise_sigma},
        {"gibbs",
         {{"num_samples", cfg.gibbs.num_samples},
          {"burn_in", cfg.gibbs.burn_in},
          {"thinning", cfg.gibbs.thinning},
          {"grid_resolution", cfg.gibbs.grid_resolution}}},
        {"seed", cfg.seed},
        {"jobs", cfg.jobs}};
    manifest.seed = cfg.seed;
    manifest.artifact_version = kVersion;
    manifest.outputs = outputs;
    manifest.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(dir.string(), manifest);
    std::cout << "wrote " << outputs.size() + 1 << " files to " << dir.string() << "\n";
    return 0;
}

int run_plan(const std::string& command_line, const PlanningScenario& scenario,
             const TransportConfig& transport, const std::string& method, bool decentralized,
             int runs, std::uint64_t seed, const std::string& out, int snapshot_stride) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = resolve_out_dir(out);
    std::vector<std::string> outputs;

    std::vector<RunMetrics> metrics;
    std::vector<PlanRunLog> logs;
    for (int run = 0; run < runs; ++run) {
        const std::uint64_t run_seed =
            Rng(seed).child("run", static_cast<std::uint64_t>(run))
                .uniform_int(0, std::numeric_limits<std::int64_t>::max() - 1);
        PlanRunLog log;
        if (method == "gabp") {
            log = GabpPlanner(scenario).run(run_seed);
        } else if (decentralized) {
            TransportConfig t = transport;
            t.seed = run_seed ^ 0x5bf03635ULL;
            log = spawn_swarm(scenario, t, run_seed).log;
        } else {
            log = SvbpPlanner(scenario).run(run_seed, snapshot_stride);
        }
        const std::string log_name = "runlog_" + std::to_string(run) + ".jsonl";
        write_run_log((dir / log_name).string(), log);
        outputs.push_back(log_name);
        metrics.push_back(evaluate_run(log, scenario));
        logs.push_back(std::move(log));
    }

    {
        CsvWriter passrate((dir / "passrate.csv").string(), {"threshold", "method", "pass_rate"});
        for (int t = 0; t <= 20; ++t) {
            const double threshold = 0.05 * t;
            double acc = 0.0;
            for (const auto& m : metrics) acc += m.pass_rate(threshold);
            passrate.row({csv_number(threshold), method, csv_number(acc / runs)});
        }
        outputs.push_back("passrate.csv");
    }
    {
        CsvWriter pathtime((dir / "pathtime.csv").string(),
                           {"method", "run", "robot", "path_time"});
        for (int run = 0; run < runs; ++run)
            for (std::size_t r = 0; r < metrics[static_cast<std::size_t>(run)].path_time.size();
                 ++r) {
                const double pt = metrics[static_cast<std::size_t>(run)].path_time[r];
                if (!std::isfinite(pt)) continue;  // only successful robots
                pathtime.row({method, std::to_string(run), std::to_string(r), csv_number(pt)});
            }
        outputs.push_back("pathtime.csv");
    }
    {
        CsvWriter summary((dir / "summary.csv").string(),
                          {"method", "run", "pass_at_threshold", "collisions", "steps",
                           "solver_failures"});
        for (int run = 0; run < runs; ++run) {
            const auto& m = metrics[static_cast<std::size_t>(run)];
            summary.row({method, std::to_string(run),
                         csv_number(m.pass_rate(scenario.success_threshold)),
                         std::to_string(std::count(m.collided.begin(), m.collided.end(), true)),
                         std::to_string(m.steps),
                         std::to_string(logs[static_cast<std::size_t>(run)].solver_failures)});
        }
        outputs.push_back("summary.csv");
    }

    RunManifest manifest;
    manifest.command_line = command_line;
    manifest.effective_config = planning_to_json(scenario, transport);
    manifest.effective_config["method"] = method;
    manifest.effective_config["decentralized"] = decentralized;
    manifest.effective_config["runs"] = runs;
    manifest.seed = seed;
    manifest.artifact_version = kVersion;
    manifest.outputs = outputs;
    manifest.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(dir.string(), manifest);
    std::cout << "wrote " << outputs.size() + 1 << " files to " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stein variational belief propagation benchmarks"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    const std::string command_line = join_args(argc, argv);

    // ----- perception -----
    auto* perception = app.add_subcommand("perception", "multi-robot localization sweep");
    SweepConfig sweep;
    std::string p_out = "out/perception";
    std::string p_method = "both";
    bool p_snapshots = false;
    perception->add_option("--noise-levels", sweep.noise_levels,
                           "total noisy components per sweep level");
    perception->add_option("--particles", sweep.particle_counts, "particle counts");
    perception->add_option("--runs", sweep.runs, "runs per cell");
    perception->add_option("--method", p_method)->check(CLI::IsMember({"svbp", "pbp", "both"}));
    perception->add_option("--seed", sweep.seed);
    perception->add_option("--out", p_out)->required();
    perception->add_flag("--mmd", sweep.compute_mmd, "compute MMD against Gibbs ground truth");
    perception->add_option("--svbp-iterations", sweep.svbp_iterations);
    perception->add_option("--pbp-iterations", sweep.pbp_iterations);
    perception->add_option("--svbp-step", sweep.svbp_step);
    perception->add_option("--pbp-jitter", sweep.pbp_jitter);
    perception->add_option("--alpha", sweep.scenario.alpha);
    perception->add_option("--gmm-sigma", sweep.scenario.gmm_sigma);
    perception->add_option("--distance-noise", sweep.scenario.distance_noise_sigma);
    perception->add_option("--gibbs-samples", sweep.gibbs.num_samples);
    perception->add_option("--gibbs-burn-in", sweep.gibbs.burn_in);
    perception->add_option("--gibbs-thinning", sweep.gibbs.thinning);
    perception->add_option("--gibbs-grid", sweep.gibbs.grid_resolution);
    perception->add_option("--jobs", sweep.jobs, "parallel sweep cells");
    perception->add_flag("--snapshots", p_snapshots, "emit per-iteration particle snapshots");

    // ----- plan -----
    auto* plan = app.add_subcommand("plan", "multi-robot MPC benchmark");
    std::string scenario_arg;
    std::string plan_method = "svbp";
    std::string plan_out = "out/plan";
    std::string transport_mode = "in_process";
    bool decentralized = false;
    int plan_runs = 10;
    std::uint64_t plan_seed = 0;
    int snapshot_stride = 0;
    int override_particles = -1, override_iters = -1, override_max_steps = -1;
    double drop_probability = 0.0;
    int latency_min = 0, latency_max = 0;
    plan->add_option("--scenario", scenario_arg,
                     "scenario file or canonical name (circle8, circle3, circle-obstacle, "
                     "corridor4, scatter, crossing)")
        ->required();
    plan->add_option("--method", plan_method)->check(CLI::IsMember({"svbp", "gabp"}));
    plan->add_flag("--decentralized", decentralized, "run the swarm harness");
    plan->add_option("--runs", plan_runs);
    plan->add_option("--seed", plan_seed);
    plan->add_option("--out", plan_out)->required();
    plan->add_option("--drop-probability", drop_probability);
    plan->add_option("--latency-min", latency_min, "delivery delay lower bound, rounds");
    plan->add_option("--latency-max", latency_max, "delivery delay upper bound, rounds");
    plan->add_option("--transport", transport_mode)
        ->check(CLI::IsMember({"in_process", "loopback"}));
    plan->add_option("--particles", override_particles);
    plan->add_option("--iters-per-step", override_iters);
    plan->add_option("--max-steps", override_max_steps);
    plan->add_option("--snapshot-stride", snapshot_stride,
                     "record particle snapshots every N steps (centralized runs)");

    // ----- gen-scenario -----
    auto* gen = app.add_subcommand("gen-scenario", "write a canonical scenario file");
    std::string gen_name = "circle8";
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    int gen_noise = 16;
    gen->add_option("--name", gen_name,
                    "circle8 | circle3 | circle-obstacle | corridor4 | scatter | crossing | "
                    "perception");
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--seed", gen_seed, "seed (perception scenarios)");
    gen->add_option("--noise", gen_noise, "noisy components (perception scenarios)");

    // ----- validate-scenario -----
    auto* validate = app.add_subcommand("validate-scenario", "check a scenario file");
    std::string validate_path;
    validate->add_option("file", validate_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*perception) {
            if (p_method == "svbp") sweep.run_pbp = false;
            if (p_method == "pbp") sweep.run_svbp = false;
            return run_perception(command_line, sweep, p_out, p_snapshots);
        }
        if (*plan) {
            PlanningScenario sc;
            TransportConfig transport;
            if (fs::exists(scenario_arg)) {
                sc = planning_from_json(load_scenario_file(scenario_arg), &transport);
            } else {
                sc = scenarios::by_name(scenario_arg);
            }
            // CLI flags override scenario-file values override defaults
            if (override_particles > 0) sc.planner.particles = override_particles;
            if (override_iters > 0) sc.planner.iters_per_step = override_iters;
            if (override_max_steps > 0) sc.max_steps = override_max_steps;
            if (plan->count("--drop-probability")) transport.drop_probability = drop_probability;
            if (plan->count("--latency-min")) transport.latency_rounds_min = latency_min;
            if (plan->count("--latency-max")) transport.latency_rounds_max = latency_max;
            if (plan->count("--transport"))
                transport.mode = transport_mode == "loopback"
                                     ? TransportConfig::Mode::LoopbackSockets
                                     : TransportConfig::Mode::InProcessChannels;
            return run_plan(command_line, sc, transport, plan_method, decentralized, plan_runs,
                            plan_seed, plan_out, snapshot_stride);
        }
        if (*gen) {
            if (gen_name == "perception") {
                const PerceptionScenario sc = generate_scenario(gen_noise, gen_seed);
                save_json_file(gen_out, perception_to_json(sc));
            } else {
                save_json_file(gen_out, planning_to_json(scenarios::by_name(gen_name)));
            }
            std::cout << "wrote " << gen_out << "\n";
            return 0;
        }
        if (*validate) {
            const auto violations = validate_scenario_json(load_scenario_file(validate_path));
            if (violations.empty()) {
                std::cout << "ok\n";
                return 0;
            }
            for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
