// Output writers: deterministic CSV tables, line-delimited run logs and
// belief snapshots, and the per-directory run manifest.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svbp/graph.hpp"
#include "svbp/planning/mpc.hpp"

namespace svbp {

// Fixed %.10g formatting keeps reruns byte-identical.
inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns) : out_(path) {
        require(out_.good(), "CsvWriter: cannot open " + path);
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

// One record per node per iteration: iteration, node id, particles, weights.
inline void append_belief_snapshot(std::ostream& out, long iteration, int node,
                                   const ParticleBelief& belief) {
    nlohmann::json j;
    j["iteration"] = iteration;
    j["node"] = node;
    j["particles"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < belief.particles.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < belief.particles.cols(); ++c)
            row.push_back(belief.particles(i, c));
        j["particles"].push_back(row);
    }
    j["weights"] = nlohmann::json::array();
    const Eigen::VectorXd w = belief.weights();
    for (Eigen::Index i = 0; i < w.size(); ++i) j["weights"].push_back(w(i));
    out << j.dump() << "\n";
}

// One record per MPC step: step, per-robot state, executed control,
// best-particle cost, and optionally the particle snapshot.
inline void append_step_record(std::ostream& out, const StepRecord& rec) {
    nlohmann::json j;
    j["step"] = rec.step;
    j["states"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < rec.states.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < rec.states.cols(); ++c) row.push_back(rec.states(r, c));
        j["states"].push_back(row);
    }
    j["controls"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < rec.controls.rows(); ++r)
        j["controls"].push_back({rec.controls(r, 0), rec.controls(r, 1)});
    j["best_cost"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < rec.best_cost.size(); ++r)
        j["best_cost"].push_back(rec.best_cost(r));
    if (!rec.particle_snapshot.empty()) {
        j["particles"] = nlohmann::json::array();
        for (const auto& X : rec.particle_snapshot) {
            nlohmann::json nodej = nlohmann::json::array();
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index c = 0; c < X.cols(); ++c) row.push_back(X(i, c));
                nodej.push_back(row);
            }
            j["particles"].push_back(nodej);
        }
    }
    out << j.dump() << "\n";
}

inline void write_run_log(const std::string& path, const PlanRunLog& log) {
    std::ofstream out(path);
    require(out.good(), "write_run_log: cannot open " + path);
    nlohmann::json header;
    header["method"] = log.method;
    header["scenario"] = log.scenario_name;
    header["dt"] = log.dt;
    header["solver_failures"] = log.solver_failures;
    out << header.dump() << "\n";
    for (const auto& rec : log.steps) append_step_record(out, rec);
}

// Every output directory gets exactly one manifest describing the run.
struct RunManifest {
    std::string command_line;
    nlohmann::json effective_config;
    std::uint64_t seed = 0;
    std::string artifact_version;
    std::vector<std::string> outputs;
    double wall_time_seconds = 0.0;
};

inline std::uint64_t config_hash(const nlohmann::json& config) {
    return detail::fnv1a(config.dump());
}

inline void write_manifest(const std::string& dir, const RunManifest& manifest) {
    nlohmann::json j;
    j["command_line"] = manifest.command_line;
    j["config"] = manifest.effective_config;
    j["config_hash"] = config_hash(manifest.effective_config);
    j["seed"] = manifest.seed;
    j["artifact_version"] = manifest.artifact_version;
    j["outputs"] = manifest.outputs;
    j["wall_time_seconds"] = manifest.wall_time_seconds;
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    require(out.good(), "write_manifest: cannot open manifest in " + dir);
    out << j.dump(2) << "\n";
}

}  // namespace svbp
