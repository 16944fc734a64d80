// Versioned JSON scenario files covering both benchmark families, plus
// schema validation. The schema is stable and documented in the README;
// downstream tooling needs no code from this repo to consume it.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svbp/perception.hpp"
#include "svbp/planning/scenario.hpp"
#include "svbp/swarm.hpp"

namespace svbp {

constexpr int kScenarioSchemaVersion = 1;

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace scenario_json {

using nlohmann::json;

inline json region_to_json(const Region& r) { return json::array({r.xmin, r.xmax, r.ymin, r.ymax}); }

inline Region region_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw SchemaError("region must be [xmin,xmax,ymin,ymax]");
    return Region{j[0], j[1], j[2], j[3]};
}

inline json vec_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Eigen::VectorXd vec_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i];
    return v;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec_to_json(m.row(i)));
    return out;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, int cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (static_cast<int>(j[i].size()) != cols) throw SchemaError("ragged matrix row");
        for (int c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][c];
    }
    return m;
}

}  // namespace scenario_json

// ---------------------------------------------------------------------------
// planning scenarios

inline nlohmann::json planning_to_json(const PlanningScenario& sc,
                                       const TransportConfig& transport = {}) {
    using nlohmann::json;
    namespace sj = scenario_json;
    json j;
    j["schema_version"] = kScenarioSchemaVersion;
    j["kind"] = "planning";
    j["name"] = sc.name;
    j["environment"]["bounds"] = sj::region_to_json(sc.env.bounds);
    j["environment"]["wall_bounds"] = sc.env.wall_bounds;
    j["environment"]["circles"] = json::array();
    for (const auto& c : sc.env.circles)
        j["environment"]["circles"].push_back(
            {{"center", {c.center(0), c.center(1)}}, {"radius", c.radius}});
    j["environment"]["boxes"] = json::array();
    for (const auto& b : sc.env.boxes)
        j["environment"]["boxes"].push_back(
            {{"min", {b.min(0), b.min(1)}}, {"max", {b.max(0), b.max(1)}}});
    j["dynamics"] = {{"kind", sc.model.kind == DynamicsKind::DoubleIntegrator
                                  ? "double_integrator"
                                  : "single_integrator"},
                     {"dt", sc.model.dt},
                     {"horizon", sc.model.horizon},
                     {"control_limit", sc.model.control_limit}};
    j["robots"] = json::array();
    for (const auto& r : sc.robots)
        j["robots"].push_back(
            {{"start", sj::vec_to_json(r.start)}, {"goal", {r.goal(0), r.goal(1)}}});
    j["weights"] = {{"w_u", sc.weights.w_u},     {"w_g", sc.weights.w_g},
                    {"w_T", sc.weights.w_T},     {"w_v", sc.weights.w_v},
                    {"w_o", sc.weights.w_o},     {"obstacle_margin", sc.weights.obstacle_margin},
                    {"gamma", sc.weights.gamma}};
    j["collision"] = {{"r", sc.collision.r},
                      {"beta", sc.collision.beta},
                      {"alpha0", sc.collision.alpha0}};
    j["success_threshold"] = sc.success_threshold;
    j["collision_diameter"] = sc.collision_diameter;
    j["max_steps"] = sc.max_steps;
    j["planner"] = {{"particles", sc.planner.particles},
                    {"iters_per_step", sc.planner.iters_per_step},
                    {"init_iters", sc.planner.init_iters},
                    {"step_size", sc.planner.step_size},
                    {"step_decay", sc.planner.step_decay},
                    {"message_damping", sc.planner.message_damping},
                    {"init_control_sigma_frac", sc.planner.init_control_sigma_frac}};
    j["gabp"] = {{"iterations", sc.gabp.iterations},
                 {"relinearize_every", sc.gabp.relinearize_every},
                 {"damping", sc.gabp.damping}};
    j["harness"] = {{"mode", transport.mode == TransportConfig::Mode::LoopbackSockets
                                 ? "loopback_sockets"
                                 : "in_process_channels"},
                    {"drop_probability", transport.drop_probability},
                    {"latency_rounds_min", transport.latency_rounds_min},
                    {"latency_rounds_max", transport.latency_rounds_max}};
    return j;
}

inline PlanningScenario planning_from_json(const nlohmann::json& j,
                                           TransportConfig* transport_out = nullptr) {
    namespace sj = scenario_json;
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw SchemaError("missing schema_version");
    if (j["schema_version"] != kScenarioSchemaVersion)
        throw SchemaError("unsupported schema_version " + j["schema_version"].dump());
    if (j.value("kind", "") != "planning") throw SchemaError("kind must be \"planning\"");

    PlanningScenario sc;
    sc.name = j.value("name", "unnamed");
    const auto& env = j.at("environment");
    sc.env.bounds = sj::region_from_json(env.at("bounds"));
    sc.env.wall_bounds = env.value("wall_bounds", true);
    for (const auto& c : env.value("circles", nlohmann::json::array()))
        sc.env.circles.push_back(
            {Eigen::Vector2d(c.at("center")[0], c.at("center")[1]), c.at("radius")});
    for (const auto& b : env.value("boxes", nlohmann::json::array()))
        sc.env.boxes.push_back({Eigen::Vector2d(b.at("min")[0], b.at("min")[1]),
                                Eigen::Vector2d(b.at("max")[0], b.at("max")[1])});
    const auto& dyn = j.at("dynamics");
    const std::string kind = dyn.at("kind");
    if (kind == "double_integrator") sc.model.kind = DynamicsKind::DoubleIntegrator;
    else if (kind == "single_integrator") sc.model.kind = DynamicsKind::SingleIntegrator;
    else throw SchemaError("unknown dynamics kind: " + kind);
    sc.model.dt = dyn.at("dt");
    sc.model.horizon = dyn.at("horizon");
    sc.model.control_limit = dyn.at("control_limit");
    for (const auto& r : j.at("robots")) {
        RobotSpec spec;
        spec.start = sj::vec_from_json(r.at("start"));
        spec.goal = Eigen::Vector2d(r.at("goal")[0], r.at("goal")[1]);
        sc.robots.push_back(std::move(spec));
    }
    const auto& w = j.at("weights");
    sc.weights.w_u = w.at("w_u");
    sc.weights.w_g = w.at("w_g");
    sc.weights.w_T = w.at("w_T");
    sc.weights.w_v = w.at("w_v");
    sc.weights.w_o = w.at("w_o");
    sc.weights.obstacle_margin = w.at("obstacle_margin");
    sc.weights.gamma = w.at("gamma");
    const auto& col = j.at("collision");
    sc.collision.r = col.at("r");
    sc.collision.beta = col.at("beta");
    sc.collision.alpha0 = col.at("alpha0");
    sc.success_threshold = j.value("success_threshold", 0.30);
    sc.collision_diameter = j.value("collision_diameter", 0.30);
    sc.max_steps = j.value("max_steps", 400);
    if (j.contains("planner")) {
        const auto& p = j["planner"];
        sc.planner.particles = p.value("particles", sc.planner.particles);
        sc.planner.iters_per_step = p.value("iters_per_step", sc.planner.iters_per_step);
        sc.planner.init_iters = p.value("init_iters", sc.planner.init_iters);
        sc.planner.step_size = p.value("step_size", sc.planner.step_size);
        sc.planner.step_decay = p.value("step_decay", sc.planner.step_decay);
        sc.planner.message_damping = p.value("message_damping", sc.planner.message_damping);
        sc.planner.init_control_sigma_frac =
            p.value("init_control_sigma_frac", sc.planner.init_control_sigma_frac);
    }
    if (j.contains("gabp")) {
        const auto& g = j["gabp"];
        sc.gabp.iterations = g.value("iterations", sc.gabp.iterations);
        sc.gabp.relinearize_every = g.value("relinearize_every", sc.gabp.relinearize_every);
        sc.gabp.damping = g.value("damping", sc.gabp.damping);
    }
    if (transport_out != nullptr && j.contains("harness")) {
        const auto& h = j["harness"];
        const std::string mode = h.value("mode", "in_process_channels");
        if (mode == "loopback_sockets")
            transport_out->mode = TransportConfig::Mode::LoopbackSockets;
        else if (mode == "in_process_channels")
            transport_out->mode = TransportConfig::Mode::InProcessChannels;
        else
            throw SchemaError("unknown harness mode: " + mode);
        transport_out->drop_probability = h.value("drop_probability", 0.0);
        transport_out->latency_rounds_min = h.value("latency_rounds_min", 0);
        transport_out->latency_rounds_max = h.value("latency_rounds_max", 0);
    }
    return sc;
}

// ---------------------------------------------------------------------------
// perception scenarios

inline nlohmann::json perception_to_json(const PerceptionScenario& sc) {
    using nlohmann::json;
    namespace sj = scenario_json;
    json j;
    j["schema_version"] = kScenarioSchemaVersion;
    j["kind"] = "perception";
    j["region"] = sj::region_to_json(sc.region);
    j["connect_radius"] = sc.connect_radius;
    j["alpha"] = sc.alpha;
    j["seed"] = sc.seed;
    j["total_noise_components"] = sc.total_noise_components;
    j["true_positions"] = sj::matrix_to_json(sc.true_positions);
    j["observations"] = json::array();
    for (const auto& obs : sc.observations)
        j["observations"].push_back(
            {{"means", sj::matrix_to_json(obs.means)}, {"sigma", obs.sigma}});
    j["edges"] = json::array();
    for (const auto& e : sc.edges) {
        j["edges"].push_back({e.first, e.second});
    }
    j["observed_distances"] = json::array();
    for (const auto& [edge, value] : sc.observed_distance)
        j["observed_distances"].push_back({{"edge", {edge.first, edge.second}}, {"value", value}});
    return j;
}

inline PerceptionScenario perception_from_json(const nlohmann::json& j) {
    namespace sj = scenario_json;
    if (!j.contains("schema_version") || j["schema_version"] != kScenarioSchemaVersion)
        throw SchemaError("unsupported or missing schema_version");
    if (j.value("kind", "") != "perception") throw SchemaError("kind must be \"perception\"");
    PerceptionScenario sc;
    sc.region = sj::region_from_json(j.at("region"));
    sc.connect_radius = j.at("connect_radius");
    sc.alpha = j.at("alpha");
    sc.seed = j.value("seed", 0ULL);
    sc.total_noise_components = j.value("total_noise_components", 0);
    sc.true_positions = sj::matrix_from_json(j.at("true_positions"), 2);
    for (const auto& o : j.at("observations")) {
        GmmObservation obs;
        obs.means = sj::matrix_from_json(o.at("means"), 2);
        obs.sigma = o.at("sigma");
        sc.observations.push_back(std::move(obs));
    }
    for (const auto& e : j.at("edges")) sc.edges.push_back({e[0], e[1]});
    for (const auto& d : j.at("observed_distances"))
        sc.observed_distance[{d.at("edge")[0], d.at("edge")[1]}] = d.at("value");
    return sc;
}

// ---------------------------------------------------------------------------

// Schema plus geometric validation; returns all violations.
inline std::vector<std::string> validate_scenario_json(const nlohmann::json& j) {
    std::vector<std::string> violations;
    try {
        const std::string kind = j.value("kind", "");
        if (kind == "planning") {
            const PlanningScenario sc = planning_from_json(j);
            for (auto& v : sc.validate()) violations.push_back(v);
        } else if (kind == "perception") {
            const PerceptionScenario sc = perception_from_json(j);
            if (sc.true_positions.rows() < 1) violations.push_back("no nodes");
            if (static_cast<int>(sc.observations.size()) != sc.true_positions.rows())
                violations.push_back("observation count does not match node count");
            if (!detail::radius_graph_connected(sc.true_positions, sc.connect_radius))
                violations.push_back("radius graph is not connected");
            for (Eigen::Index s = 0; s < sc.true_positions.rows(); ++s)
                if (!sc.region.contains(sc.true_positions(s, 0), sc.true_positions(s, 1)))
                    violations.push_back("node " + std::to_string(s) + " outside the region");
            for (const auto& e : sc.edges)
                if (!sc.observed_distance.count(e))
                    violations.push_back("edge (" + std::to_string(e.first) + "," +
                                         std::to_string(e.second) + ") has no observed distance");
        } else {
            violations.push_back("unknown scenario kind: \"" + kind + "\"");
        }
    } catch (const std::exception& e) {
        violations.push_back(e.what());
    }
    return violations;
}

inline nlohmann::json load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scenario file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

inline void save_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace svbp
