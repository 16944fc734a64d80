// Planning scenario model plus the canonical benchmark environments:
// antipodal circle swaps, a corridor exchange, a large central obstacle, a
// scattered-obstacle field, and a two-group crossing.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svbp/planning/dynamics.hpp"
#include "svbp/planning/environment.hpp"
#include "svbp/planning/potentials.hpp"

namespace svbp {

struct RobotSpec {
    Eigen::VectorXd start;  // full state
    Eigen::Vector2d goal;
};

struct PlannerParams {
    int particles = 32;
    int iters_per_step = 8;
    int init_iters = 15;  // warm-up before the first executed command
    double step_size = 0.05;
    double step_decay = 1.0;
    double message_damping = 0.0;
    double init_control_sigma_frac = 0.5;  // of the control limit
    int num_threads = 1;
};

struct GabpParams {
    int iterations = 20;
    int relinearize_every = 1;
    double damping = 0.4;
};

struct PlanningScenario {
    std::string name;
    Environment2D env;
    std::vector<RobotSpec> robots;
    DynamicsModel model = DynamicsModel::double_integrator();
    CostWeights weights;
    CollisionParams collision;
    double success_threshold = 0.30;
    double collision_diameter = 0.30;  // executed-state inter-robot clearance
    int max_steps = 400;
    PlannerParams planner;
    GabpParams gabp;

    int num_robots() const { return static_cast<int>(robots.size()); }

    // start/goal placement violations (inside bounds, outside obstacles)
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        if (robots.empty()) v.push_back("no robots");
        for (std::size_t r = 0; r < robots.size(); ++r) {
            const auto& spec = robots[r];
            if (spec.start.size() != model.state_dim())
                v.push_back("robot " + std::to_string(r) + ": start state dimension mismatch");
            if (spec.start.size() >= 2) {
                const Eigen::Vector2d p = spec.start.head<2>();
                if (!env.bounds.contains(p(0), p(1)))
                    v.push_back("robot " + std::to_string(r) + ": start outside bounds");
                if (env.signed_distance(p) <= 0.0)
                    v.push_back("robot " + std::to_string(r) + ": start inside an obstacle");
            }
            if (!env.bounds.contains(spec.goal(0), spec.goal(1)))
                v.push_back("robot " + std::to_string(r) + ": goal outside bounds");
            if (env.signed_distance(spec.goal) <= 0.0)
                v.push_back("robot " + std::to_string(r) + ": goal inside an obstacle");
        }
        if (model.horizon < 1 || model.dt <= 0.0) v.push_back("invalid dynamics model");
        if (collision.beta <= 0.0 || collision.beta > 1.0) v.push_back("beta out of (0, 1]");
        if (collision.r <= 0.0) v.push_back("collision radius must be positive");
        return v;
    }
};

namespace scenarios {

inline Eigen::VectorXd rest_state(const DynamicsModel& model, const Eigen::Vector2d& p) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(model.state_dim());
    s.head<2>() = p;
    return s;
}

// Robots evenly spaced on a circle with near-antipodal goals. A small
// angular swirl keeps the crossing realistic: exактly antipodal goals put
// every confrontation on a measure-zero symmetric tie.
inline PlanningScenario circle_swap(int num_robots = 8, double radius = 3.5,
                                    bool central_obstacle = false, double swirl = 0.08) {
    PlanningScenario sc;
    sc.name = central_obstacle ? "circle-obstacle" : "circle" + std::to_string(num_robots);
    sc.env.bounds = {0.0, 10.0, 0.0, 10.0};
    const Eigen::Vector2d center(5.0, 5.0);
    if (central_obstacle) sc.env.circles.push_back({center, 1.2});
    for (int r = 0; r < num_robots; ++r) {
        const double angle = 2.0 * M_PI * r / num_robots;
        const double goal_angle = angle + M_PI + swirl;
        RobotSpec spec;
        spec.start = rest_state(
            sc.model, center + radius * Eigen::Vector2d(std::cos(angle), std::sin(angle)));
        spec.goal =
            center + radius * Eigen::Vector2d(std::cos(goal_angle), std::sin(goal_angle));
        sc.robots.push_back(spec);
    }
    return sc;
}

// Two wall segments forming a horizontal corridor; robots trade sides.
inline PlanningScenario corridor_exchange() {
    PlanningScenario sc;
    sc.name = "corridor4";
    sc.env.bounds = {0.0, 10.0, 0.0, 10.0};
    sc.env.boxes.push_back({{3.5, 0.0}, {6.5, 3.8}});
    sc.env.boxes.push_back({{3.5, 6.2}, {6.5, 10.0}});
    const double ys[4] = {4.3, 4.8, 5.2, 5.7};
    for (int r = 0; r < 4; ++r) {
        RobotSpec spec;
        const bool left = r % 2 == 0;
        spec.start = rest_state(sc.model, {left ? 1.5 : 8.5, ys[r]});
        spec.goal = {left ? 8.5 : 1.5, ys[3 - r]};
        sc.robots.push_back(spec);
    }
    return sc;
}

// Scattered obstacle field with six crossing robots.
inline PlanningScenario scatter_field() {
    PlanningScenario sc;
    sc.name = "scatter";
    sc.env.bounds = {0.0, 10.0, 0.0, 10.0};
    sc.env.circles.push_back({{3.0, 3.0}, 0.6});
    sc.env.circles.push_back({{7.0, 3.2}, 0.5});
    sc.env.circles.push_back({{5.0, 5.6}, 0.7});
    sc.env.circles.push_back({{2.8, 7.2}, 0.5});
    sc.env.circles.push_back({{7.4, 7.0}, 0.6});
    sc.env.boxes.push_back({{4.4, 1.2}, {5.6, 2.0}});
    const Eigen::Vector2d starts[6] = {{1.0, 1.0}, {9.0, 1.0}, {1.0, 5.0},
                                       {9.0, 5.2}, {1.2, 9.0}, {9.0, 9.0}};
    const Eigen::Vector2d goals[6] = {{9.0, 9.2}, {1.0, 8.8}, {9.0, 4.8},
                                      {1.0, 5.4}, {8.8, 1.2}, {1.0, 1.4}};
    for (int r = 0; r < 6; ++r) {
        RobotSpec spec;
        spec.start = rest_state(sc.model, starts[r]);
        spec.goal = goals[r];
        sc.robots.push_back(spec);
    }
    return sc;
}

// Two groups crossing at right angles through the arena center.
inline PlanningScenario group_crossing() {
    PlanningScenario sc;
    sc.name = "crossing";
    sc.env.bounds = {0.0, 10.0, 0.0, 10.0};
    for (int r = 0; r < 4; ++r) {
        RobotSpec spec;
        spec.start = rest_state(sc.model, {1.0, 3.4 + 1.1 * r});
        spec.goal = {9.0, 3.4 + 1.1 * (3 - r)};
        sc.robots.push_back(spec);
    }
    for (int r = 0; r < 4; ++r) {
        RobotSpec spec;
        spec.start = rest_state(sc.model, {3.4 + 1.1 * r, 1.0});
        spec.goal = {3.4 + 1.1 * (3 - r), 9.0};
        sc.robots.push_back(spec);
    }
    return sc;
}

inline PlanningScenario by_name(const std::string& name) {
    if (name == "circle8") return circle_swap(8);
    if (name == "circle3") return circle_swap(3);
    if (name == "circle-obstacle") return circle_swap(8, 3.5, true);
    if (name == "corridor4") return corridor_exchange();
    if (name == "scatter") return scatter_field();
    if (name == "crossing") return group_crossing();
    throw std::invalid_argument("unknown canonical scenario: " + name);
}

inline std::vector<std::string> names() {
    return {"circle8", "circle3", "circle-obstacle", "corridor4", "scatter", "crossing"};
}

}  // namespace scenarios
}  // namespace svbp
