// Receding-horizon execution: per step, a few SVBP iterations over the
// fully connected robot graph, execute each robot's best first control,
// then warm-start by shifting every particle one step.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svbp/planning/scenario.hpp"
#include "svbp/rng.hpp"
#include "svbp/svbp.hpp"

namespace svbp {

struct StepRecord {
    int step = 0;
    Eigen::MatrixXd states;    // R x state_dim, before executing
    Eigen::MatrixXd controls;  // R x 2, executed (clamped)
    Eigen::VectorXd best_cost; // per robot, -log phi of the selected trajectory
    std::vector<Eigen::MatrixXd> particle_snapshot;  // empty unless stride hit
};

struct PlanRunLog {
    std::string method = "svbp";
    std::string scenario_name;
    Eigen::MatrixXd initial_states;  // R x state_dim
    std::vector<StepRecord> steps;
    int solver_failures = 0;
    double dt = 0.1;
};

struct RunMetrics {
    std::vector<double> final_error;   // per robot
    std::vector<bool> collided;        // any executed-state violation
    std::vector<double> path_time;     // NaN unless successful
    int steps = 0;

    double pass_rate(double threshold) const {
        if (final_error.empty()) return 0.0;
        int passed = 0;
        for (std::size_t r = 0; r < final_error.size(); ++r)
            if (!collided[r] && final_error[r] <= threshold) ++passed;
        return static_cast<double>(passed) / static_cast<double>(final_error.size());
    }
};

// Checks every executed state of the log against inter-robot clearance and
// obstacle penetration, and derives pass/path-time metrics.
inline RunMetrics evaluate_run(const PlanRunLog& log, const PlanningScenario& sc) {
    RunMetrics m;
    const int R = sc.num_robots();
    m.final_error.assign(static_cast<std::size_t>(R), 0.0);
    m.collided.assign(static_cast<std::size_t>(R), false);
    m.path_time.assign(static_cast<std::size_t>(R),
                       std::numeric_limits<double>::quiet_NaN());
    m.steps = static_cast<int>(log.steps.size());
    if (log.steps.empty()) return m;

    std::vector<int> first_inside(static_cast<std::size_t>(R), -1);
    for (const auto& rec : log.steps) {
        for (int a = 0; a < R; ++a) {
            const Eigen::Vector2d pa = rec.states.row(a).head<2>();
            if (sc.env.signed_distance(pa) < 0.0) m.collided[static_cast<std::size_t>(a)] = true;
            for (int b = a + 1; b < R; ++b) {
                const Eigen::Vector2d pb = rec.states.row(b).head<2>();
                if ((pa - pb).norm() < sc.collision_diameter) {
                    m.collided[static_cast<std::size_t>(a)] = true;
                    m.collided[static_cast<std::size_t>(b)] = true;
                }
            }
            const double err = (pa - sc.robots[static_cast<std::size_t>(a)].goal).norm();
            if (err <= sc.success_threshold && first_inside[static_cast<std::size_t>(a)] < 0)
                first_inside[static_cast<std::size_t>(a)] = rec.step;
        }
    }
    const auto& last = log.steps.back();
    for (int r = 0; r < R; ++r) {
        m.final_error[static_cast<std::size_t>(r)] =
            (last.states.row(r).head<2>().transpose() - sc.robots[static_cast<std::size_t>(r)].goal)
                .norm();
        const bool success = !m.collided[static_cast<std::size_t>(r)] &&
                             m.final_error[static_cast<std::size_t>(r)] <= sc.success_threshold &&
                             first_inside[static_cast<std::size_t>(r)] >= 0;
        if (success)
            m.path_time[static_cast<std::size_t>(r)] =
                log.dt * static_cast<double>(first_inside[static_cast<std::size_t>(r)]);
    }
    return m;
}

class SvbpPlanner {
public:
    explicit SvbpPlanner(PlanningScenario scenario) : sc_(std::move(scenario)) {
        const auto violations = sc_.validate();
        require(violations.empty(),
                "SvbpPlanner: invalid scenario: " + (violations.empty() ? "" : violations[0]));
    }

    const PlanningScenario& scenario() const { return sc_; }

    // Gaussian control-noise particle init, per-robot substream.
    std::vector<Eigen::MatrixXd> initial_particles(std::uint64_t seed) const {
        std::vector<Eigen::MatrixXd> init;
        const double sigma = sc_.planner.init_control_sigma_frac * sc_.model.control_limit;
        for (int r = 0; r < sc_.num_robots(); ++r) {
            Rng rng = Rng(seed).child("plan-init", static_cast<std::uint64_t>(r));
            init.push_back(
                rng.normal_matrix(sc_.planner.particles, sc_.model.trajectory_dim(), 0.0, sigma));
        }
        return init;
    }

    // Builds the fully connected trajectory graph for the given world state.
    MrfGraph build_graph(const Eigen::MatrixXd& states) const {
        MrfGraph g(sc_.num_robots());
        for (int r = 0; r < sc_.num_robots(); ++r)
            g.set_unary(r, std::make_shared<TrajectoryUnary>(
                               sc_.model, sc_.env, states.row(r).transpose(),
                               sc_.robots[static_cast<std::size_t>(r)].goal, sc_.weights));
        for (int a = 0; a < sc_.num_robots(); ++a)
            for (int b = a + 1; b < sc_.num_robots(); ++b)
                g.add_edge(a, b, std::make_shared<CollisionPairwise>(
                                     sc_.model, states.row(a).transpose(),
                                     states.row(b).transpose(), sc_.collision));
        return g;
    }

    SvbpConfig solver_config(const Eigen::MatrixXd& states, int iterations) const {
        SvbpConfig cfg;
        cfg.num_particles = sc_.planner.particles;
        cfg.num_iterations = iterations;
        cfg.step = StepPolicy{StepPolicy::Mode::Adaptive, sc_.planner.step_size,
                              sc_.planner.step_decay};
        cfg.message_damping = sc_.planner.message_damping;
        cfg.num_threads = sc_.planner.num_threads;
        cfg.node_kernels.clear();
        for (int r = 0; r < sc_.num_robots(); ++r)
            cfg.node_kernels.push_back(
                std::make_shared<TrajectoryKernel>(sc_.model, states.row(r).transpose()));
        return cfg;
    }

    // Full MPC run. snapshot_stride > 0 records particle sets every that
    // many steps. Termination: all robots within the success threshold, or
    // max_steps.
    PlanRunLog run(std::uint64_t seed, int snapshot_stride = 0) const {
        PlanRunLog log;
        log.method = "svbp";
        log.scenario_name = sc_.name;
        log.dt = sc_.model.dt;
        const int R = sc_.num_robots();

        Eigen::MatrixXd states(R, sc_.model.state_dim());
        for (int r = 0; r < R; ++r) states.row(r) = sc_.robots[static_cast<std::size_t>(r)].start;
        log.initial_states = states;

        std::vector<Eigen::MatrixXd> particles = initial_particles(seed);

        for (int step = 0; step < sc_.max_steps; ++step) {
            const int iters = step == 0 ? sc_.planner.init_iters : sc_.planner.iters_per_step;
            const MrfGraph graph = build_graph(states);
            Eigen::MatrixXd executed = Eigen::MatrixXd::Zero(R, 2);
            Eigen::VectorXd best_cost = Eigen::VectorXd::Zero(R);
            bool solved = true;
            try {
                const SvbpEngine engine(graph, solver_config(states, iters));
                const SvbpState st = engine.run(particles);
                for (int r = 0; r < R; ++r) {
                    particles[static_cast<std::size_t>(r)] =
                        st.beliefs[static_cast<std::size_t>(r)].particles;
                    const Eigen::VectorXd best =
                        st.beliefs[static_cast<std::size_t>(r)].map_estimate();
                    executed.row(r) =
                        sc_.model.clamp_control(Eigen::Vector2d(best(0), best(1))).transpose();
                    Eigen::VectorXd lp;
                    graph.unary(r).evaluate_values(best.transpose(), lp);
                    best_cost(r) = -lp(0);
                }
            } catch (const NumericError&) {
                solved = false;  // hold zero controls this step
                ++log.solver_failures;
            }
            (void)solved;
            StepRecord rec;
            rec.step = step;
            rec.states = states;
            rec.controls = executed;
            rec.best_cost = best_cost;
            if (snapshot_stride > 0 && step % snapshot_stride == 0)
                rec.particle_snapshot = particles;
            log.steps.push_back(std::move(rec));

            for (int r = 0; r < R; ++r)
                states.row(r) = sc_.model.step(states.row(r), executed.row(r).transpose());

            // settle well inside the success threshold before stopping
            bool all_reached = true;
            for (int r = 0; r < R; ++r)
                if ((states.row(r).head<2>().transpose() -
                     sc_.robots[static_cast<std::size_t>(r)].goal)
                        .norm() > 0.5 * sc_.success_threshold) {
                    all_reached = false;
                    break;
                }
            if (all_reached || step + 1 == sc_.max_steps) break;

            // warm start: shift every particle's control sequence by one,
            // repeating the last control, and project back into the control box
            for (int r = 0; r < R; ++r) {
                auto& X = particles[static_cast<std::size_t>(r)];
                const int dim = sc_.model.trajectory_dim();
                X.block(0, 0, X.rows(), dim - 2) = X.block(0, 2, X.rows(), dim - 2).eval();
                X = X.cwiseMax(-sc_.model.control_limit).cwiseMin(sc_.model.control_limit);
            }
        }
        // terminal record: the post-execution world state
        StepRecord final_rec;
        final_rec.step = static_cast<int>(log.steps.size());
        final_rec.states = states;
        final_rec.controls = Eigen::MatrixXd::Zero(R, 2);
        final_rec.best_cost = Eigen::VectorXd::Zero(R);
        log.steps.push_back(std::move(final_rec));
        return log;
    }

private:
    PlanningScenario sc_;
};

}  // namespace svbp
