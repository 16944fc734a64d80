// GaBP planning baseline: one Gaussian node per robot trajectory, factors
// built from the same cost definitions as the particle planner (quadratic
// goal/effort terms stay exactly linear; obstacle and collision costs enter
// as scalar residuals), solved per MPC step with relinearization.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "svbp/gabp.hpp"
#include "svbp/planning/mpc.hpp"

namespace svbp {

class GabpPlanner {
public:
    explicit GabpPlanner(PlanningScenario scenario) : sc_(std::move(scenario)) {
        const auto violations = sc_.validate();
        require(violations.empty(),
                "GabpPlanner: invalid scenario: " + (violations.empty() ? "" : violations[0]));
    }

    const PlanningScenario& scenario() const { return sc_; }

    // Linear factor h(tau) = [selected stacked states; selected controls],
    // the selection keeping only positively weighted cost rows. Exact for
    // the quadratic terms, so relinearization is the identity on it.
    GaussianFactor quadratic_factor(int robot, const Eigen::VectorXd& theta0) const {
        const DynamicsModel& m = sc_.model;
        const int T = m.horizon;
        const int sd = m.state_dim();
        const Eigen::MatrixXd S = m.control_jacobian();
        const Eigen::MatrixXd drift =
            m.rollout(theta0, Eigen::MatrixXd::Zero(T, 2));  // affine part of the states

        std::vector<Eigen::VectorXd> rows;  // each: (coefficient row, target, weight)
        std::vector<double> offsets, targets, weights;
        std::vector<int> state_rows;  // index into stacked states, or -1 for control rows
        std::vector<int> control_cols;

        const Eigen::Vector2d goal = sc_.robots[static_cast<std::size_t>(robot)].goal;
        const CostWeights& w = sc_.weights;
        auto add_state_row = [&](int k, int dim_in_state, double target, double weight) {
            state_rows.push_back((k - 1) * sd + dim_in_state);
            control_cols.push_back(-1);
            offsets.push_back(drift(k, dim_in_state));
            targets.push_back(target);
            weights.push_back(weight);
        };
        for (int j = 0; j + 1 < T; ++j) {  // running positions theta_{j+1}
            add_state_row(j + 1, 0, goal(0), w.gamma * w.w_g);
            add_state_row(j + 1, 1, goal(1), w.gamma * w.w_g);
        }
        add_state_row(T, 0, goal(0), w.w_T);
        add_state_row(T, 1, goal(1), w.w_T);
        if (m.kind == DynamicsKind::DoubleIntegrator) {
            add_state_row(T, 2, 0.0, w.w_v);
            add_state_row(T, 3, 0.0, w.w_v);
        }
        for (int j = 0; j + 1 < T; ++j)  // penalized controls u_0..u_{T-2}
            for (int c = 0; c < 2; ++c) {
                state_rows.push_back(-1);
                control_cols.push_back(2 * j + c);
                offsets.push_back(0.0);
                targets.push_back(0.0);
                weights.push_back(w.gamma * w.w_u);
            }

        const int rows_n = static_cast<int>(targets.size());
        Eigen::MatrixXd J(rows_n, m.trajectory_dim());
        Eigen::VectorXd offset(rows_n), b(rows_n);
        Eigen::MatrixXd sigma_inv = Eigen::MatrixXd::Zero(rows_n, rows_n);
        for (int i = 0; i < rows_n; ++i) {
            if (state_rows[static_cast<std::size_t>(i)] >= 0) {
                J.row(i) = S.row(state_rows[static_cast<std::size_t>(i)]);
            } else {
                J.row(i).setZero();
                J(i, control_cols[static_cast<std::size_t>(i)]) = 1.0;
            }
            offset(i) = offsets[static_cast<std::size_t>(i)];
            b(i) = targets[static_cast<std::size_t>(i)];
            sigma_inv(i, i) = weights[static_cast<std::size_t>(i)];
        }

        GaussianFactor f;
        f.vars = {robot};
        f.bias = b;
        f.sigma_inv = sigma_inv;
        f.eval = [J, offset](const std::vector<Eigen::VectorXd>& x) {
            FactorEval ev;
            ev.h = J * x[0] + offset;
            ev.jacobian = J;
            return ev;
        };
        return f;
    }

    // Scalar obstacle residual: h = unweighted hinge-squared sum over the
    // rollout, precision w_o.
    GaussianFactor obstacle_factor(int robot, const Eigen::VectorXd& theta0) const {
        const DynamicsModel m = sc_.model;
        const Environment2D env = sc_.env;
        const CostWeights w = sc_.weights;
        const Eigen::Vector2d goal = sc_.robots[static_cast<std::size_t>(robot)].goal;
        GaussianFactor f;
        f.vars = {robot};
        f.bias = Eigen::VectorXd::Zero(1);
        f.sigma_inv = Eigen::MatrixXd::Constant(1, 1, w.gamma * w.w_o);
        f.eval = [m, env, w, goal, theta0](const std::vector<Eigen::VectorXd>& x) {
            const Eigen::MatrixXd raw = m.unflatten(x[0]);
            const Eigen::MatrixXd clamped = m.clamp_controls(raw);
            const Eigen::MatrixXd states = m.rollout(theta0, clamped);
            const plancost::UnaryCost cost =
                plancost::unary_cost(m, env, w, goal, states, raw, true);
            FactorEval ev;
            ev.h = Eigen::VectorXd::Constant(1, cost.obstacle);
            ev.jacobian =
                m.controls_grad_flat(cost.obstacle_state_grads, Eigen::MatrixXd(), x[0])
                    .transpose();
            return ev;
        };
        return f;
    }

    // Scalar collision residual between two robots (the alpha schedule is
    // folded into the residual), unit precision.
    GaussianFactor collision_factor(int a, int b, const Eigen::VectorXd& theta0_a,
                                    const Eigen::VectorXd& theta0_b) const {
        const DynamicsModel m = sc_.model;
        const CollisionParams cp = sc_.collision;
        GaussianFactor f;
        f.vars = {a, b};
        f.bias = Eigen::VectorXd::Zero(1);
        f.sigma_inv = Eigen::MatrixXd::Identity(1, 1);
        f.eval = [m, cp, theta0_a, theta0_b](const std::vector<Eigen::VectorXd>& x) {
            const Eigen::MatrixXd sa = m.rollout_flat(theta0_a, x[0]);
            const Eigen::MatrixXd sb = m.rollout_flat(theta0_b, x[1]);
            const plancost::CollisionCost c = plancost::collision_cost(m, sa, sb, cp, true);
            FactorEval ev;
            ev.h = Eigen::VectorXd::Constant(1, c.total);
            ev.jacobian.resize(1, 2 * m.trajectory_dim());
            ev.jacobian.leftCols(m.trajectory_dim()) =
                m.controls_grad_flat(c.state_grads_a, Eigen::MatrixXd(), x[0]).transpose();
            ev.jacobian.rightCols(m.trajectory_dim()) =
                m.controls_grad_flat(c.state_grads_b, Eigen::MatrixXd(), x[1]).transpose();
            return ev;
        };
        return f;
    }

    PlanRunLog run(std::uint64_t seed = 0, int /*snapshot_stride*/ = 0) const {
        PlanRunLog log;
        log.method = "gabp";
        log.scenario_name = sc_.name;
        log.dt = sc_.model.dt;
        const int R = sc_.num_robots();
        const int dim = sc_.model.trajectory_dim();

        Eigen::MatrixXd states(R, sc_.model.state_dim());
        for (int r = 0; r < R; ++r) states.row(r) = sc_.robots[static_cast<std::size_t>(r)].start;
        log.initial_states = states;

        // small seeded noise on the initial means breaks symmetric
        // configurations that would otherwise linearize head-on
        std::vector<Eigen::VectorXd> means;
        for (int r = 0; r < R; ++r) {
            Rng rng = Rng(seed).child("gabp-init", static_cast<std::uint64_t>(r));
            means.push_back(
                rng.normal_matrix(dim, 1, 0.0, 0.05 * sc_.model.control_limit));
        }

        for (int step = 0; step < sc_.max_steps; ++step) {
            std::vector<GaussianFactor> factors;
            for (int r = 0; r < R; ++r) {
                factors.push_back(quadratic_factor(r, states.row(r)));
                if (!sc_.env.circles.empty() || !sc_.env.boxes.empty() || sc_.env.wall_bounds)
                    factors.push_back(obstacle_factor(r, states.row(r)));
            }
            for (int a = 0; a < R; ++a)
                for (int b = a + 1; b < R; ++b)
                    factors.push_back(collision_factor(a, b, states.row(a), states.row(b)));

            Eigen::MatrixXd executed = Eigen::MatrixXd::Zero(R, 2);
            Eigen::VectorXd best_cost = Eigen::VectorXd::Zero(R);
            try {
                GabpConfig gc;
                gc.iterations = sc_.gabp.iterations;
                gc.relinearize_every = sc_.gabp.relinearize_every;
                gc.damping = sc_.gabp.damping;
                std::vector<int> dims(static_cast<std::size_t>(R), dim);
                const GabpSolver solver(dims, std::move(factors), gc);
                const GabpResult result = solver.solve(means);
                means = result.means;
                for (int r = 0; r < R; ++r) {
                    executed.row(r) = sc_.model
                                          .clamp_control(Eigen::Vector2d(
                                              means[static_cast<std::size_t>(r)](0),
                                              means[static_cast<std::size_t>(r)](1)))
                                          .transpose();
                    const Eigen::MatrixXd raw =
                        sc_.model.unflatten(means[static_cast<std::size_t>(r)]);
                    const Eigen::MatrixXd roll =
                        sc_.model.rollout(states.row(r), sc_.model.clamp_controls(raw));
                    best_cost(r) = plancost::unary_cost(
                                       sc_.model, sc_.env, sc_.weights,
                                       sc_.robots[static_cast<std::size_t>(r)].goal, roll, raw,
                                       false)
                                       .total;
                }
            } catch (const std::runtime_error&) {
                ++log.solver_failures;  // hold zero controls this step
            }

            StepRecord rec;
            rec.step = step;
            rec.states = states;
            rec.controls = executed;
            rec.best_cost = best_cost;
            log.steps.push_back(std::move(rec));

            for (int r = 0; r < R; ++r)
                states.row(r) = sc_.model.step(states.row(r), executed.row(r).transpose());

            bool all_reached = true;
            for (int r = 0; r < R; ++r)
                if ((states.row(r).head<2>().transpose() -
                     sc_.robots[static_cast<std::size_t>(r)].goal)
                        .norm() > 0.5 * sc_.success_threshold) {
                    all_reached = false;
                    break;
                }
            if (all_reached || step + 1 == sc_.max_steps) break;

            for (int r = 0; r < R; ++r) {  // shift the mean plan one step
                auto& mu = means[static_cast<std::size_t>(r)];
                Eigen::VectorXd shifted = mu;
                shifted.head(dim - 2) = mu.tail(dim - 2);
                mu = shifted.cwiseMax(-sc_.model.control_limit).cwiseMin(sc_.model.control_limit);
            }
        }
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
