// Discrete-time robot dynamics for trajectory optimization: Euler rollouts,
// reverse-mode gradient accumulation through the rollout, and the dense
// control Jacobian used for factor linearization.
#pragma once

#include <string>

#include "svbp/common.hpp"

namespace svbp {

enum class DynamicsKind { DoubleIntegrator, SingleIntegrator };

// Double integrator: state (px, py, vx, vy), control = 2-D acceleration,
// dt = 0.1 s over 20 steps. Single integrator: state (px, py), control =
// 2-D velocity, dt = 0.25 s over 10 steps.
struct DynamicsModel {
    DynamicsKind kind = DynamicsKind::DoubleIntegrator;
    double dt = 0.1;
    int horizon = 20;
    double control_limit = 2.0;  // box bound per control component

    static DynamicsModel double_integrator() { return {DynamicsKind::DoubleIntegrator, 0.1, 20, 2.0}; }
    static DynamicsModel single_integrator() { return {DynamicsKind::SingleIntegrator, 0.25, 10, 1.0}; }

    int state_dim() const { return kind == DynamicsKind::DoubleIntegrator ? 4 : 2; }
    static constexpr int control_dim() { return 2; }
    int trajectory_dim() const { return horizon * control_dim(); }

    // flat layout: (u0x, u0y, u1x, u1y, ...)
    Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat) const {
        require(flat.size() == trajectory_dim(), "unflatten: control size mismatch");
        Eigen::MatrixXd u(horizon, 2);
        for (int k = 0; k < horizon; ++k) {
            u(k, 0) = flat(2 * k);
            u(k, 1) = flat(2 * k + 1);
        }
        return u;
    }
    Eigen::VectorXd flatten(const Eigen::Ref<const Eigen::MatrixXd>& u) const {
        Eigen::VectorXd flat(trajectory_dim());
        for (int k = 0; k < horizon; ++k) {
            flat(2 * k) = u(k, 0);
            flat(2 * k + 1) = u(k, 1);
        }
        return flat;
    }

    // Out-of-bound controls are clamped, never rejected.
    Eigen::MatrixXd clamp_controls(const Eigen::MatrixXd& u, bool* any_clamped = nullptr) const {
        Eigen::MatrixXd c = u.cwiseMax(-control_limit).cwiseMin(control_limit);
        if (any_clamped) *any_clamped = (c.array() != u.array()).any();
        return c;
    }
    Eigen::Vector2d clamp_control(const Eigen::Vector2d& u) const {
        return u.cwiseMax(-control_limit).cwiseMin(control_limit);
    }

    Eigen::VectorXd step(const Eigen::VectorXd& theta, const Eigen::Vector2d& u_raw) const {
        const Eigen::Vector2d u = clamp_control(u_raw);
        Eigen::VectorXd next(state_dim());
        if (kind == DynamicsKind::DoubleIntegrator) {
            next.head<2>() = theta.head<2>() + dt * theta.segment<2>(2);
            next.segment<2>(2) = theta.segment<2>(2) + dt * u;
        } else {
            next.head<2>() = theta.head<2>() + dt * u;
        }
        return next;
    }

    // Euler rollout of T (possibly clamped) controls; returns (T+1) x
    // state_dim including theta0 as row 0.
    Eigen::MatrixXd rollout(const Eigen::VectorXd& theta0, const Eigen::MatrixXd& controls,
                            bool* any_clamped = nullptr) const {
        require(theta0.size() == state_dim(), "rollout: bad initial state size");
        require(controls.rows() == horizon && controls.cols() == 2, "rollout: bad control shape");
        const Eigen::MatrixXd u = clamp_controls(controls, any_clamped);
        Eigen::MatrixXd states(horizon + 1, state_dim());
        states.row(0) = theta0;
        for (int k = 0; k < horizon; ++k)
            states.row(k + 1) = step(states.row(k), u.row(k).transpose());
        return states;
    }

    Eigen::MatrixXd rollout_flat(const Eigen::VectorXd& theta0,
                                 const Eigen::Ref<const Eigen::VectorXd>& flat,
                                 bool* any_clamped = nullptr) const {
        return rollout(theta0, unflatten(flat), any_clamped);
    }

    // Reverse accumulation of dL/dcontrols from per-state gradients
    // (state_grads: (T+1) x state_dim, row k = dL/dtheta_k) and direct
    // per-control gradients (T x 2). raw_controls gates the clamp
    // subgradient: clamped coordinates propagate zero.
    Eigen::MatrixXd controls_grad(const Eigen::MatrixXd& state_grads,
                                  const Eigen::MatrixXd& direct_control_grads,
                                  const Eigen::MatrixXd& raw_controls) const {
        require(state_grads.rows() == horizon + 1 && state_grads.cols() == state_dim(),
                "controls_grad: bad state gradient shape");
        Eigen::MatrixXd du = direct_control_grads.size() == 0
                                 ? Eigen::MatrixXd::Zero(horizon, 2)
                                 : direct_control_grads;
        Eigen::Vector2d ap = Eigen::Vector2d::Zero();  // adjoint on position
        Eigen::Vector2d av = Eigen::Vector2d::Zero();  // adjoint on velocity
        for (int k = horizon; k >= 1; --k) {
            ap += state_grads.row(k).head<2>().transpose();
            if (kind == DynamicsKind::DoubleIntegrator) {
                av += state_grads.row(k).segment<2>(2).transpose();
                du.row(k - 1) += dt * av.transpose();
                av += dt * ap;  // v_{k-1} feeds p_k
            } else {
                du.row(k - 1) += dt * ap.transpose();
            }
        }
        // clamp subgradient: zero where the raw control sits outside the box
        for (int k = 0; k < horizon; ++k)
            for (int c = 0; c < 2; ++c)
                if (raw_controls(k, c) < -control_limit || raw_controls(k, c) > control_limit)
                    du(k, c) = 0.0;
        return du;
    }

    Eigen::VectorXd controls_grad_flat(const Eigen::MatrixXd& state_grads,
                                       const Eigen::MatrixXd& direct_control_grads,
                                       const Eigen::Ref<const Eigen::VectorXd>& raw_flat) const {
        return flatten(controls_grad(state_grads, direct_control_grads, unflatten(raw_flat)));
    }

    // Dense Jacobian d vec(theta_1..theta_T) / d vec(controls), row-major
    // per state. The dynamics are linear, so this is exact and constant.
    Eigen::MatrixXd control_jacobian() const {
        const int sd = state_dim();
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(horizon * sd, trajectory_dim());
        for (int k = 1; k <= horizon; ++k)
            for (int j = 0; j < k; ++j) {
                const int row = (k - 1) * sd;
                const int col = 2 * j;
                if (kind == DynamicsKind::DoubleIntegrator) {
                    if (j <= k - 2) {
                        const double dp = dt * dt * static_cast<double>(k - 1 - j);
                        J(row + 0, col + 0) += dp;
                        J(row + 1, col + 1) += dp;
                    }
                    J(row + 2, col + 0) += dt;
                    J(row + 3, col + 1) += dt;
                } else {
                    J(row + 0, col + 0) += dt;
                    J(row + 1, col + 1) += dt;
                }
            }
        return J;
    }
};

// Control sequence plus its rollout from a fixed initial state; the cached
// states are always produced by the model's rollout.
struct Trajectory {
    Eigen::VectorXd controls;  // flat, 2T
    Eigen::MatrixXd states;    // (T+1) x state_dim

    static Trajectory rolled(const DynamicsModel& model, const Eigen::VectorXd& theta0,
                             const Eigen::VectorXd& flat_controls) {
        Trajectory t;
        t.controls = flat_controls;
        t.states = model.rollout_flat(theta0, flat_controls);
        return t;
    }
};

}  // namespace svbp
