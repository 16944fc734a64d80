// Trajectory-space potentials for planning-as-inference: the unary cost
// potential (quadratic running/terminal costs plus an obstacle hinge on the
// signed distance), the pairwise collision potential over rolled-out
// trajectories, and the trajectory kernel driving SVGD.
#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "svbp/graph.hpp"
#include "svbp/planning/dynamics.hpp"
#include "svbp/planning/environment.hpp"
#include "svbp/svgd.hpp"

namespace svbp {

struct CostWeights {
    double w_u = 0.1;   // control effort
    double w_g = 0.5;   // running goal attraction
    double w_T = 10.0;  // terminal position
    double w_v = 1.0;   // terminal velocity (double integrator only)
    double w_o = 100.0; // obstacle hinge
    double obstacle_margin = 0.3;
    double gamma = 1.0;  // running-cost constant
};

struct CollisionParams {
    double r = 0.5;         // desired collision radius
    double beta = 0.3;      // in (0, 1]
    double alpha0 = 200.0;  // alpha_k = alpha0 * (1 - k / T)

    double alpha_at(int k, int horizon) const {
        return alpha0 * (1.0 - static_cast<double>(k) / static_cast<double>(horizon));
    }
};

namespace plancost {

struct UnaryCost {
    double total = 0.0;
    double obstacle = 0.0;                // unweighted hinge-squared sum
    Eigen::MatrixXd state_grads;          // (T+1) x state_dim, d total / d theta_k
    Eigen::MatrixXd control_grads;        // T x 2, direct control terms
    Eigen::MatrixXd obstacle_state_grads; // d obstacle / d theta_k (positions only)
};

// Cost of one trajectory: running quadratic + obstacle hinge over states
// theta_1..theta_{T-1} paired with the controls that produced them, plus the
// terminal cost at theta_T. Gradients are per-state/per-control; callers
// back-propagate through the rollout.
inline UnaryCost unary_cost(const DynamicsModel& model, const Environment2D& env,
                            const CostWeights& w, const Eigen::Vector2d& goal,
                            const Eigen::MatrixXd& states, const Eigen::MatrixXd& controls,
                            bool want_grads = true) {
    const int T = model.horizon;
    const int sd = model.state_dim();
    UnaryCost out;
    if (want_grads) {
        out.state_grads = Eigen::MatrixXd::Zero(T + 1, sd);
        out.control_grads = Eigen::MatrixXd::Zero(T, 2);
        out.obstacle_state_grads = Eigen::MatrixXd::Zero(T + 1, sd);
    }
    for (int j = 0; j + 1 < T; ++j) {  // running terms over theta_{j+1}, u_j
        const Eigen::Vector2d p = states.row(j + 1).head<2>();
        const Eigen::Vector2d u = controls.row(j);
        out.total += w.gamma * (w.w_u * u.squaredNorm() + w.w_g * (p - goal).squaredNorm());
        const Environment2D::SdfResult sdf = env.sdf(p);
        const double hinge = std::max(0.0, w.obstacle_margin - sdf.distance);
        out.total += w.gamma * w.w_o * hinge * hinge;
        out.obstacle += hinge * hinge;
        if (want_grads) {
            out.control_grads.row(j) += (w.gamma * 2.0 * w.w_u) * u.transpose();
            Eigen::Vector2d gp = (w.gamma * 2.0 * w.w_g) * (p - goal);
            if (hinge > 0.0) {
                gp += (w.gamma * w.w_o * 2.0 * hinge) * (-sdf.gradient);
                out.obstacle_state_grads.row(j + 1).head<2>() +=
                    (2.0 * hinge) * (-sdf.gradient.transpose());
            }
            out.state_grads.row(j + 1).head<2>() += gp.transpose();
        }
    }
    const Eigen::Vector2d p_T = states.row(T).head<2>();
    out.total += w.w_T * (p_T - goal).squaredNorm();
    if (want_grads) out.state_grads.row(T).head<2>() += (2.0 * w.w_T) * (p_T - goal).transpose();
    if (model.kind == DynamicsKind::DoubleIntegrator) {
        const Eigen::Vector2d v_T = states.row(T).segment<2>(2);
        out.total += w.w_v * v_T.squaredNorm();
        if (want_grads)
            out.state_grads.row(T).segment<2>(2) += (2.0 * w.w_v) * v_T.transpose();
    }
    return out;
}

struct CollisionCost {
    double total = 0.0;                 // sum_k alpha_k (1 - (d/r)^beta) over d <= r
    Eigen::MatrixXd state_grads_a;      // (T+1) x state_dim, d total / d theta_{a,k}
    Eigen::MatrixXd state_grads_b;
};

// Eq.-(10)-style trajectory collision cost between two rollouts sharing the
// horizon. The (d/r)^beta gradient blows up as d -> 0; its magnitude is
// clamped at the value attained at d = 1e-3 m.
inline CollisionCost collision_cost(const DynamicsModel& model, const Eigen::MatrixXd& states_a,
                                    const Eigen::MatrixXd& states_b, const CollisionParams& cp,
                                    bool want_grads = true) {
    constexpr double kGradFloor = 1e-3;
    const int T = model.horizon;
    CollisionCost out;
    if (want_grads) {
        out.state_grads_a = Eigen::MatrixXd::Zero(T + 1, model.state_dim());
        out.state_grads_b = Eigen::MatrixXd::Zero(T + 1, model.state_dim());
    }
    for (int k = 0; k <= T; ++k) {
        const Eigen::Vector2d pa = states_a.row(k).head<2>();
        const Eigen::Vector2d pb = states_b.row(k).head<2>();
        const Eigen::Vector2d delta = pa - pb;
        const double d = delta.norm();
        if (d > cp.r) continue;
        const double alpha_k = cp.alpha_at(k, T);
        out.total += alpha_k * (1.0 - std::pow(d / cp.r, cp.beta));
        if (!want_grads) continue;
        // d(total)/dd = -alpha_k * beta / r * (d/r)^(beta-1), clamped near zero
        const double d_eff = std::max(d, kGradFloor);
        const double dcost_dd =
            -alpha_k * cp.beta / cp.r * std::pow(d_eff / cp.r, cp.beta - 1.0);
        if (d < 1e-12) continue;  // direction undefined exactly at contact
        const Eigen::Vector2d dir = delta / d;
        out.state_grads_a.row(k).head<2>() += dcost_dd * dir.transpose();
        out.state_grads_b.row(k).head<2>() -= dcost_dd * dir.transpose();
    }
    return out;
}

}  // namespace plancost

// log phi(tau) = -(terminal + sum_k gamma_k running_k), evaluated through a
// clamped rollout from the robot's current state. The initial state plays
// the role of the observation.
class TrajectoryUnary final : public UnaryPotential {
public:
    TrajectoryUnary(DynamicsModel model, Environment2D env, Eigen::VectorXd theta0,
                    Eigen::Vector2d goal, CostWeights weights)
        : model_(std::move(model)), env_(std::move(env)), theta0_(std::move(theta0)),
          goal_(std::move(goal)), weights_(weights) {}

    int dim() const override { return model_.trajectory_dim(); }

    // The effort term is charged on the raw (commanded) controls so that
    // coordinates pushed past the box limit still feel a restoring score;
    // the rollout itself always uses the clamped sequence.
    void evaluate(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi,
                  Eigen::MatrixXd& grad) const override {
        log_phi.resize(X.rows());
        grad.resize(X.rows(), dim());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const Eigen::MatrixXd raw = model_.unflatten(X.row(i));
            const Eigen::MatrixXd clamped = model_.clamp_controls(raw);
            const Eigen::MatrixXd states = model_.rollout(theta0_, clamped);
            const plancost::UnaryCost cost =
                plancost::unary_cost(model_, env_, weights_, goal_, states, raw, true);
            log_phi(i) = -cost.total;
            Eigen::MatrixXd du =
                model_.controls_grad(cost.state_grads, Eigen::MatrixXd(), raw);
            du += cost.control_grads;  // raw-control terms bypass the clamp mask
            grad.row(i) = -model_.flatten(du);
        }
    }

    void evaluate_values(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi) const override {
        log_phi.resize(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const Eigen::MatrixXd raw = model_.unflatten(X.row(i));
            const Eigen::MatrixXd clamped = model_.clamp_controls(raw);
            const Eigen::MatrixXd states = model_.rollout(theta0_, clamped);
            log_phi(i) =
                -plancost::unary_cost(model_, env_, weights_, goal_, states, raw, false).total;
        }
    }

    const DynamicsModel& model() const { return model_; }
    const Eigen::VectorXd& initial_state() const { return theta0_; }
    const Eigen::Vector2d& goal() const { return goal_; }

private:
    DynamicsModel model_;
    Environment2D env_;
    Eigen::VectorXd theta0_;
    Eigen::Vector2d goal_;
    CostWeights weights_;
};

// log psi(tau_a, tau_b) = -collision cost between the two rollouts. Each
// side binds its own robot's initial state, so the arguments are not
// interchangeable even though the underlying distance is symmetric.
class CollisionPairwise final : public PairwisePotential {
public:
    CollisionPairwise(DynamicsModel model, Eigen::VectorXd theta0_a, Eigen::VectorXd theta0_b,
                      CollisionParams params)
        : model_(std::move(model)), theta0_a_(std::move(theta0_a)),
          theta0_b_(std::move(theta0_b)), params_(params) {}

    int dim_first() const override { return model_.trajectory_dim(); }
    int dim_second() const override { return model_.trajectory_dim(); }
    bool symmetric() const override { return false; }

    void evaluate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                  Eigen::MatrixXd& L) const override {
        const auto ra = rollouts(theta0_a_, A);
        const auto rb = rollouts(theta0_b_, B);
        L.resize(A.rows(), B.rows());
        for (Eigen::Index j = 0; j < A.rows(); ++j)
            for (Eigen::Index i = 0; i < B.rows(); ++i)
                L(j, i) = -plancost::collision_cost(model_, ra[static_cast<std::size_t>(j)],
                                                    rb[static_cast<std::size_t>(i)], params_,
                                                    false)
                               .total;
    }

    void grad_second(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     std::vector<Eigen::MatrixXd>& out) const override {
        const auto ra = rollouts(theta0_a_, A);
        const auto rb = rollouts(theta0_b_, B);
        out.assign(static_cast<std::size_t>(A.rows()),
                   Eigen::MatrixXd(B.rows(), dim_second()));
        for (Eigen::Index j = 0; j < A.rows(); ++j)
            for (Eigen::Index i = 0; i < B.rows(); ++i) {
                const plancost::CollisionCost c = plancost::collision_cost(
                    model_, ra[static_cast<std::size_t>(j)], rb[static_cast<std::size_t>(i)],
                    params_, true);
                out[static_cast<std::size_t>(j)].row(i) = -model_.controls_grad_flat(
                    c.state_grads_b, Eigen::MatrixXd(), B.row(i));
            }
    }

    void grad_first(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                    std::vector<Eigen::MatrixXd>& out) const override {
        const auto ra = rollouts(theta0_a_, A);
        const auto rb = rollouts(theta0_b_, B);
        out.assign(static_cast<std::size_t>(B.rows()), Eigen::MatrixXd(A.rows(), dim_first()));
        for (Eigen::Index i = 0; i < B.rows(); ++i)
            for (Eigen::Index j = 0; j < A.rows(); ++j) {
                const plancost::CollisionCost c = plancost::collision_cost(
                    model_, ra[static_cast<std::size_t>(j)], rb[static_cast<std::size_t>(i)],
                    params_, true);
                out[static_cast<std::size_t>(i)].row(j) = -model_.controls_grad_flat(
                    c.state_grads_a, Eigen::MatrixXd(), A.row(j));
            }
    }

    // Contract the per-sender weights over position-space gradients first,
    // then back-propagate once per recipient particle.
    Eigen::MatrixXd grad_second_weighted(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                         const Eigen::MatrixXd& W) const override {
        const auto ra = rollouts(theta0_a_, A);
        const auto rb = rollouts(theta0_b_, B);
        Eigen::MatrixXd acc(B.rows(), dim_second());
        for (Eigen::Index i = 0; i < B.rows(); ++i) {
            Eigen::MatrixXd state_grads =
                Eigen::MatrixXd::Zero(model_.horizon + 1, model_.state_dim());
            for (Eigen::Index j = 0; j < A.rows(); ++j) {
                if (W(j, i) == 0.0) continue;
                const plancost::CollisionCost c = plancost::collision_cost(
                    model_, ra[static_cast<std::size_t>(j)], rb[static_cast<std::size_t>(i)],
                    params_, true);
                state_grads += W(j, i) * c.state_grads_b;
            }
            acc.row(i) = -model_.controls_grad_flat(state_grads, Eigen::MatrixXd(), B.row(i));
        }
        return acc;
    }

    Eigen::MatrixXd grad_first_weighted(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                        const Eigen::MatrixXd& W) const override {
        const auto ra = rollouts(theta0_a_, A);
        const auto rb = rollouts(theta0_b_, B);
        Eigen::MatrixXd acc(A.rows(), dim_first());
        for (Eigen::Index j = 0; j < A.rows(); ++j) {
            Eigen::MatrixXd state_grads =
                Eigen::MatrixXd::Zero(model_.horizon + 1, model_.state_dim());
            for (Eigen::Index i = 0; i < B.rows(); ++i) {
                if (W(j, i) == 0.0) continue;
                const plancost::CollisionCost c = plancost::collision_cost(
                    model_, ra[static_cast<std::size_t>(j)], rb[static_cast<std::size_t>(i)],
                    params_, true);
                state_grads += W(j, i) * c.state_grads_a;
            }
            acc.row(j) = -model_.controls_grad_flat(state_grads, Eigen::MatrixXd(), A.row(j));
        }
        return acc;
    }

private:
    std::vector<Eigen::MatrixXd> rollouts(const Eigen::VectorXd& theta0,
                                          const Eigen::MatrixXd& X) const {
        std::vector<Eigen::MatrixXd> out;
        out.reserve(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            out.push_back(model_.rollout_flat(theta0, X.row(i)));
        return out;
    }

    DynamicsModel model_;
    Eigen::VectorXd theta0_a_;
    Eigen::VectorXd theta0_b_;
    CollisionParams params_;
};

// Gaussian kernel over trajectories: the distance is the sum over timesteps
// of the Euclidean distance between the two rollouts' states. Bandwidth
// follows the median heuristic over squared trajectory distances.
class TrajectoryKernel final : public ParticleKernel {
public:
    TrajectoryKernel(DynamicsModel model, Eigen::VectorXd theta0, KernelSpec spec = {})
        : model_(std::move(model)), theta0_(std::move(theta0)), spec_(spec) {}

    KernelEval evaluate(const Eigen::MatrixXd& X) const override {
        const Eigen::Index n = X.rows();
        const int T = model_.horizon;
        std::vector<Eigen::MatrixXd> states;
        states.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) states.push_back(model_.rollout_flat(theta0_, X.row(i)));

        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);  // trajectory distances
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) {
                double acc = 0.0;
                for (int k = 0; k <= T; ++k)
                    acc += (states[static_cast<std::size_t>(i)].row(k) -
                            states[static_cast<std::size_t>(j)].row(k))
                               .norm();
                D(i, j) = D(j, i) = acc;
            }

        KernelEval out;
        if (spec_.bandwidth == BandwidthMode::Fixed) {
            out.bandwidth = spec_.fixed_h;
        } else if (n < 2) {
            out.bandwidth = 1.0;
        } else {
            std::vector<double> sq;
            sq.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i + 1; j < n; ++j) sq.push_back(D(i, j) * D(i, j));
            out.bandwidth = median_bandwidth_from_sq_dists(std::move(sq), n);
        }
        out.gram = (-D.array().square() / out.bandwidth).exp();

        // repulsion_i = sum_j grad_{u_j} kappa(x_j, x_i); chain rule through
        // the rollout of particle j.
        out.repulsion = Eigen::MatrixXd::Zero(n, X.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double coeff = -2.0 * D(i, j) / out.bandwidth * out.gram(i, j);
                if (coeff == 0.0) continue;
                Eigen::MatrixXd state_grads =
                    Eigen::MatrixXd::Zero(T + 1, model_.state_dim());
                for (int k = 0; k <= T; ++k) {
                    const Eigen::VectorXd diff = states[static_cast<std::size_t>(j)].row(k) -
                                                 states[static_cast<std::size_t>(i)].row(k);
                    const double dk = diff.norm();
                    if (dk > 1e-12) state_grads.row(k) = diff / dk;  // d D / d theta_{j,k}
                    else state_grads.row(k).setZero();
                }
                // one reverse sweep per (i, j) pair
                out.repulsion.row(i) +=
                    coeff *
                    model_.controls_grad_flat(state_grads, Eigen::MatrixXd(), X.row(j));
            }
        }
        return out;
    }

private:
    DynamicsModel model_;
    Eigen::VectorXd theta0_;
    KernelSpec spec_;
};

}  // namespace svbp
