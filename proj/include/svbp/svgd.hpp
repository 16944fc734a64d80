// Stein variational gradient descent: RBF kernel, median-heuristic
// bandwidth, the Stein direction, and step-size policies. Pure functions
// over particle matrices; safe to run from parallel workers on disjoint
// node states.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "svbp/common.hpp"

namespace svbp {

enum class BandwidthMode { Fixed, MedianHeuristic };

struct KernelSpec {
    BandwidthMode bandwidth = BandwidthMode::MedianHeuristic;
    double fixed_h = 1.0;  // used only in Fixed mode; must be > 0
};

constexpr double kBandwidthFloor = 1e-6;

inline double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double h) {
    require(h > 0.0, "rbf_kernel: bandwidth must be positive");
    require(a.size() == b.size(), "rbf_kernel: dimension mismatch");
    if (!a.allFinite() || !b.allFinite())
        throw NumericError("rbf_kernel: non-finite input point");
    return std::exp(-(a - b).squaredNorm() / h);
}

// h = median of pairwise squared distances / log(N + 1), floored so a
// collapsed particle set never divides by zero.
inline double median_bandwidth_from_sq_dists(std::vector<double> sq, Eigen::Index n_particles) {
    if (sq.empty()) return kBandwidthFloor;
    const std::size_t mid = sq.size() / 2;
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
    double median = sq[mid];
    if (sq.size() % 2 == 0) {
        const double lower = *std::max_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    const double h = median / std::log(static_cast<double>(n_particles) + 1.0);
    return std::max(h, kBandwidthFloor);
}

inline double median_bandwidth(const Eigen::MatrixXd& particles) {
    const Eigen::Index n = particles.rows();
    require(n >= 2, "median_bandwidth: need at least two particles");
    std::vector<double> sq;
    sq.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            sq.push_back((particles.row(i) - particles.row(j)).squaredNorm());
    return median_bandwidth_from_sq_dists(std::move(sq), n);
}

// Kernel evaluation consumed by the Stein direction: the Gram matrix and
// the aggregated repulsion term sum_j grad_{x_j} kappa(x_j, x_i).
struct KernelEval {
    Eigen::MatrixXd gram;       // N x N, gram(i, j) = kappa(x_i, x_j)
    Eigen::MatrixXd repulsion;  // N x d
    double bandwidth = 0.0;
};

class ParticleKernel {
public:
    virtual ~ParticleKernel() = default;
    virtual KernelEval evaluate(const Eigen::MatrixXd& particles) const = 0;
};

// kappa(a, b) = exp(-||a - b||^2 / h) over the node's particle space.
class RbfKernel final : public ParticleKernel {
public:
    explicit RbfKernel(KernelSpec spec = {}) : spec_(spec) {
        if (spec_.bandwidth == BandwidthMode::Fixed)
            require(spec_.fixed_h > 0.0, "RbfKernel: fixed bandwidth must be positive");
    }

    KernelEval evaluate(const Eigen::MatrixXd& X) const override {
        const Eigen::Index n = X.rows();
        Eigen::MatrixXd sq(n, n);
        const Eigen::VectorXd row_norms = X.rowwise().squaredNorm();
        sq = row_norms.replicate(1, n) + row_norms.transpose().replicate(n, 1) -
             2.0 * (X * X.transpose());
        sq = sq.cwiseMax(0.0);

        KernelEval out;
        if (spec_.bandwidth == BandwidthMode::Fixed) {
            out.bandwidth = spec_.fixed_h;
        } else if (n < 2) {
            out.bandwidth = 1.0;
        } else {
            std::vector<double> d;
            d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i + 1; j < n; ++j) d.push_back(sq(i, j));
            out.bandwidth = median_bandwidth_from_sq_dists(std::move(d), n);
        }
        out.gram = (-sq / out.bandwidth).array().exp();
        // repulsion_i = (2/h) * sum_j (x_i - x_j) k_ij
        const Eigen::VectorXd row_sums = out.gram.rowwise().sum();
        out.repulsion =
            (2.0 / out.bandwidth) * (row_sums.asDiagonal() * X - out.gram * X);
        return out;
    }

private:
    KernelSpec spec_;
};

// gamma_i = (1/N) sum_j [ kappa(x_j, x_i) grad_log_p_j + grad_{x_j} kappa(x_j, x_i) ].
inline Eigen::MatrixXd stein_direction(const Eigen::MatrixXd& particles,
                                       const Eigen::MatrixXd& grad_log_p,
                                       const ParticleKernel& kernel) {
    require(particles.rows() == grad_log_p.rows() && particles.cols() == grad_log_p.cols(),
            "stein_direction: shape mismatch");
    if (!particles.allFinite())
        throw NumericError("stein_direction: non-finite particle entries");
    for (Eigen::Index i = 0; i < grad_log_p.rows(); ++i)
        if (!grad_log_p.row(i).allFinite())
            throw NumericError("stein_direction: non-finite gradient at particle " +
                               std::to_string(i));
    const KernelEval k = kernel.evaluate(particles);
    const double n = static_cast<double>(particles.rows());
    return (k.gram * grad_log_p + k.repulsion) / n;
}

inline Eigen::MatrixXd stein_direction(const Eigen::MatrixXd& particles,
                                       const Eigen::MatrixXd& grad_log_p,
                                       const KernelSpec& spec = {}) {
    return stein_direction(particles, grad_log_p, RbfKernel(spec));
}

struct StepPolicy {
    enum class Mode { Fixed, Adaptive };
    Mode mode = Mode::Adaptive;
    double epsilon = 0.1;
    double decay = 1.0;  // multiplicative per-iteration factor, in (0, 1]
};

// Per-node optimizer state for the adaptive policy (bias-corrected running
// second moment, RMSProp-style).
struct StepState {
    Eigen::MatrixXd second_moment;
    long iteration = 0;
};

inline void apply_step(Eigen::MatrixXd& particles, const Eigen::MatrixXd& direction,
                       const StepPolicy& policy, StepState& state) {
    require(particles.rows() == direction.rows() && particles.cols() == direction.cols(),
            "apply_step: shape mismatch");
    const double eps_k =
        policy.epsilon * std::pow(policy.decay, static_cast<double>(state.iteration));
    if (policy.mode == StepPolicy::Mode::Fixed) {
        particles += eps_k * direction;
    } else {
        constexpr double beta = 0.9;
        constexpr double tiny = 1e-12;
        if (state.second_moment.size() == 0)
            state.second_moment = Eigen::MatrixXd::Zero(particles.rows(), particles.cols());
        state.second_moment =
            beta * state.second_moment.array() + (1.0 - beta) * direction.array().square();
        const double correction =
            1.0 - std::pow(beta, static_cast<double>(state.iteration) + 1.0);
        const Eigen::ArrayXXd v_hat = state.second_moment.array() / correction;
        particles.array() += eps_k * direction.array() / (v_hat.sqrt() + tiny);
    }
    ++state.iteration;
}

}  // namespace svbp
