// Gaussian belief propagation over trajectory nodes: nonlinear residual
// factors linearized into canonical (information) form, synchronous damped
// message passing with Schur-complement marginalization, and periodic
// relinearization at the current means.
#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "svbp/common.hpp"

namespace svbp {

struct ConditioningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Canonical-form Gaussian over one variable: information vector and matrix.
struct CanonicalGaussian {
    Eigen::VectorXd eta;
    Eigen::MatrixXd lambda;

    static CanonicalGaussian zero(int dim) {
        return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
    }
};

// Residual evaluation of h at a linearization point: value and Jacobian.
struct FactorEval {
    Eigen::VectorXd h;
    Eigen::MatrixXd jacobian;  // rows = residual dim, cols = stacked variable dims
};

// E(x) = 1/2 (h(x) - b)^T Sigma^{-1} (h(x) - b) over one or two variables.
struct GaussianFactor {
    std::vector<int> vars;        // node ids, size 1 or 2
    Eigen::VectorXd bias;         // b
    Eigen::MatrixXd sigma_inv;    // residual precision
    std::function<FactorEval(const std::vector<Eigen::VectorXd>&)> eval;
};

// First-order linearization into canonical form over the stacked variables:
//   Lambda = J^T S J,  eta = J^T S (J x_lin - h + b).
inline CanonicalGaussian linearize(const GaussianFactor& factor,
                                   const std::vector<Eigen::VectorXd>& lin_points) {
    require(factor.vars.size() == lin_points.size(), "linearize: wrong linearization arity");
    const FactorEval ev = factor.eval(lin_points);
    require(ev.jacobian.rows() == ev.h.size(), "linearize: residual/jacobian mismatch");
    if (!ev.jacobian.allFinite() || !ev.h.allFinite())
        throw NumericError("linearize: non-finite residual or jacobian");
    Eigen::VectorXd stacked(ev.jacobian.cols());
    Eigen::Index off = 0;
    for (const auto& x : lin_points) {
        stacked.segment(off, x.size()) = x;
        off += x.size();
    }
    const Eigen::MatrixXd JtS = ev.jacobian.transpose() * factor.sigma_inv;
    CanonicalGaussian out;
    out.lambda = JtS * ev.jacobian;
    out.eta = JtS * (ev.jacobian * stacked - ev.h + factor.bias);
    return out;
}

struct GabpConfig {
    int iterations = 20;
    int relinearize_every = 1;
    double damping = 0.4;  // message damping in [0, 1)
};

struct GabpResult {
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    int iterations_run = 0;
};

// Loopy synchronous GaBP over pairwise-factorized trajectory nodes.
class GabpSolver {
public:
    GabpSolver(std::vector<int> dims, std::vector<GaussianFactor> factors, GabpConfig cfg = {})
        : dims_(std::move(dims)), factors_(std::move(factors)), cfg_(cfg) {
        for (std::size_t f = 0; f < factors_.size(); ++f) {
            const auto& factor = factors_[f];
            require(factor.vars.size() == 1 || factor.vars.size() == 2,
                    "GabpSolver: factors must touch one or two variables");
            for (int v : factor.vars)
                require(v >= 0 && v < static_cast<int>(dims_.size()),
                        "GabpSolver: factor variable out of range");
            if (factor.vars.size() == 2) pair_factor_ids_.push_back(static_cast<int>(f));
        }
    }

    GabpResult solve(const std::vector<Eigen::VectorXd>& init_means) const {
        const int n = static_cast<int>(dims_.size());
        require(static_cast<int>(init_means.size()) == n, "gabp_solve: one init mean per node");
        std::vector<Eigen::VectorXd> means = init_means;

        // messages: per pair factor, one in each direction (to its first /
        // second variable)
        struct PairState {
            CanonicalGaussian to_first;
            CanonicalGaussian to_second;
            CanonicalGaussian joint_eta_lambda;  // layout [first; second]
        };
        std::vector<PairState> pair_state(pair_factor_ids_.size());
        for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
            const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
            pair_state[p].to_first = CanonicalGaussian::zero(dims_[static_cast<std::size_t>(f.vars[0])]);
            pair_state[p].to_second = CanonicalGaussian::zero(dims_[static_cast<std::size_t>(f.vars[1])]);
        }

        std::vector<CanonicalGaussian> unary(static_cast<std::size_t>(n));
        auto relinearize_all = [&] {
            for (int s = 0; s < n; ++s)
                unary[static_cast<std::size_t>(s)] =
                    CanonicalGaussian::zero(dims_[static_cast<std::size_t>(s)]);
            for (const auto& f : factors_) {
                if (f.vars.size() != 1) continue;
                const CanonicalGaussian c =
                    linearize(f, {means[static_cast<std::size_t>(f.vars[0])]});
                unary[static_cast<std::size_t>(f.vars[0])].eta += c.eta;
                unary[static_cast<std::size_t>(f.vars[0])].lambda += c.lambda;
            }
            for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
                const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
                pair_state[p].joint_eta_lambda =
                    linearize(f, {means[static_cast<std::size_t>(f.vars[0])],
                                  means[static_cast<std::size_t>(f.vars[1])]});
            }
        };

        GabpResult result;
        relinearize_all();
        for (int it = 0; it < cfg_.iterations; ++it) {
            if (it > 0 && cfg_.relinearize_every > 0 && it % cfg_.relinearize_every == 0)
                relinearize_all();

            // message context: node information minus the factor's own message
            std::vector<CanonicalGaussian> node_info = unary;
            for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
                const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
                add_to(node_info[static_cast<std::size_t>(f.vars[0])], pair_state[p].to_first);
                add_to(node_info[static_cast<std::size_t>(f.vars[1])], pair_state[p].to_second);
            }

            std::vector<PairState> fresh = pair_state;
            for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
                const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
                const int a = f.vars[0], b = f.vars[1];
                const int da = dims_[static_cast<std::size_t>(a)];
                const int db = dims_[static_cast<std::size_t>(b)];
                const auto& joint = pair_state[p].joint_eta_lambda;

                // message to a: marginalize b out of joint + (b's context
                // without this factor's contribution)
                fresh[p].to_first = schur_message(joint, da, db, true,
                                                  minus(node_info[static_cast<std::size_t>(b)],
                                                        pair_state[p].to_second));
                fresh[p].to_second = schur_message(joint, da, db, false,
                                                   minus(node_info[static_cast<std::size_t>(a)],
                                                         pair_state[p].to_first));
                if (cfg_.damping > 0.0) {
                    damp(fresh[p].to_first, pair_state[p].to_first, cfg_.damping);
                    damp(fresh[p].to_second, pair_state[p].to_second, cfg_.damping);
                }
            }
            pair_state = std::move(fresh);

            // belief means for the next relinearization
            for (int s = 0; s < n; ++s) {
                CanonicalGaussian belief = unary[static_cast<std::size_t>(s)];
                for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
                    const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
                    if (f.vars[0] == s) add_to(belief, pair_state[p].to_first);
                    if (f.vars[1] == s) add_to(belief, pair_state[p].to_second);
                }
                const Eigen::LLT<Eigen::MatrixXd> llt(belief.lambda);
                if (llt.info() != Eigen::Success)
                    throw ConditioningError("gabp: belief not positive definite at node " +
                                            std::to_string(s));
                means[static_cast<std::size_t>(s)] = llt.solve(belief.eta);
            }
            result.iterations_run = it + 1;
        }

        result.means = means;
        result.covariances.resize(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) {
            CanonicalGaussian belief = unary[static_cast<std::size_t>(s)];
            for (std::size_t p = 0; p < pair_factor_ids_.size(); ++p) {
                const auto& f = factors_[static_cast<std::size_t>(pair_factor_ids_[p])];
                if (f.vars[0] == s) add_to(belief, pair_state[p].to_first);
                if (f.vars[1] == s) add_to(belief, pair_state[p].to_second);
            }
            const Eigen::LLT<Eigen::MatrixXd> llt(belief.lambda);
            if (llt.info() != Eigen::Success)
                throw ConditioningError("gabp: belief not positive definite at node " +
                                        std::to_string(s));
            result.covariances[static_cast<std::size_t>(s)] =
                llt.solve(Eigen::MatrixXd::Identity(dims_[static_cast<std::size_t>(s)],
                                                    dims_[static_cast<std::size_t>(s)]));
        }
        return result;
    }

private:
    static void add_to(CanonicalGaussian& acc, const CanonicalGaussian& term) {
        acc.eta += term.eta;
        acc.lambda += term.lambda;
    }
    static CanonicalGaussian minus(const CanonicalGaussian& acc, const CanonicalGaussian& term) {
        return {acc.eta - term.eta, acc.lambda - term.lambda};
    }
    static void damp(CanonicalGaussian& fresh, const CanonicalGaussian& old, double lambda) {
        fresh.eta = (1.0 - lambda) * fresh.eta + lambda * old.eta;
        fresh.lambda = (1.0 - lambda) * fresh.lambda + lambda * old.lambda;
    }

    // Marginalizes one side of the factor's joint canonical form, after
    // adding the other side's context information.
    static CanonicalGaussian schur_message(const CanonicalGaussian& joint, int da, int db,
                                           bool to_first, const CanonicalGaussian& other_context) {
        const Eigen::MatrixXd& L = joint.lambda;
        const Eigen::VectorXd& e = joint.eta;
        if (to_first) {
            Eigen::MatrixXd Lbb = L.block(da, da, db, db) + other_context.lambda;
            const Eigen::VectorXd eb = e.segment(da, db) + other_context.eta;
            Lbb.diagonal().array() += 1e-9;  // marginalization guard
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(Lbb);
            const Eigen::MatrixXd Lab = L.block(0, da, da, db);
            return {e.head(da) - Lab * ldlt.solve(eb),
                    L.block(0, 0, da, da) - Lab * ldlt.solve(Lab.transpose())};
        }
        Eigen::MatrixXd Laa = L.block(0, 0, da, da) + other_context.lambda;
        const Eigen::VectorXd ea = e.head(da) + other_context.eta;
        Laa.diagonal().array() += 1e-9;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(Laa);
        const Eigen::MatrixXd Lba = L.block(da, 0, db, da);
        return {e.segment(da, db) - Lba * ldlt.solve(ea),
                L.block(da, da, db, db) - Lba * ldlt.solve(Lba.transpose())};
    }

    std::vector<int> dims_;
    std::vector<GaussianFactor> factors_;
    GabpConfig cfg_;
    std::vector<int> pair_factor_ids_;
};

}  // namespace svbp
