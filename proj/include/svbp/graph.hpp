// Markov Random Field data model: nodes, undirected edges, and the
// differentiable log-potential contract shared by every inference backend.
// Graphs and potentials are immutable once built; all mutable particle
// state lives in the solvers.
#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svbp/common.hpp"

namespace svbp {

using NodeId = int;

// Unary log-potential log phi_s(x). Implementations provide batch
// evaluation over an N x d matrix of points (one point per row); that is
// the hot path, since SVGD touches every particle each iteration.
class UnaryPotential {
public:
    virtual ~UnaryPotential() = default;

    virtual int dim() const = 0;

    // X: N x dim. Fills log_phi (N) and grad (N x dim, row i = grad log phi at X.row(i)).
    virtual void evaluate(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi,
                          Eigen::MatrixXd& grad) const = 0;

    // Value-only batch evaluation; override when gradients are costly.
    virtual void evaluate_values(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi) const {
        Eigen::MatrixXd grad;
        evaluate(X, log_phi, grad);
    }

    double log_phi(const Eigen::VectorXd& x) const {
        Eigen::VectorXd v;
        Eigen::MatrixXd g;
        evaluate(x.transpose(), v, g);
        return v(0);
    }
    Eigen::VectorXd grad_log_phi(const Eigen::VectorXd& x) const {
        Eigen::VectorXd v;
        Eigen::MatrixXd g;
        evaluate(x.transpose(), v, g);
        return g.row(0);
    }
};

// Pairwise log-potential log psi(a, b) with gradients w.r.t. either
// argument. Batch evaluation covers the full cross product of two particle
// sets, which is what the message update consumes.
class PairwisePotential {
public:
    virtual ~PairwisePotential() = default;

    virtual int dim_first() const = 0;
    virtual int dim_second() const = 0;
    // True iff psi(a, b) == psi(b, a) for all a, b (with identical argument
    // roles; trajectory potentials bind per-robot context and are not
    // interchangeable even when the formula looks symmetric).
    virtual bool symmetric() const = 0;

    // A: M x dim_first, B: N x dim_second. Fills L (M x N) with
    // L(j, i) = log psi(A.row(j), B.row(i)).
    virtual void evaluate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          Eigen::MatrixXd& L) const = 0;

    // Gradients w.r.t. the second argument: out[j] is N x dim_second with
    // row i = grad_b log psi(A.row(j), B.row(i)).
    virtual void grad_second(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             std::vector<Eigen::MatrixXd>& out) const = 0;

    // Gradients w.r.t. the first argument: out[i] is M x dim_first with
    // row j = grad_a log psi(A.row(j), B.row(i)).
    virtual void grad_first(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            std::vector<Eigen::MatrixXd>& out) const = 0;

    // Weighted contraction used by the belief gradient: returns N x dim_second
    // with row i = sum_j W(j, i) * grad_b log psi(A.row(j), B.row(i)).
    // Subclasses whose gradients share heavy intermediates (rollouts) override
    // this to contract before back-propagating.
    virtual Eigen::MatrixXd grad_second_weighted(const Eigen::MatrixXd& A,
                                                 const Eigen::MatrixXd& B,
                                                 const Eigen::MatrixXd& W) const {
        std::vector<Eigen::MatrixXd> g;
        grad_second(A, B, g);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(B.rows(), dim_second());
        for (Eigen::Index j = 0; j < A.rows(); ++j)
            acc.array() += g[static_cast<std::size_t>(j)].array().colwise() *
                           W.row(j).transpose().array();
        return acc;
    }

    // Same contraction w.r.t. the first argument: returns M x dim_first with
    // row j = sum_i W(j, i) * grad_a log psi(A.row(j), B.row(i)).
    virtual Eigen::MatrixXd grad_first_weighted(const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& B,
                                                const Eigen::MatrixXd& W) const {
        std::vector<Eigen::MatrixXd> g;
        grad_first(A, B, g);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(A.rows(), dim_first());
        for (Eigen::Index i = 0; i < B.rows(); ++i)
            acc.array() += g[static_cast<std::size_t>(i)].array().colwise() *
                           W.col(i).array();
        return acc;
    }

    double log_psi(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        Eigen::MatrixXd L;
        evaluate(a.transpose(), b.transpose(), L);
        return L(0, 0);
    }
    Eigen::VectorXd grad_log_psi_first(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        std::vector<Eigen::MatrixXd> g;
        grad_first(a.transpose(), b.transpose(), g);
        return g[0].row(0);
    }
};

struct DirectedEdge {
    NodeId from = -1;
    NodeId to = -1;
    friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;
    friend auto operator<=>(const DirectedEdge&, const DirectedEdge&) = default;
};

using Edge = std::pair<NodeId, NodeId>;  // normalized: first < second

inline Edge make_edge(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

class MrfGraph {
public:
    MrfGraph() = default;
    explicit MrfGraph(int num_nodes) { resize(num_nodes); }

    void resize(int num_nodes) {
        require(num_nodes >= 0, "MrfGraph: negative node count");
        node_dims_.resize(static_cast<std::size_t>(num_nodes), 0);
        unaries_.resize(static_cast<std::size_t>(num_nodes));
    }

    int num_nodes() const { return static_cast<int>(node_dims_.size()); }

    void set_unary(NodeId s, std::shared_ptr<const UnaryPotential> phi) {
        check_node(s);
        require(phi != nullptr, "set_unary: null potential");
        node_dims_[static_cast<std::size_t>(s)] = phi->dim();
        unaries_[static_cast<std::size_t>(s)] = std::move(phi);
    }

    // Attaches psi to the undirected edge {a, b}. The potential is stored
    // oriented: its first argument is min(a, b), second is max(a, b).
    void add_edge(NodeId a, NodeId b, std::shared_ptr<const PairwisePotential> psi) {
        check_node(a);
        check_node(b);
        require(a != b, "add_edge: self-edge");
        require(psi != nullptr, "add_edge: null potential");
        const Edge e = make_edge(a, b);
        require(!pairwise_.count(e), "add_edge: duplicate edge");
        edges_.push_back(e);
        pairwise_[e] = std::move(psi);
    }

    const std::vector<Edge>& edges() const { return edges_; }

    int node_dim(NodeId s) const {
        check_node(s);
        return node_dims_[static_cast<std::size_t>(s)];
    }

    const UnaryPotential& unary(NodeId s) const {
        check_node(s);
        const auto& p = unaries_[static_cast<std::size_t>(s)];
        require(p != nullptr, "unary: node " + std::to_string(s) + " has no unary potential");
        return *p;
    }

    const PairwisePotential& pairwise(NodeId a, NodeId b) const {
        const auto it = pairwise_.find(make_edge(a, b));
        require(it != pairwise_.end(), "pairwise: no edge (" + std::to_string(a) + "," +
                                           std::to_string(b) + ")");
        return *it->second;
    }

    bool has_edge(NodeId a, NodeId b) const { return pairwise_.count(make_edge(a, b)) > 0; }

    // Sorted, duplicate-free neighbor list of s.
    std::vector<NodeId> neighbors(NodeId s) const {
        check_node(s);
        std::vector<NodeId> out;
        for (const auto& [a, b] : edges_) {
            if (a == s) out.push_back(b);
            else if (b == s) out.push_back(a);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // Both directions of every edge, exactly once each, in a deterministic
    // order: edges sorted by (min, max), low endpoint first. All message
    // tables of one iteration are computed before any belief update.
    std::vector<DirectedEdge> sync_schedule() const {
        std::vector<Edge> sorted = edges_;
        std::sort(sorted.begin(), sorted.end());
        std::vector<DirectedEdge> out;
        out.reserve(2 * sorted.size());
        for (const auto& [a, b] : sorted) {
            out.push_back({a, b});
            out.push_back({b, a});
        }
        return out;
    }

    // Collects all structural violations instead of raising on the first.
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        std::set<Edge> seen;
        for (const auto& [a, b] : edges_) {
            if (a == b) v.push_back("self-edge at node " + std::to_string(a));
            if (a < 0 || a >= num_nodes() || b < 0 || b >= num_nodes())
                v.push_back("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") endpoint out of range");
            if (!seen.insert(make_edge(a, b)).second)
                v.push_back("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
        }
        for (NodeId s = 0; s < num_nodes(); ++s)
            if (!unaries_[static_cast<std::size_t>(s)])
                v.push_back("missing unary potential at node " + std::to_string(s));
        for (const auto& e : edges_) {
            const auto it = pairwise_.find(make_edge(e.first, e.second));
            if (it == pairwise_.end() || !it->second) {
                v.push_back("missing pairwise potential on edge (" + std::to_string(e.first) +
                            "," + std::to_string(e.second) + ")");
                continue;
            }
            const auto& psi = *it->second;
            const NodeId lo = std::min(e.first, e.second), hi = std::max(e.first, e.second);
            if (lo >= 0 && hi < num_nodes() && unaries_[static_cast<std::size_t>(lo)] &&
                unaries_[static_cast<std::size_t>(hi)]) {
                if (psi.dim_first() != node_dim(lo) || psi.dim_second() != node_dim(hi))
                    v.push_back("dimension mismatch on edge (" + std::to_string(lo) + "," +
                                std::to_string(hi) + ")");
            }
        }
        return v;
    }

private:
    void check_node(NodeId s) const {
        require(s >= 0 && s < num_nodes(), "unknown node " + std::to_string(s));
    }

    std::vector<int> node_dims_;
    std::vector<std::shared_ptr<const UnaryPotential>> unaries_;
    std::vector<Edge> edges_;
    std::map<Edge, std::shared_ptr<const PairwisePotential>> pairwise_;
};

// N weighted d-dimensional particles representing one node's marginal.
struct ParticleBelief {
    Eigen::MatrixXd particles;   // N x d
    Eigen::VectorXd log_weights; // length N; log-sum-exp == 0 when finalized

    ParticleBelief() = default;
    explicit ParticleBelief(Eigen::MatrixXd p)
        : particles(std::move(p)),
          log_weights(Eigen::VectorXd::Constant(particles.rows(),
                                                -std::log(static_cast<double>(particles.rows())))) {}

    Eigen::Index size() const { return particles.rows(); }
    Eigen::Index dim() const { return particles.cols(); }

    Eigen::VectorXd weights() const { return log_weights.array().exp(); }

    void set_log_weights_normalized(const Eigen::VectorXd& unnormalized_log) {
        log_weights = unnormalized_log.array() - logsumexp(unnormalized_log);
    }

    // Highest-weight particle; exact ties resolve to the lowest index.
    Eigen::VectorXd map_estimate() const {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < log_weights.size(); ++i)
            if (log_weights(i) > log_weights(best)) best = i;
        return particles.row(best);
    }
};

}  // namespace svbp
