// Stein variational belief propagation: particle message tables, belief
// gradients assembled from unary scores plus message gradients, and the
// synchronous inference loop. Each node's marginal is a Stein particle set;
// messages are evaluated at the recipient's particles using the sender's
// particles as an equal-weight sampling set.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "svbp/common.hpp"
#include "svbp/graph.hpp"
#include "svbp/parallel.hpp"
#include "svbp/svgd.hpp"

namespace svbp {

struct SvbpConfig {
    int num_particles = 50;
    int num_iterations = 100;
    KernelSpec kernel;
    StepPolicy step;
    std::uint64_t rng_seed = 0;   // recorded for provenance; the loop itself is deterministic
    double message_damping = 0.0; // log-space damping in [0, 1); 0 = plain loopy updates
    int num_threads = 1;
    // Per-node kernel overrides (e.g. trajectory kernels bound to a robot's
    // state); empty means the RBF kernel from `kernel` everywhere.
    std::vector<std::shared_ptr<const ParticleKernel>> node_kernels;
};

// Cached log-message values for one directed edge t -> s, evaluated at the
// recipient's particles.
struct MessageTable {
    Eigen::VectorXd log_values;  // length N_s
    long version = 0;            // stamp incremented by each synchronous refresh
};

struct SvbpState {
    std::vector<ParticleBelief> beliefs;
    std::vector<MessageTable> tables;  // indexed parallel to the sync schedule
    long iteration = 0;
    long message_stamp = 0;  // incremented by each synchronous refresh

    // Refresh-time caches reused by the gradient pass within one iteration.
    // source_terms[e](j) = log phi_t(x_t_j) + sum_{u in rho(t)\s} log m_{u->t}(x_t_j);
    // pair_logs[e](j, i) = log psi(x_t_j, x_s_i).
    std::vector<Eigen::VectorXd> source_terms;
    std::vector<Eigen::MatrixXd> pair_logs;
    std::vector<Eigen::VectorXd> unary_logs;   // per node, at refresh-time particles
    std::vector<Eigen::MatrixXd> unary_grads;  // per node

    std::vector<StepState> step_states;  // per node
};

// Snapshot hook: called with exact belief weights before each particle step
// and once more after the final refresh.
using SvbpObserver =
    std::function<void(long iteration, const std::vector<ParticleBelief>& beliefs)>;

class SvbpEngine {
public:
    SvbpEngine(const MrfGraph& graph, SvbpConfig config)
        : graph_(graph), config_(std::move(config)), schedule_(graph.sync_schedule()) {
        const auto violations = graph_.validate();
        require(violations.empty(),
                "SvbpEngine: invalid graph: " + (violations.empty() ? "" : violations.front()));
        incoming_.resize(static_cast<std::size_t>(graph_.num_nodes()));
        for (std::size_t e = 0; e < schedule_.size(); ++e) {
            edge_index_[{schedule_[e].from, schedule_[e].to}] = static_cast<int>(e);
            incoming_[static_cast<std::size_t>(schedule_[e].to)].push_back(static_cast<int>(e));
        }
    }

    const MrfGraph& graph() const { return graph_; }
    const SvbpConfig& config() const { return config_; }
    const std::vector<DirectedEdge>& schedule() const { return schedule_; }

    int edge_index(NodeId from, NodeId to) const {
        const auto it = edge_index_.find({from, to});
        require(it != edge_index_.end(), "edge_index: no directed edge " + std::to_string(from) +
                                             "->" + std::to_string(to));
        return it->second;
    }

    SvbpState make_state(const std::vector<Eigen::MatrixXd>& init_particles) const {
        require(static_cast<int>(init_particles.size()) == graph_.num_nodes(),
                "make_state: one particle matrix per node required");
        SvbpState st;
        st.beliefs.reserve(init_particles.size());
        for (NodeId s = 0; s < graph_.num_nodes(); ++s) {
            const auto& X = init_particles[static_cast<std::size_t>(s)];
            require(X.cols() == graph_.node_dim(s),
                    "make_state: particle dimension mismatch at node " + std::to_string(s));
            require(X.rows() >= 1, "make_state: node " + std::to_string(s) + " has no particles");
            if (!X.allFinite())
                throw NumericError("make_state: non-finite init particles at node " +
                                   std::to_string(s));
            st.beliefs.emplace_back(X);
        }
        st.tables.resize(schedule_.size());
        for (std::size_t e = 0; e < schedule_.size(); ++e) {
            const Eigen::Index n_to = st.beliefs[static_cast<std::size_t>(schedule_[e].to)].size();
            st.tables[e].log_values = Eigen::VectorXd::Zero(n_to);  // uninformative init
            st.tables[e].version = 0;
        }
        st.source_terms.resize(schedule_.size());
        st.pair_logs.resize(schedule_.size());
        st.unary_logs.resize(static_cast<std::size_t>(graph_.num_nodes()));
        st.unary_grads.resize(static_cast<std::size_t>(graph_.num_nodes()));
        st.step_states.resize(static_cast<std::size_t>(graph_.num_nodes()));
        return st;
    }

    // Raw particle message for edge t -> s:
    //   log m(x_s_i) = logsumexp_j [ log phi_t(j) - log W_t(j) + log psi(j, i)
    //                                + sum_{u in rho(t)\s} log m_{u->t}(j) ] - log M.
    // W_t is the sampling distribution the sender's particles were drawn
    // from. The inference loop uses the sender's equal-weight particle set,
    // where the 1/(M W_t) factor is constant across j and cancels against
    // the 1/M normalizer; callers holding an actual sampling density (e.g.
    // oracle evaluations) can pass its log values at the sender's particles.
    Eigen::VectorXd update_message(SvbpState& st, NodeId t, NodeId s,
                                   const Eigen::VectorXd* log_sampling_density = nullptr) const {
        ensure_unary_cache(st);
        Eigen::VectorXd source;
        Eigen::MatrixXd pair_log;
        return compute_message(st, t, s, source, pair_log, log_sampling_density);
    }

    // One synchronous refresh: every directed-edge table is computed from
    // the previous stamp before any is published. Each stored table is
    // normalized to max = 0 (messages are defined up to a constant; pinning
    // the max keeps loopy magnitudes bounded across iterations).
    void refresh_messages(SvbpState& st) const {
        ensure_unary_cache(st);
        const int n_edges = static_cast<int>(schedule_.size());
        std::vector<Eigen::VectorXd> fresh(static_cast<std::size_t>(n_edges));
        std::vector<Eigen::VectorXd> sources(static_cast<std::size_t>(n_edges));
        std::vector<Eigen::MatrixXd> pairs(static_cast<std::size_t>(n_edges));
        parallel_for(n_edges, config_.num_threads, [&](int e) {
            const auto& de = schedule_[static_cast<std::size_t>(e)];
            fresh[static_cast<std::size_t>(e)] =
                compute_message(st, de.from, de.to, sources[static_cast<std::size_t>(e)],
                                pairs[static_cast<std::size_t>(e)]);
        });
        const double lambda = config_.message_damping;
        for (int e = 0; e < n_edges; ++e) {
            auto& table = st.tables[static_cast<std::size_t>(e)];
            Eigen::VectorXd v = fresh[static_cast<std::size_t>(e)];
            if (lambda > 0.0 && table.version > 0)
                v = (1.0 - lambda) * v + lambda * table.log_values;
            table.log_values = v.array() - v.maxCoeff();
            table.version = st.message_stamp + 1;
            st.source_terms[static_cast<std::size_t>(e)] =
                std::move(sources[static_cast<std::size_t>(e)]);
            st.pair_logs[static_cast<std::size_t>(e)] =
                std::move(pairs[static_cast<std::size_t>(e)]);
        }
        st.message_stamp += 1;
    }

    // Belief gradient: unary score plus, per incoming edge, the
    // softmax-weighted pairwise score over the sender's particles. The
    // softmax weights come from the same bracket that produced the message
    // values, so this is the exact log-space form of the message-gradient
    // quotient.
    Eigen::MatrixXd belief_log_grad(const SvbpState& st, NodeId s) const {
        const auto& belief = st.beliefs[static_cast<std::size_t>(s)];
        if (st.unary_grads[static_cast<std::size_t>(s)].rows() != belief.size())
            throw StalenessError("belief_log_grad: caches out of date for node " +
                                 std::to_string(s));
        Eigen::MatrixXd grad = st.unary_grads[static_cast<std::size_t>(s)];
        for (int e : incoming_[static_cast<std::size_t>(s)]) {
            const NodeId t = schedule_[static_cast<std::size_t>(e)].from;
            const auto& source = st.source_terms[static_cast<std::size_t>(e)];
            const auto& pair_log = st.pair_logs[static_cast<std::size_t>(e)];
            if (source.size() == 0 || pair_log.cols() != belief.size())
                throw StalenessError("belief_log_grad: message cache for edge " +
                                     std::to_string(t) + "->" + std::to_string(s) + " is stale");
            // W(j, i) = softmax over j of [source_j + pair_log(j, i)]
            Eigen::MatrixXd W = pair_log.colwise() + source;
            for (Eigen::Index i = 0; i < W.cols(); ++i) {
                const double m = W.col(i).maxCoeff();
                W.col(i) = (W.col(i).array() - m).exp();
                W.col(i) /= W.col(i).sum();
            }
            const auto& Xt = st.beliefs[static_cast<std::size_t>(t)].particles;
            const auto& Xs = belief.particles;
            const auto& psi = graph_.pairwise(t, s);
            if (t < s) {
                grad += psi.grad_second_weighted(Xt, Xs, W);
            } else {
                grad += psi.grad_first_weighted(Xs, Xt, W.transpose());
            }
        }
        for (Eigen::Index i = 0; i < grad.rows(); ++i)
            if (!grad.row(i).allFinite())
                throw NumericError("belief_log_grad: non-finite gradient at node " +
                                   std::to_string(s) + ", particle " + std::to_string(i));
        return grad;
    }

    // Normalized Eq.-(2) weights at the node's particles.
    Eigen::VectorXd particle_weights(const SvbpState& st, NodeId s) const {
        if (st.unary_logs[static_cast<std::size_t>(s)].size() !=
            st.beliefs[static_cast<std::size_t>(s)].size())
            throw StalenessError("particle_weights: tables stale for node " + std::to_string(s));
        return softmax_from_log(unnormalized_log_weights(st, s));
    }

    // Highest-weight particle; exact ties resolve to the lowest index.
    Eigen::VectorXd map_estimate(const SvbpState& st, NodeId s) const {
        const Eigen::VectorXd w = particle_weights(st, s);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < w.size(); ++i)
            if (w(i) > w(best)) best = i;
        return st.beliefs[static_cast<std::size_t>(s)].particles.row(best);
    }

    // One SVGD step on every node against the frozen tables, in parallel.
    // Results are identical for any worker count: each node's update reads
    // only frozen caches and writes its own slot.
    void step_particles(SvbpState& st) const {
        const int n = graph_.num_nodes();
        require(config_.node_kernels.empty() ||
                    static_cast<int>(config_.node_kernels.size()) == n,
                "step_particles: node_kernels must be empty or one per node");
        std::vector<Eigen::MatrixXd> directions(static_cast<std::size_t>(n));
        const RbfKernel default_kernel(config_.kernel);
        parallel_for(n, config_.num_threads, [&](int s) {
            const ParticleKernel& kernel =
                config_.node_kernels.empty()
                    ? static_cast<const ParticleKernel&>(default_kernel)
                    : *config_.node_kernels[static_cast<std::size_t>(s)];
            directions[static_cast<std::size_t>(s)] = stein_direction(
                st.beliefs[static_cast<std::size_t>(s)].particles, belief_log_grad(st, s), kernel);
        });
        for (NodeId s = 0; s < n; ++s)
            apply_step(st.beliefs[static_cast<std::size_t>(s)].particles,
                       directions[static_cast<std::size_t>(s)], config_.step,
                       st.step_states[static_cast<std::size_t>(s)]);
        invalidate_caches(st);
        st.iteration += 1;
    }

    // Message refresh followed by one particle step.
    void iterate(SvbpState& st) const {
        refresh_messages(st);
        finalize_weights(st);
        step_particles(st);
    }

    // Recomputes normalized belief weights from the current tables.
    void finalize_weights(SvbpState& st) const {
        ensure_unary_cache(st);
        for (NodeId s = 0; s < graph_.num_nodes(); ++s)
            st.beliefs[static_cast<std::size_t>(s)].set_log_weights_normalized(
                unnormalized_log_weights(st, s));
    }

    // Full run: K iterations plus a final refresh so weights and estimates
    // reflect the final particle positions. K = 0 returns the init
    // particles with a single table refresh.
    SvbpState run(const std::vector<Eigen::MatrixXd>& init_particles,
                  const SvbpObserver& observer = {}) const {
        SvbpState st = make_state(init_particles);
        try {
            for (int k = 0; k < config_.num_iterations; ++k) {
                refresh_messages(st);
                finalize_weights(st);
                if (observer) observer(st.iteration, st.beliefs);
                step_particles(st);
            }
            refresh_messages(st);
            finalize_weights(st);
            if (observer) observer(st.iteration, st.beliefs);
        } catch (const NumericError& err) {
            throw NumericError("iteration " + std::to_string(st.iteration) + ": " + err.what());
        }
        return st;
    }

    // Evaluates the unary caches at the current particles if missing.
    void ensure_unary_cache(SvbpState& st) const {
        parallel_for(graph_.num_nodes(), config_.num_threads, [&](int s) {
            auto& logs = st.unary_logs[static_cast<std::size_t>(s)];
            auto& grads = st.unary_grads[static_cast<std::size_t>(s)];
            const Eigen::Index n = st.beliefs[static_cast<std::size_t>(s)].size();
            if (logs.size() == n && grads.rows() == n) return;
            graph_.unary(s).evaluate(st.beliefs[static_cast<std::size_t>(s)].particles, logs,
                                     grads);
            if (!valid_log_density(logs))
                throw NumericError("unary log-potential invalid at node " + std::to_string(s));
        });
    }

private:
    Eigen::VectorXd unnormalized_log_weights(const SvbpState& st, NodeId s) const {
        Eigen::VectorXd log_w = st.unary_logs[static_cast<std::size_t>(s)];
        for (int e : incoming_[static_cast<std::size_t>(s)])
            log_w += st.tables[static_cast<std::size_t>(e)].log_values;
        return log_w;
    }

    void invalidate_caches(SvbpState& st) const {
        for (auto& v : st.unary_logs) v.resize(0);
        for (auto& g : st.unary_grads) g.resize(0, 0);
        for (auto& v : st.source_terms) v.resize(0);
        for (auto& m : st.pair_logs) m.resize(0, 0);
    }

    Eigen::VectorXd compute_message(const SvbpState& st, NodeId t, NodeId s,
                                    Eigen::VectorXd& source_out, Eigen::MatrixXd& pair_log_out,
                                    const Eigen::VectorXd* log_sampling_density = nullptr) const {
        const auto& sender = st.beliefs[static_cast<std::size_t>(t)];
        const auto& recipient = st.beliefs[static_cast<std::size_t>(s)];
        require(st.unary_logs[static_cast<std::size_t>(t)].size() == sender.size(),
                "update_message: unary cache missing for node " + std::to_string(t));

        Eigen::VectorXd source = st.unary_logs[static_cast<std::size_t>(t)];
        const long stamp = st.message_stamp;
        double norm_const = 0.0;
        if (log_sampling_density != nullptr) {
            require(log_sampling_density->size() == sender.size(),
                    "update_message: sampling density size mismatch");
            source -= *log_sampling_density;
            norm_const = std::log(static_cast<double>(sender.size()));
        }
        for (int e : incoming_[static_cast<std::size_t>(t)]) {
            const NodeId u = schedule_[static_cast<std::size_t>(e)].from;
            if (u == s) continue;
            const auto& table = st.tables[static_cast<std::size_t>(e)];
            if (table.version != stamp)
                throw StalenessError("update_message: incoming table " + std::to_string(u) +
                                     "->" + std::to_string(t) + " has stamp " +
                                     std::to_string(table.version) + ", expected " +
                                     std::to_string(stamp));
            source += table.log_values;
        }

        const auto& psi = graph_.pairwise(t, s);
        Eigen::MatrixXd L;
        if (t < s) {
            psi.evaluate(sender.particles, recipient.particles, L);
        } else {
            Eigen::MatrixXd Lt;
            psi.evaluate(recipient.particles, sender.particles, Lt);
            L = Lt.transpose();
        }
        if (!L.allFinite())
            throw NumericError("update_message: non-finite pairwise log-potential on edge " +
                               std::to_string(t) + "->" + std::to_string(s));

        Eigen::VectorXd log_m(recipient.size());
        for (Eigen::Index i = 0; i < recipient.size(); ++i)
            log_m(i) = logsumexp(source + L.col(i)) - norm_const;
        source_out = std::move(source);
        pair_log_out = std::move(L);
        return log_m;
    }

    const MrfGraph& graph_;
    SvbpConfig config_;
    std::vector<DirectedEdge> schedule_;
    std::vector<std::vector<int>> incoming_;  // per node: indices into schedule_
    std::map<std::pair<NodeId, NodeId>, int> edge_index_;
};

}  // namespace svbp
