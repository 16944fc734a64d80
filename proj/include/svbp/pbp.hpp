// Particle belief propagation baseline: per-iteration Gaussian jitter,
// message refresh over the jittered sets, belief reweighting, and
// systematic resampling back to equal weights.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svbp/common.hpp"
#include "svbp/graph.hpp"
#include "svbp/rng.hpp"
#include "svbp/svbp.hpp"

namespace svbp {

struct PbpConfig {
    int num_particles = 50;
    int num_iterations = 50;
    double jitter_scale = 0.05;  // per-dimension standard deviation
    std::uint64_t rng_seed = 0;
    int num_threads = 1;
};

// Standard systematic resampling: one uniform offset, N evenly spaced
// positions against the weight CDF. Expected copy count of index i is
// N * w_i.
inline std::vector<int> systematic_resample(const Eigen::VectorXd& weights, Rng& rng) {
    const Eigen::Index n = weights.size();
    require(n >= 1, "systematic_resample: empty weights");
    require(std::abs(weights.sum() - 1.0) <= 1e-9, "systematic_resample: weights not normalized");
    std::vector<int> out(static_cast<std::size_t>(n));
    const double u0 = rng.uniform(0.0, 1.0);
    double cum = weights(0);
    Eigen::Index i = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double u = (u0 + static_cast<double>(k)) / static_cast<double>(n);
        while (u > cum && i + 1 < n) cum += weights(++i);
        out[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
    return out;
}

class PbpEngine {
public:
    PbpEngine(const MrfGraph& graph, PbpConfig config)
        : graph_(graph), config_(config),
          inner_(graph, SvbpConfig{config.num_particles, 0, KernelSpec{}, StepPolicy{},
                                   config.rng_seed, 0.0, config.num_threads}) {}

    const MrfGraph& graph() const { return graph_; }
    const SvbpEngine& message_engine() const { return inner_; }

    SvbpState make_state(const std::vector<Eigen::MatrixXd>& init_particles) const {
        return inner_.make_state(init_particles);
    }

    // One round: jitter -> message refresh -> reweigh -> systematic resample.
    // The observer, when given, sees the weighted pre-resample state.
    void iterate(SvbpState& st, Rng& rng, const SvbpObserver& observer = {}) const {
        jitter(st, rng);
        inner_.refresh_messages(st);
        inner_.finalize_weights(st);
        if (observer) observer(st.iteration, st.beliefs);
        resample(st, rng);
        st.iteration += 1;
    }

    // Full run; after the last round the resampled set is refreshed and
    // reweighed once more so estimates use current tables.
    SvbpState run(const std::vector<Eigen::MatrixXd>& init_particles,
                  const SvbpObserver& observer = {}) const {
        SvbpState st = make_state(init_particles);
        Rng rng = Rng(config_.rng_seed).child("pbp");
        for (int k = 0; k < config_.num_iterations; ++k) iterate(st, rng, observer);
        inner_.refresh_messages(st);
        inner_.finalize_weights(st);
        if (observer) observer(st.iteration, st.beliefs);
        return st;
    }

    Eigen::VectorXd particle_weights(const SvbpState& st, NodeId s) const {
        return inner_.particle_weights(st, s);
    }
    Eigen::VectorXd map_estimate(const SvbpState& st, NodeId s) const {
        return inner_.map_estimate(st, s);
    }

private:
    void jitter(SvbpState& st, Rng& rng) const {
        if (config_.jitter_scale <= 0.0) return;
        for (NodeId s = 0; s < graph_.num_nodes(); ++s) {
            auto& X = st.beliefs[static_cast<std::size_t>(s)].particles;
            X += rng.normal_matrix(X.rows(), X.cols(), 0.0, config_.jitter_scale);
        }
        invalidate(st);
    }

    void resample(SvbpState& st, Rng& rng) const {
        for (NodeId s = 0; s < graph_.num_nodes(); ++s) {
            auto& belief = st.beliefs[static_cast<std::size_t>(s)];
            Eigen::VectorXd w = belief.weights();
            if (!w.allFinite() || w.sum() <= 0.0)
                throw DegeneracyError("pbp: degenerate weights at node " + std::to_string(s));
            w /= w.sum();
            const std::vector<int> idx = systematic_resample(w, rng);
            Eigen::MatrixXd fresh(belief.particles.rows(), belief.particles.cols());
            for (std::size_t k = 0; k < idx.size(); ++k)
                fresh.row(static_cast<Eigen::Index>(k)) =
                    belief.particles.row(idx[k]);
            belief.particles = std::move(fresh);
            belief.log_weights = Eigen::VectorXd::Constant(
                belief.particles.rows(),
                -std::log(static_cast<double>(belief.particles.rows())));
        }
        invalidate(st);
    }

    void invalidate(SvbpState& st) const {
        for (auto& v : st.unary_logs) v.resize(0);
        for (auto& g : st.unary_grads) g.resize(0, 0);
        for (auto& v : st.source_terms) v.resize(0);
        for (auto& m : st.pair_logs) m.resize(0, 0);
    }

    const MrfGraph& graph_;
    PbpConfig config_;
    SvbpEngine inner_;
};

}  // namespace svbp
