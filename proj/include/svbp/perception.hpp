// Multi-robot localization benchmark: connected scenario generation on a
// bounded region, Gaussian-mixture observations with planted noise
// components, the distance pairwise potential, and the noise/particle-count
// sweep driver comparing SVBP against PBP.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <memory>
#include <string>
#include <vector>

#include "svbp/common.hpp"
#include "svbp/gibbs.hpp"
#include "svbp/graph.hpp"
#include "svbp/mmd.hpp"
#include "svbp/parallel.hpp"
#include "svbp/pbp.hpp"
#include "svbp/rng.hpp"
#include "svbp/svbp.hpp"

namespace svbp {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mixture-of-Gaussians observation: uniform component weights, shared
// isotropic sigma, first component at the true position.
struct GmmObservation {
    Eigen::MatrixXd means;  // C x 2
    double sigma = 0.25;
};

struct PerceptionScenario {
    Eigen::MatrixXd true_positions;  // n x 2
    Region region;
    double connect_radius = 2.0;
    std::vector<GmmObservation> observations;
    std::vector<Edge> edges;                 // induced by connect_radius
    std::map<Edge, double> observed_distance;  // L_st per edge
    double alpha = 100.0;
    int total_noise_components = 0;
    std::uint64_t seed = 0;
};

class GmmUnary final : public UnaryPotential {
public:
    explicit GmmUnary(GmmObservation obs) : obs_(std::move(obs)) {
        require(obs_.means.rows() >= 1, "GmmUnary: at least one component");
        require(obs_.sigma > 0.0, "GmmUnary: sigma must be positive");
    }

    int dim() const override { return 2; }

    void evaluate(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi,
                  Eigen::MatrixXd& grad) const override {
        Eigen::MatrixXd resp;
        eval_impl(X, log_phi, &resp);
        // grad = -(x - sum_c w_c mu_c) / sigma^2 with softmax responsibilities
        grad = -(X - resp * obs_.means) / (obs_.sigma * obs_.sigma);
    }

    void evaluate_values(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi) const override {
        eval_impl(X, log_phi, nullptr);
    }

    const GmmObservation& observation() const { return obs_; }

private:
    void eval_impl(const Eigen::MatrixXd& X, Eigen::VectorXd& log_phi,
                   Eigen::MatrixXd* responsibilities) const {
        const Eigen::Index n = X.rows();
        const Eigen::Index c = obs_.means.rows();
        const double inv2var = 1.0 / (2.0 * obs_.sigma * obs_.sigma);
        Eigen::MatrixXd comp(n, c);  // per-component log densities
        const Eigen::VectorXd xn = X.rowwise().squaredNorm();
        const Eigen::VectorXd mn = obs_.means.rowwise().squaredNorm();
        comp = -(xn.replicate(1, c) + mn.transpose().replicate(n, 1) -
                 2.0 * (X * obs_.means.transpose())) *
               inv2var;
        const double log_norm = -std::log(2.0 * M_PI * obs_.sigma * obs_.sigma) -
                                std::log(static_cast<double>(c));
        log_phi.resize(n);
        if (responsibilities) responsibilities->resize(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = comp.row(i).maxCoeff();
            const Eigen::ArrayXd e = (comp.row(i).transpose().array() - m).exp();
            const double sum = e.sum();
            log_phi(i) = m + std::log(sum) + log_norm;
            if (responsibilities) responsibilities->row(i) = (e / sum).matrix().transpose();
        }
    }

    GmmObservation obs_;
};

// log psi(a, b) = -alpha * (||a - b|| - L)^2; symmetric in its arguments.
// The gradient at a == b is taken as zero (subgradient choice).
class DistancePairwise final : public PairwisePotential {
public:
    DistancePairwise(double observed_distance, double alpha)
        : L_(observed_distance), alpha_(alpha) {
        require(alpha_ > 0.0, "DistancePairwise: alpha must be positive");
    }

    int dim_first() const override { return 2; }
    int dim_second() const override { return 2; }
    bool symmetric() const override { return true; }

    void evaluate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                  Eigen::MatrixXd& L) const override {
        L = -alpha_ * (pair_distances(A, B).array() - L_).square();
    }

    void grad_second(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     std::vector<Eigen::MatrixXd>& out) const override {
        const Eigen::MatrixXd D = pair_distances(A, B);
        out.assign(static_cast<std::size_t>(A.rows()), Eigen::MatrixXd(B.rows(), 2));
        for (Eigen::Index j = 0; j < A.rows(); ++j)
            for (Eigen::Index i = 0; i < B.rows(); ++i)
                out[static_cast<std::size_t>(j)].row(i) =
                    grad_wrt_left(B.row(i), A.row(j), D(j, i));
    }

    void grad_first(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                    std::vector<Eigen::MatrixXd>& out) const override {
        const Eigen::MatrixXd D = pair_distances(A, B);
        out.assign(static_cast<std::size_t>(B.rows()), Eigen::MatrixXd(A.rows(), 2));
        for (Eigen::Index i = 0; i < B.rows(); ++i)
            for (Eigen::Index j = 0; j < A.rows(); ++j)
                out[static_cast<std::size_t>(i)].row(j) =
                    grad_wrt_left(A.row(j), B.row(i), D(j, i));
    }

    Eigen::MatrixXd grad_second_weighted(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                         const Eigen::MatrixXd& W) const override {
        const Eigen::MatrixXd D = pair_distances(A, B);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(B.rows(), 2);
        for (Eigen::Index i = 0; i < B.rows(); ++i) {
            Eigen::RowVector2d g = Eigen::RowVector2d::Zero();
            for (Eigen::Index j = 0; j < A.rows(); ++j)
                g += W(j, i) * grad_wrt_left(B.row(i), A.row(j), D(j, i));
            acc.row(i) = g;
        }
        return acc;
    }

    double observed_distance() const { return L_; }
    double alpha() const { return alpha_; }

private:
    // gradient of log psi w.r.t. the point x given the other endpoint y
    Eigen::RowVector2d grad_wrt_left(const Eigen::RowVector2d& x, const Eigen::RowVector2d& y,
                                     double d) const {
        if (d < 1e-12) return Eigen::RowVector2d::Zero();
        return (-2.0 * alpha_ * (d - L_) / d) * (x - y);
    }

    static Eigen::MatrixXd pair_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        const Eigen::VectorXd an = A.rowwise().squaredNorm();
        const Eigen::VectorXd bn = B.rowwise().squaredNorm();
        Eigen::MatrixXd sq = an.replicate(1, B.rows()) +
                             bn.transpose().replicate(A.rows(), 1) - 2.0 * (A * B.transpose());
        return sq.cwiseMax(0.0).cwiseSqrt();
    }

    double L_;
    double alpha_;
};

inline std::pair<double, Eigen::Vector2d> gmm_log_density_and_grad(const GmmObservation& obs,
                                                                   const Eigen::Vector2d& x) {
    GmmUnary unary(obs);
    Eigen::VectorXd v;
    Eigen::MatrixXd g;
    unary.evaluate(x.transpose(), v, g);
    return {v(0), g.row(0)};
}

inline std::pair<double, Eigen::Vector2d> distance_pairwise(const Eigen::Vector2d& xs,
                                                            const Eigen::Vector2d& xt, double L,
                                                            double alpha) {
    DistancePairwise psi(L, alpha);
    std::vector<Eigen::MatrixXd> g;
    psi.grad_first(xs.transpose(), xt.transpose(), g);
    return {psi.log_psi(xs, xt), g[0].row(0)};
}

namespace detail {

inline bool radius_graph_connected(const Eigen::MatrixXd& positions, double radius) {
    const Eigen::Index n = positions.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    Eigen::Index count = 1;
    while (!stack.empty()) {
        const Eigen::Index s = stack.back();
        stack.pop_back();
        for (Eigen::Index t = 0; t < n; ++t) {
            if (seen[static_cast<std::size_t>(t)]) continue;
            if ((positions.row(s) - positions.row(t)).norm() <= radius) {
                seen[static_cast<std::size_t>(t)] = true;
                stack.push_back(t);
                ++count;
            }
        }
    }
    return count == n;
}

}  // namespace detail

struct ScenarioParams {
    int num_nodes = 8;
    Region region{0.0, 10.0, 0.0, 10.0};
    double connect_radius = 2.0;
    double gmm_sigma = 0.25;
    double alpha = 100.0;
    double distance_noise_sigma = 0.1;  // Gaussian observation noise on L_st
    long max_placement_tries = 200000;
};

// Rejection-samples node positions until the radius graph is connected,
// then builds the mixture observations: one component at each true
// position plus `num_noise_components` uniformly placed components
// assigned to random nodes.
inline PerceptionScenario generate_scenario(int num_noise_components, std::uint64_t seed,
                                            const ScenarioParams& params = {}) {
    require(params.num_nodes >= 1, "generate_scenario: need at least one node");
    require(params.region.valid(), "generate_scenario: invalid region");
    Rng rng = Rng(seed).child("scenario");

    PerceptionScenario sc;
    sc.region = params.region;
    sc.connect_radius = params.connect_radius;
    sc.alpha = params.alpha;
    sc.total_noise_components = num_noise_components;
    sc.seed = seed;

    bool placed = false;
    for (long attempt = 0; attempt < params.max_placement_tries; ++attempt) {
        Eigen::MatrixXd pos(params.num_nodes, 2);
        for (int s = 0; s < params.num_nodes; ++s) {
            pos(s, 0) = rng.uniform(params.region.xmin, params.region.xmax);
            pos(s, 1) = rng.uniform(params.region.ymin, params.region.ymax);
        }
        if (params.num_nodes == 1 || detail::radius_graph_connected(pos, params.connect_radius)) {
            sc.true_positions = pos;
            placed = true;
            break;
        }
    }
    if (!placed)
        throw GenerationError("generate_scenario: no connected placement found after " +
                              std::to_string(params.max_placement_tries) + " tries");

    for (int s = 0; s < params.num_nodes; ++s) {
        GmmObservation obs;
        obs.sigma = params.gmm_sigma;
        obs.means = sc.true_positions.row(s);
        sc.observations.push_back(obs);
    }
    for (int c = 0; c < num_noise_components; ++c) {
        const int node = static_cast<int>(rng.uniform_int(0, params.num_nodes - 1));
        auto& means = sc.observations[static_cast<std::size_t>(node)].means;
        means.conservativeResize(means.rows() + 1, 2);
        means(means.rows() - 1, 0) = rng.uniform(params.region.xmin, params.region.xmax);
        means(means.rows() - 1, 1) = rng.uniform(params.region.ymin, params.region.ymax);
    }

    for (int a = 0; a < params.num_nodes; ++a)
        for (int b = a + 1; b < params.num_nodes; ++b) {
            const double d = (sc.true_positions.row(a) - sc.true_positions.row(b)).norm();
            if (d <= params.connect_radius) {
                sc.edges.push_back({a, b});
                double observed = d;
                if (params.distance_noise_sigma > 0.0)
                    observed += rng.normal(0.0, params.distance_noise_sigma);
                sc.observed_distance[{a, b}] = observed;
            }
        }
    return sc;
}

inline MrfGraph make_graph(const PerceptionScenario& sc) {
    MrfGraph g(static_cast<int>(sc.true_positions.rows()));
    for (int s = 0; s < g.num_nodes(); ++s)
        g.set_unary(s, std::make_shared<GmmUnary>(sc.observations[static_cast<std::size_t>(s)]));
    for (const auto& e : sc.edges)
        g.add_edge(e.first, e.second,
                   std::make_shared<DistancePairwise>(sc.observed_distance.at(e), sc.alpha));
    return g;
}

// ---------------------------------------------------------------------------
// Sweep driver

struct SweepCell {
    std::string method;
    int noise = 0;
    int particles = 0;
    int run = 0;
    double error = 0.0;
    double mmd = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct SweepConfig {
    std::vector<int> noise_levels{0, 8, 16, 24, 32};
    std::vector<int> particle_counts{50};
    int runs = 10;
    bool run_svbp = true;
    bool run_pbp = true;
    bool compute_mmd = false;

    int svbp_iterations = 100;  // per benchmark protocol
    int pbp_iterations = 50;
    double svbp_step = 0.1;
    double svbp_step_decay = 1.0;
    double pbp_jitter = 0.05;

    // low-weight reset hook (off by default): re-init particles below 1% of
    // the max weight, uniformly over the region, every reset_every iterations
    bool reset_low_weight = false;
    int reset_every = 25;

    ScenarioParams scenario;
    GibbsConfig gibbs;
    std::uint64_t seed = 0;
    int jobs = 1;

    // Ground-truth persistence hooks: `ground_truth_source` may return a
    // previously serialized sample set for (noise, run) to skip re-sampling;
    // `ground_truth_sink` receives freshly sampled sets for serialization.
    std::function<std::optional<std::vector<Eigen::MatrixXd>>(int noise, int run)>
        ground_truth_source;
    std::function<void(int noise, int run, const std::vector<Eigen::MatrixXd>&)>
        ground_truth_sink;
};

// Per-iteration snapshot hook for plot-data emission.
using SweepObserver = std::function<void(const SweepCell& cell, long iteration,
                                         const std::vector<ParticleBelief>& beliefs)>;

inline SvbpState run_svbp_perception(const MrfGraph& graph, const PerceptionScenario& sc,
                                     const SweepConfig& cfg, int particles, Rng init_rng,
                                     const SvbpObserver& observer = {}) {
    SvbpConfig scfg;
    scfg.num_particles = particles;
    scfg.num_iterations = cfg.svbp_iterations;
    scfg.step = StepPolicy{StepPolicy::Mode::Adaptive, cfg.svbp_step, cfg.svbp_step_decay};
    SvbpEngine engine(graph, scfg);
    std::vector<Eigen::MatrixXd> init;
    for (int s = 0; s < graph.num_nodes(); ++s)
        init.push_back(init_rng.uniform_matrix(particles, 2, sc.region.xmin, sc.region.xmax));
    if (!cfg.reset_low_weight) return engine.run(init, observer);

    // manual loop with the low-weight reset hook
    Rng reset_rng = init_rng.child("reset");
    SvbpState st = engine.make_state(init);
    for (int k = 0; k < cfg.svbp_iterations; ++k) {
        if (k > 0 && k % cfg.reset_every == 0) {
            for (int s = 0; s < graph.num_nodes(); ++s) {
                auto& belief = st.beliefs[static_cast<std::size_t>(s)];
                const Eigen::VectorXd w = belief.weights();
                const double cutoff = 0.01 * w.maxCoeff();
                for (Eigen::Index i = 0; i < w.size(); ++i)
                    if (w(i) < cutoff) {
                        belief.particles(i, 0) = reset_rng.uniform(sc.region.xmin, sc.region.xmax);
                        belief.particles(i, 1) = reset_rng.uniform(sc.region.ymin, sc.region.ymax);
                    }
            }
            for (auto& v : st.unary_logs) v.resize(0);
            for (auto& g2 : st.unary_grads) g2.resize(0, 0);
        }
        engine.refresh_messages(st);
        engine.finalize_weights(st);
        if (observer) observer(st.iteration, st.beliefs);
        engine.step_particles(st);
    }
    engine.refresh_messages(st);
    engine.finalize_weights(st);
    if (observer) observer(st.iteration, st.beliefs);
    return st;
}

inline SvbpState run_pbp_perception(const MrfGraph& graph, const PerceptionScenario& sc,
                                    const SweepConfig& cfg, int particles, Rng init_rng,
                                    std::uint64_t pbp_seed, const SvbpObserver& observer = {}) {
    PbpConfig pcfg;
    pcfg.num_particles = particles;
    pcfg.num_iterations = cfg.pbp_iterations;
    pcfg.jitter_scale = cfg.pbp_jitter;
    pcfg.rng_seed = pbp_seed;
    PbpEngine engine(graph, pcfg);
    std::vector<Eigen::MatrixXd> init;
    for (int s = 0; s < graph.num_nodes(); ++s)
        init.push_back(init_rng.uniform_matrix(particles, 2, sc.region.xmin, sc.region.xmax));
    return engine.run(init, observer);
}

namespace detail {

inline void run_methods(const SweepConfig& cfg, const PerceptionScenario& sc,
                        const MrfGraph& graph, int noise, int run,
                        const std::vector<Eigen::MatrixXd>* ground_truth,
                        std::vector<SweepCell>& out, const SweepObserver& observer) {
    for (int particles : cfg.particle_counts) {
        const Rng init_base = Rng(cfg.seed).child("init", static_cast<std::uint64_t>(noise),
                                                  static_cast<std::uint64_t>(run));
        for (int method = 0; method < 2; ++method) {
            if (method == 0 && !cfg.run_svbp) continue;
            if (method == 1 && !cfg.run_pbp) continue;
            SweepCell cell;
            cell.method = method == 0 ? "svbp" : "pbp";
            cell.noise = noise;
            cell.particles = particles;
            cell.run = run;
            SvbpObserver obs;
            if (observer)
                obs = [&](long iter, const std::vector<ParticleBelief>& b) {
                    observer(cell, iter, b);
                };
            const Rng init_rng =
                init_base.child("particles", static_cast<std::uint64_t>(particles));
            const auto t0 = std::chrono::steady_clock::now();
            const SvbpState st =
                method == 0
                    ? run_svbp_perception(graph, sc, cfg, particles, init_rng, obs)
                    : run_pbp_perception(
                          graph, sc, cfg, particles, init_rng,
                          detail::splitmix64(cfg.seed ^
                                             detail::splitmix64(
                                                 0xabcdULL + static_cast<std::uint64_t>(noise) +
                                                 1315423911ULL * static_cast<std::uint64_t>(
                                                                     run + 1))),
                          obs);
            const auto t1 = std::chrono::steady_clock::now();
            cell.seconds = std::chrono::duration<double>(t1 - t0).count();

            Eigen::MatrixXd estimates(graph.num_nodes(), 2);
            for (int s = 0; s < graph.num_nodes(); ++s)
                estimates.row(s) = st.beliefs[static_cast<std::size_t>(s)].map_estimate();
            cell.error = node_error(estimates, sc.true_positions);

            if (ground_truth) {
                double acc = 0.0;
                for (int s = 0; s < graph.num_nodes(); ++s) {
                    const auto& belief = st.beliefs[static_cast<std::size_t>(s)];
                    acc += mmd_weighted((*ground_truth)[static_cast<std::size_t>(s)],
                                        belief.particles, belief.weights())
                               .mmd_squared;
                }
                cell.mmd = acc / graph.num_nodes();
            }
            out.push_back(std::move(cell));
        }
    }
}

}  // namespace detail

// Executes the full (noise x particles x run x method) grid. Scenarios,
// inits, and ground truth are derived from named substreams so methods see
// identical problems; the (noise, run) tasks are independent and may run in
// parallel.
inline std::vector<SweepCell> run_sweep(const SweepConfig& cfg,
                                        const SweepObserver& observer = {}) {
    struct Task {
        int noise, run;
    };
    std::vector<Task> tasks;
    for (int noise : cfg.noise_levels)
        for (int run = 0; run < cfg.runs; ++run) tasks.push_back({noise, run});

    std::vector<std::vector<SweepCell>> results(tasks.size());

    parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int ti) {
        const auto [noise, run] = tasks[static_cast<std::size_t>(ti)];
        const std::uint64_t scenario_seed = detail::splitmix64(
            cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(noise) * 2654435761ULL +
                                          static_cast<std::uint64_t>(run) + 1));
        const PerceptionScenario sc = generate_scenario(noise, scenario_seed, cfg.scenario);
        const MrfGraph graph = make_graph(sc);

        if (cfg.compute_mmd) {
            std::vector<Eigen::MatrixXd> samples;
            std::optional<std::vector<Eigen::MatrixXd>> cached;
            if (cfg.ground_truth_source) cached = cfg.ground_truth_source(noise, run);
            if (cached.has_value()) {
                samples = std::move(*cached);
            } else {
                GibbsConfig gc = cfg.gibbs;
                gc.rng_seed = scenario_seed ^ 0x517cc1b727220a95ULL;
                samples = gibbs_marginals(graph, sc.region, gc);
                if (cfg.ground_truth_sink) cfg.ground_truth_sink(noise, run, samples);
            }
            detail::run_methods(cfg, sc, graph, noise, run, &samples,
                                results[static_cast<std::size_t>(ti)], observer);
        } else {
            detail::run_methods(cfg, sc, graph, noise, run, nullptr,
                                results[static_cast<std::size_t>(ti)], observer);
        }
    });

    std::vector<SweepCell> flat;
    for (auto& r : results)
        for (auto& c : r) flat.push_back(std::move(c));
    return flat;
}

}  // namespace svbp
