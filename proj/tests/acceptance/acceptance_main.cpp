// Acceptance suite: eight end-to-end criteria covering oracle equivalence,
// the analytic-gradient contract, the benchmark trend reproductions, the
// decentralized harness, and the numerical invariants. Each criterion
// prints one pass/fail line with its measured values and must finish within
// its runtime budget. Exit code = number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "support/finite_diff.hpp"
#include "support/gaussian_potentials.hpp"
#include "svbp/gabp.hpp"
#include "svbp/gibbs.hpp"
#include "svbp/mmd.hpp"
#include "svbp/pbp.hpp"
#include "svbp/perception.hpp"
#include "svbp/planning/gabp_planner.hpp"
#include "svbp/planning/mpc.hpp"
#include "svbp/svbp.hpp"
#include "svbp/swarm.hpp"

using namespace svbp;
using testsupport::DenseGaussianOracle;
using testsupport::GaussianUnary;
using testsupport::OffsetGaussianPairwise;
using testsupport::UniformUnary;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

// ---------------------------------------------------------------------------
// 1. oracle equivalence on linear-Gaussian graphs

Outcome criterion1() {
    Outcome out;
    SvbpConfig cfg;
    cfg.num_iterations = 500;
    cfg.step = StepPolicy{StepPolicy::Mode::Adaptive, 0.1, 1.0};

    // 2-node chain
    {
        MrfGraph g(2);
        const Eigen::VectorXd mu0 = Eigen::VectorXd::Constant(1, -0.5);
        const Eigen::VectorXd mu1 = Eigen::VectorXd::Constant(1, 1.5);
        const Eigen::VectorXd offset = Eigen::VectorXd::Constant(1, 0.4);
        g.set_unary(0, std::make_shared<GaussianUnary>(mu0, 1.0));
        g.set_unary(1, std::make_shared<GaussianUnary>(mu1, 0.8));
        g.add_edge(0, 1, std::make_shared<OffsetGaussianPairwise>(offset, 1.2));
        DenseGaussianOracle oracle;
        oracle.dims = {1, 1};
        oracle.unaries = {{0, mu0, 1.0}, {1, mu1, 0.8}};
        oracle.pairs = {{0, 1, offset, 1.2}};

        Rng rng(101);
        std::vector<Eigen::MatrixXd> init;
        for (int s = 0; s < 2; ++s) init.push_back(rng.uniform_matrix(50, 1, -3.0, 3.0));
        const SvbpState st = SvbpEngine(g, cfg).run(init);
        double worst = 0.0;
        for (int s = 0; s < 2; ++s)
            worst = std::max(worst,
                             std::abs(st.beliefs[static_cast<std::size_t>(s)].particles.col(0).mean() -
                                      oracle.marginal_mean(s)(0)));
        out.check(worst <= 0.05, "2-node mean error " + std::to_string(worst));
        out.note("2-node worst mean err " + std::to_string(worst));
    }
    // 4-node chain, 2-D nodes
    {
        MrfGraph g(4);
        DenseGaussianOracle oracle;
        oracle.dims = {2, 2, 2, 2};
        Rng prng(55);
        for (int s = 0; s < 4; ++s) {
            const Eigen::VectorXd mu = prng.normal_matrix(2, 1, 0.0, 1.5);
            const double sigma = prng.uniform(0.8, 1.4);
            g.set_unary(s, std::make_shared<GaussianUnary>(mu, sigma));
            oracle.unaries.push_back({s, mu, sigma});
        }
        for (int s = 0; s + 1 < 4; ++s) {
            const Eigen::VectorXd offset = prng.normal_matrix(2, 1, 0.0, 0.4);
            const double sigma = prng.uniform(0.9, 1.3);
            g.add_edge(s, s + 1, std::make_shared<OffsetGaussianPairwise>(offset, sigma));
            oracle.pairs.push_back({s, s + 1, offset, sigma});
        }
        Rng rng(102);
        std::vector<Eigen::MatrixXd> init;
        for (int s = 0; s < 4; ++s) init.push_back(rng.uniform_matrix(50, 2, -3.0, 3.0));
        const SvbpState st = SvbpEngine(g, cfg).run(init);
        double worst = 0.0;
        for (int s = 0; s < 4; ++s) {
            const Eigen::VectorXd got =
                st.beliefs[static_cast<std::size_t>(s)].particles.colwise().mean();
            worst = std::max(worst, (got - oracle.marginal_mean(s)).norm());
        }
        out.check(worst <= 0.05, "4-node mean error " + std::to_string(worst));
        out.note("4-node worst mean err " + std::to_string(worst));
    }
    // GaBP on a linear-Gaussian tree vs dense least squares
    {
        Rng rng(11);
        std::vector<GaussianFactor> factors;
        Eigen::MatrixXd AtA = Eigen::MatrixXd::Zero(4, 4);
        Eigen::VectorXd Atb = Eigen::VectorXd::Zero(4);
        auto linear = [](std::vector<int> vars, Eigen::MatrixXd A, Eigen::MatrixXd S,
                         Eigen::VectorXd b) {
            GaussianFactor f;
            f.vars = std::move(vars);
            f.bias = std::move(b);
            f.sigma_inv = std::move(S);
            f.eval = [A](const std::vector<Eigen::VectorXd>& x) {
                Eigen::VectorXd stacked(A.cols());
                Eigen::Index off = 0;
                for (const auto& v : x) {
                    stacked.segment(off, v.size()) = v;
                    off += v.size();
                }
                return FactorEval{A * stacked, A};
            };
            return f;
        };
        for (int s = 0; s < 4; ++s) {
            const double target = rng.normal(0.0, 2.0);
            const double weight = rng.uniform(0.5, 2.0);
            factors.push_back(linear({s}, Eigen::MatrixXd::Identity(1, 1),
                                     weight * Eigen::MatrixXd::Identity(1, 1),
                                     Eigen::VectorXd::Constant(1, target)));
            AtA(s, s) += weight;
            Atb(s) += weight * target;
        }
        for (int leaf = 1; leaf < 4; ++leaf) {
            Eigen::MatrixXd D(1, 2);
            D << -1, 1;
            const double weight = rng.uniform(0.5, 2.0);
            const double offset = rng.normal(0.0, 1.0);
            factors.push_back(linear({0, leaf}, D, weight * Eigen::MatrixXd::Identity(1, 1),
                                     Eigen::VectorXd::Constant(1, offset)));
            Eigen::MatrixXd full = Eigen::MatrixXd::Zero(1, 4);
            full(0, 0) = -1;
            full(0, leaf) = 1;
            AtA += full.transpose() * weight * full;
            Atb += full.transpose() * weight * offset;
        }
        const Eigen::VectorXd dense = AtA.ldlt().solve(Atb);
        GabpConfig gc;
        gc.iterations = 10;
        gc.damping = 0.0;
        const GabpResult res = GabpSolver({1, 1, 1, 1}, factors, gc)
                                   .solve(std::vector<Eigen::VectorXd>(4, Eigen::VectorXd::Zero(1)));
        double worst = 0.0;
        for (int s = 0; s < 4; ++s)
            worst = std::max(worst, std::abs(res.means[static_cast<std::size_t>(s)](0) - dense(s)));
        out.check(worst <= 1e-8, "gabp tree error " + std::to_string(worst));
        out.note("gabp tree err " + std::to_string(worst));
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2. analytic gradients vs central finite differences

Outcome criterion2() {
    Outcome out;
    const double tol = 1e-4;
    auto report = [&](const std::string& name, int checked, double worst) {
        out.check(checked >= 100, name + ": only " + std::to_string(checked) + " probes");
        out.check(worst <= tol, name + " worst rel err " + std::to_string(worst));
    };

    {  // GMM unary
        Rng rng(201);
        GmmObservation obs;
        obs.means = rng.uniform_matrix(5, 2, 0.0, 10.0);
        obs.sigma = 0.25;
        GmmUnary unary(obs);
        int checked = 0;
        double worst = 0.0;
        for (int probe = 0; probe < 600 && checked < 120; ++probe) {
            const Eigen::VectorXd x = rng.uniform_matrix(2, 1, 0.0, 10.0);
            const Eigen::VectorXd fd = testsupport::central_diff(
                [&](const Eigen::VectorXd& p) { return unary.log_phi(p); }, x);
            if (fd.norm() < 1e-3) continue;  // flat far field
            worst = std::max(worst, testsupport::grad_rel_error(unary.grad_log_phi(x), fd));
            ++checked;
        }
        report("gmm-unary", checked, worst);
    }
    {  // distance pairwise
        Rng rng(202);
        DistancePairwise psi(1.2, 100.0);
        int checked = 0;
        double worst = 0.0;
        for (int probe = 0; probe < 600 && checked < 120; ++probe) {
            const Eigen::VectorXd a = rng.uniform_matrix(2, 1, -2.0, 2.0);
            const Eigen::VectorXd b = rng.uniform_matrix(2, 1, -2.0, 2.0);
            if ((a - b).norm() <= 1e-3) continue;
            const Eigen::VectorXd fd = testsupport::central_diff(
                [&](const Eigen::VectorXd& p) { return psi.log_psi(p, b); }, a);
            worst = std::max(worst, testsupport::grad_rel_error(psi.grad_log_psi_first(a, b), fd));
            ++checked;
        }
        report("distance-pairwise", checked, worst);
    }
    {  // trajectory unary через rollouts
        PlanningScenario sc = scenarios::scatter_field();
        const DynamicsModel& m = sc.model;
        TrajectoryUnary unary(m, sc.env, scenarios::rest_state(m, {1.0, 1.0}), {9.0, 9.0},
                              sc.weights);
        Rng rng(203);
        int checked = 0;
        double worst = 0.0;
        for (int probe = 0; probe < 800 && checked < 110; ++probe) {
            const Eigen::VectorXd flat =
                rng.normal_matrix(m.trajectory_dim(), 1, 0.0, 0.25 * m.control_limit);
            if ((flat.cwiseAbs().array() > 0.95 * m.control_limit).any()) continue;
            const Eigen::MatrixXd states =
                m.rollout_flat(scenarios::rest_state(m, {1.0, 1.0}), flat);
            bool kink = false;
            for (int k = 1; k <= m.horizon; ++k)
                if (std::abs(sc.env.signed_distance(states.row(k).head<2>()) -
                             sc.weights.obstacle_margin) < 1e-3)
                    kink = true;
            if (kink) continue;
            const Eigen::VectorXd fd = testsupport::central_diff(
                [&](const Eigen::VectorXd& p) { return unary.log_phi(p); }, flat);
            worst = std::max(worst, testsupport::grad_rel_error(unary.grad_log_phi(flat), fd));
            ++checked;
        }
        report("trajectory-unary", checked, worst);
    }
    {  // trajectory collision pairwise
        const DynamicsModel m = DynamicsModel::double_integrator();
        CollisionParams cp;
        const Eigen::VectorXd t0a = scenarios::rest_state(m, {4.70, 5.0});
        const Eigen::VectorXd t0b = scenarios::rest_state(m, {5.30, 5.0});
        CollisionPairwise psi(m, t0a, t0b, cp);
        Rng rng(204);
        int checked = 0;
        double worst = 0.0;
        for (int probe = 0; probe < 5000 && checked < 110; ++probe) {
            const Eigen::VectorXd ua = rng.normal_matrix(m.trajectory_dim(), 1, 0.0, 0.3);
            const Eigen::VectorXd ub = rng.normal_matrix(m.trajectory_dim(), 1, 0.0, 0.3);
            if ((ua.cwiseAbs().array() > 0.95 * m.control_limit).any()) continue;
            if ((ub.cwiseAbs().array() > 0.95 * m.control_limit).any()) continue;
            const Eigen::MatrixXd sa = m.rollout_flat(t0a, ua);
            const Eigen::MatrixXd sb = m.rollout_flat(t0b, ub);
            bool usable = false, kink = false;
            for (int k = 0; k <= m.horizon; ++k) {
                const double d = (sa.row(k).head<2>() - sb.row(k).head<2>()).norm();
                if (d < cp.r - 0.02) usable = true;
                if (std::abs(d - cp.r) < 1e-3 || d < 5e-3) kink = true;
            }
            if (!usable || kink) continue;
            const Eigen::VectorXd fd = testsupport::central_diff(
                [&](const Eigen::VectorXd& p) { return psi.log_psi(ua, p); }, ub);
            std::vector<Eigen::MatrixXd> g;
            psi.grad_second(ua.transpose(), ub.transpose(), g);
            worst = std::max(worst,
                             testsupport::grad_rel_error(g[0].row(0).transpose(), fd));
            ++checked;
        }
        report("trajectory-collision", checked, worst);
    }
    {  // message gradients on M <= 5 instances: FD oracle + explicit quotient
        Rng rng(205);
        double worst_fd = 0.0, worst_quotient = 0.0;
        int checked = 0;
        for (int inst = 0; inst < 25; ++inst) {
            MrfGraph g(2);
            auto phi0 =
                std::make_shared<GaussianUnary>(rng.normal_matrix(2, 1), rng.uniform(0.6, 1.2));
            g.set_unary(0, phi0);
            g.set_unary(1, std::make_shared<UniformUnary>(2));
            auto psi = std::make_shared<OffsetGaussianPairwise>(rng.normal_matrix(2, 1) * 0.3,
                                                                rng.uniform(0.8, 1.4));
            g.add_edge(0, 1, psi);
            SvbpConfig cfg;
            SvbpEngine engine(g, cfg);
            const int M = 2 + inst % 4;  // 2..5 sender particles
            Eigen::MatrixXd X0 = rng.normal_matrix(M, 2);
            Eigen::MatrixXd X1 = rng.normal_matrix(5, 2);
            auto st = engine.make_state({X0, X1});
            engine.refresh_messages(st);
            const Eigen::MatrixXd grad = engine.belief_log_grad(st, 1);
            for (int i = 0; i < 5; ++i) {
                // flat unary at node 1: the belief gradient is the message gradient
                auto eval_at = [&](const Eigen::VectorXd& x) {
                    SvbpState probe = engine.make_state({X0, X1});
                    probe.beliefs[1].particles.row(i) = x.transpose();
                    const Eigen::VectorXd msg = engine.update_message(probe, 0, 1);
                    return msg(i);
                };
                const Eigen::VectorXd fd =
                    testsupport::central_diff(eval_at, X1.row(i).transpose());
                worst_fd = std::max(worst_fd,
                                    testsupport::grad_rel_error(grad.row(i).transpose(), fd));
                // explicit quotient in linear space
                double msg_val = 0.0;
                Eigen::Vector2d dmsg = Eigen::Vector2d::Zero();
                for (int jj = 0; jj < M; ++jj) {
                    const double w = std::exp(phi0->log_phi(X0.row(jj)));
                    const double p = std::exp(psi->log_psi(X0.row(jj), X1.row(i)));
                    std::vector<Eigen::MatrixXd> gs;
                    psi->grad_second(X0.row(jj), X1.row(i), gs);
                    msg_val += w * p;
                    dmsg += w * p * gs[0].row(0).transpose();
                }
                const Eigen::Vector2d quotient = dmsg / msg_val;
                const double qerr = (grad.row(i).transpose() - quotient).norm() /
                                    std::max(quotient.norm(), 1e-12);
                worst_quotient = std::max(worst_quotient, qerr);
                ++checked;
            }
        }
        report("message-gradient-fd", checked, worst_fd);
        out.check(worst_quotient <= 1e-10,
                  "message-gradient quotient identity " + std::to_string(worst_quotient));
    }
    return out;
}

// ---------------------------------------------------------------------------
// 3. Fig. 3 trend: error vs noise

Outcome criterion3() {
    Outcome out;
    SweepConfig cfg;
    cfg.noise_levels = {0, 8, 16, 24, 32};
    cfg.particle_counts = {50};
    cfg.runs = 10;
    cfg.seed = 0;
    const auto cells = run_sweep(cfg);
    auto mean_err = [&](const std::string& method, int noise) {
        double acc = 0.0;
        int n = 0;
        for (const auto& c : cells)
            if (c.method == method && c.noise == noise) {
                acc += c.error;
                ++n;
            }
        return acc / n;
    };
    const double svbp_hi = mean_err("svbp", 32), pbp_hi = mean_err("pbp", 32);
    const double svbp_lo = mean_err("svbp", 0), pbp_lo = mean_err("pbp", 0);
    out.check(svbp_hi <= 0.75 * pbp_hi,
              "high-noise margin: svbp " + std::to_string(svbp_hi) + " vs 0.75*pbp " +
                  std::to_string(0.75 * pbp_hi));
    const double rel = std::abs(svbp_lo - pbp_lo) / std::max(svbp_lo, pbp_lo);
    out.check(rel <= 0.20, "zero-noise relative gap " + std::to_string(rel));
    char buf[160];
    std::snprintf(buf, sizeof(buf), "noise32 svbp=%.3f pbp=%.3f; noise0 svbp=%.3f pbp=%.3f rel=%.2f",
                  svbp_hi, pbp_hi, svbp_lo, pbp_lo, rel);
    out.note(buf);
    return out;
}

// ---------------------------------------------------------------------------
// 4. Fig. 4 trend: MMD vs noise across replications

Outcome criterion4() {
    Outcome out;
    int ok_reps = 0;
    std::string per_rep;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
        SweepConfig cfg;
        cfg.noise_levels = {0, 16, 32};
        cfg.particle_counts = {50};
        cfg.runs = 1;
        cfg.seed = rep;
        cfg.compute_mmd = true;
        cfg.gibbs.grid_resolution = 120;
        cfg.gibbs.num_samples = 1500;
        cfg.gibbs.burn_in = 300;
        cfg.gibbs.thinning = 2;
        const auto cells = run_sweep(cfg);
        bool rep_ok = true;
        for (int noise : cfg.noise_levels) {
            double s = 0.0, p = 0.0;
            for (const auto& c : cells) {
                if (c.noise != noise) continue;
                (c.method == "svbp" ? s : p) = c.mmd;
            }
            if (s > p) rep_ok = false;
        }
        per_rep += rep_ok ? "Y" : "n";
        if (rep_ok) ++ok_reps;
    }
    out.check(ok_reps >= 8, "only " + std::to_string(ok_reps) + "/10 replications ordered");
    out.note("replications " + per_rep + " (" + std::to_string(ok_reps) + "/10)");
    return out;
}

// ---------------------------------------------------------------------------
// 5. Fig. 6 trend: particle efficiency

Outcome criterion5() {
    Outcome out;
    SweepConfig cfg;
    cfg.noise_levels = {16};  // the noisy setting
    cfg.particle_counts = {25, 100};
    cfg.runs = 10;
    cfg.seed = 0;
    const auto cells = run_sweep(cfg);
    auto mean_err = [&](const std::string& method, int particles) {
        double acc = 0.0;
        int n = 0;
        for (const auto& c : cells)
            if (c.method == method && c.particles == particles) {
                acc += c.error;
                ++n;
            }
        return acc / n;
    };
    const double s25 = mean_err("svbp", 25), s100 = mean_err("svbp", 100);
    const double p25 = mean_err("pbp", 25), p100 = mean_err("pbp", 100);
    out.check(s25 <= 1.2 * s100, "svbp 25/100 ratio " + std::to_string(s25 / s100));
    out.check(p25 >= 1.5 * p100, "pbp 25/100 ratio " + std::to_string(p25 / p100));
    char buf[120];
    std::snprintf(buf, sizeof(buf), "svbp %.3f/%.3f (r=%.2f); pbp %.3f/%.3f (r=%.2f)", s25, s100,
                  s25 / s100, p25, p100, p25 / p100);
    out.note(buf);
    return out;
}

// ---------------------------------------------------------------------------
// 6. planning success

Outcome criterion6() {
    Outcome out;
    {  // 8-robot swap, open arena
        double pass_acc = 0.0;
        int collisions = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const PlanningScenario sc = scenarios::circle_swap(8);
            const RunMetrics m = evaluate_run(SvbpPlanner(sc).run(seed), sc);
            pass_acc += m.pass_rate(sc.success_threshold) / 10.0;
            collisions += static_cast<int>(std::count(m.collided.begin(), m.collided.end(), true));
        }
        out.check(pass_acc >= 0.9, "circle8 pass rate " + std::to_string(pass_acc));
        out.check(collisions == 0, std::to_string(collisions) + " collisions on circle8");
        out.note("circle8 pass " + std::to_string(pass_acc) + ", collisions " +
                 std::to_string(collisions));
    }
    {  // large central obstacle: svbp strictly above gabp
        double svbp_pass = 0.0, gabp_pass = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const PlanningScenario sc = scenarios::circle_swap(8, 3.5, true);
            svbp_pass += evaluate_run(SvbpPlanner(sc).run(seed), sc).pass_rate(0.30) / 10.0;
            gabp_pass += evaluate_run(GabpPlanner(sc).run(seed), sc).pass_rate(0.30) / 10.0;
        }
        out.check(svbp_pass > gabp_pass, "obstacle: svbp " + std::to_string(svbp_pass) +
                                             " !> gabp " + std::to_string(gabp_pass));
        out.note("obstacle svbp " + std::to_string(svbp_pass) + " vs gabp " +
                 std::to_string(gabp_pass));
    }
    return out;
}

// ---------------------------------------------------------------------------
// 7. decentralized equivalence and drop tolerance

Outcome criterion7() {
    Outcome out;
    PlanningScenario sc = scenarios::circle_swap(3);
    const PlanRunLog central = SvbpPlanner(sc).run(0);
    const SwarmResult zero = spawn_swarm(sc, TransportConfig{}, 0);
    out.check(zero.log.steps.size() == central.steps.size(),
              "step counts differ: " + std::to_string(zero.log.steps.size()) + " vs " +
                  std::to_string(central.steps.size()));
    double worst = 0.0;
    const std::size_t n = std::min(zero.log.steps.size(), central.steps.size());
    for (std::size_t k = 0; k < n; ++k)
        worst = std::max(worst, (zero.log.steps[k].states - central.steps[k].states)
                                    .cwiseAbs()
                                    .maxCoeff());
    out.check(worst <= 1e-9, "state deviation " + std::to_string(worst));

    const double clean_pass = evaluate_run(central, sc).pass_rate(0.30);
    TransportConfig lossy;
    lossy.drop_probability = 0.3;
    lossy.seed = 77;
    const SwarmResult dropped = spawn_swarm(sc, lossy, 0);
    const double lossy_pass = evaluate_run(dropped.log, sc).pass_rate(0.30);
    out.check(clean_pass - lossy_pass < 0.2,
              "pass degraded " + std::to_string(clean_pass - lossy_pass));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "state dev %.2e; pass clean %.2f lossy %.2f; dropped %ld frames", worst,
                  clean_pass, lossy_pass, dropped.stats.snapshots_dropped);
    out.note(buf);
    return out;
}

// ---------------------------------------------------------------------------
// 8. numerical and structural invariants

Outcome criterion8() {
    Outcome out;
    {  // log-space message equivalence
        MrfGraph g(3);
        for (NodeId s = 0; s < 3; ++s)
            g.set_unary(s,
                        std::make_shared<GaussianUnary>(Eigen::VectorXd::Constant(1, 0.2 * s), 1.1));
        g.add_edge(0, 1,
                   std::make_shared<OffsetGaussianPairwise>(Eigen::VectorXd::Constant(1, 0.3), 0.9));
        g.add_edge(1, 2, std::make_shared<OffsetGaussianPairwise>(Eigen::VectorXd::Zero(1), 1.4));
        SvbpEngine engine(g, SvbpConfig{});
        Rng rng(81);
        auto st = engine.make_state(
            {rng.normal_matrix(4, 1), rng.normal_matrix(3, 1), rng.normal_matrix(5, 1)});
        engine.refresh_messages(st);
        const Eigen::VectorXd m01 = st.tables[engine.edge_index(0, 1)].log_values;
        double worst = 0.0;
        const Eigen::VectorXd msg = engine.update_message(st, 1, 2);
        for (int i = 0; i < 5; ++i) {
            double direct = 0.0;
            for (int j = 0; j < 3; ++j)
                direct += std::exp(g.unary(1).log_phi(st.beliefs[1].particles.row(j))) *
                          std::exp(m01(j)) *
                          std::exp(g.pairwise(1, 2).log_psi(st.beliefs[1].particles.row(j),
                                                            st.beliefs[2].particles.row(i)));
            worst = std::max(worst, std::abs(msg(i) - std::log(direct)) /
                                        std::max(std::abs(std::log(direct)), 1e-12));
        }
        out.check(worst <= 1e-12, "log-space equivalence rel err " + std::to_string(worst));
    }
    {  // collision branch continuity at d = r
        const DynamicsModel m1 = [] {
            DynamicsModel m = DynamicsModel::double_integrator();
            m.horizon = 1;
            return m;
        }();
        CollisionParams unit;
        unit.alpha0 = 1.0;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 4), b = a;
        b(0, 1) = 10.0;
        b(1, 1) = unit.r;
        const double at_r = plancost::collision_cost(m1, a, b, unit, false).total;
        b(1, 1) = unit.r - 1e-9;
        const double inside = plancost::collision_cost(m1, a, b, unit, false).total;
        b(1, 1) = unit.r + 1e-9;
        const double outside = plancost::collision_cost(m1, a, b, unit, false).total;
        out.check(at_r == 0.0, "value at d=r not exactly 0");
        out.check(std::abs(inside) <= 1e-9, "inside-branch value " + std::to_string(inside));
        out.check(outside == 0.0, "outside branch not exactly 0");
    }
    {  // snapshot codec round trip, bit-exact
        Rng rng(83);
        BeliefSnapshot snap;
        snap.robot_id = 3;
        snap.iteration = 12345678901ULL;
        snap.particles = rng.normal_matrix(9, 5);
        snap.weights = rng.uniform_matrix(9, 1, 0.0, 1.0);
        const BeliefSnapshot back = decode_snapshot(encode_snapshot(snap));
        out.check(back.particles == snap.particles && back.weights == snap.weights &&
                      back.robot_id == snap.robot_id && back.iteration == snap.iteration,
                  "codec round trip not bit-exact");
    }
    {  // worker-count independence
        MrfGraph g(3);
        for (NodeId s = 0; s < 3; ++s)
            g.set_unary(s,
                        std::make_shared<GaussianUnary>(Eigen::VectorXd::Constant(2, 0.3 * s), 1.0));
        g.add_edge(0, 1, std::make_shared<OffsetGaussianPairwise>(Eigen::VectorXd::Zero(2), 1.0));
        g.add_edge(1, 2, std::make_shared<OffsetGaussianPairwise>(Eigen::VectorXd::Zero(2), 1.0));
        Rng rng(84);
        std::vector<Eigen::MatrixXd> init;
        for (int s = 0; s < 3; ++s) init.push_back(rng.uniform_matrix(16, 2, -2.0, 2.0));
        SvbpConfig cfg;
        cfg.num_iterations = 25;
        const SvbpState st1 = SvbpEngine(g, cfg).run(init);
        cfg.num_threads = 4;
        const SvbpState st4 = SvbpEngine(g, cfg).run(init);
        double worst = 0.0;
        for (int s = 0; s < 3; ++s)
            worst = std::max(worst, (st1.beliefs[static_cast<std::size_t>(s)].particles -
                                     st4.beliefs[static_cast<std::size_t>(s)].particles)
                                        .cwiseAbs()
                                        .maxCoeff());
        out.check(worst <= 1e-12, "worker-count deviation " + std::to_string(worst));
    }
    {  // MMD of identical sets
        Rng rng(85);
        const Eigen::MatrixXd X = rng.normal_matrix(200, 2);
        const double v = mmd(X, X).mmd_squared;
        out.check(std::abs(v) <= 1e-12, "mmd(X,X) = " + std::to_string(v));
    }
    return out;
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "oracle equivalence on Gaussian graphs", 60.0, criterion1},
        {2, "analytic gradient suite", 120.0, criterion2},
        {3, "error-vs-noise trend", 1200.0, criterion3},
        {4, "MMD-vs-noise trend with Gibbs ground truth", 1800.0, criterion4},
        {5, "particle-efficiency trend", 1800.0, criterion5},
        {6, "planning success and baseline comparison", 1800.0, criterion6},
        {7, "decentralized equivalence and drop tolerance", 600.0, criterion7},
        {8, "numerical and structural invariants", 120.0, criterion8},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (elapsed > c.budget_seconds) {
            outcome.pass = false;
            outcome.detail += (outcome.detail.empty() ? "" : "; ") + std::string("over budget");
        }
        std::printf("[%s] criterion %d: %s (%.1fs of %.0fs) %s\n",
                    outcome.pass ? "PASS" : "FAIL", c.id, c.name, elapsed, c.budget_seconds,
                    outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures;
}
