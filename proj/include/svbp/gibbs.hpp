// Ground-truth marginal sampling for 2-D bounded-support MRFs: single-site
// Gibbs over the joint density with grid-based inverse-CDF conditional
// draws, plus Monte-Carlo message integration for validating the particle
// message estimate.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svbp/common.hpp"
#include "svbp/graph.hpp"
#include "svbp/rng.hpp"

namespace svbp {

struct GibbsConfig {
    int num_samples = 5000;  // retained per node, after burn-in and thinning
    int burn_in = 1000;      // sweeps
    int thinning = 5;        // keep every thinning-th sweep
    int grid_resolution = 200;
    int mc_message_samples = 1000;
    std::uint64_t rng_seed = 0;
};

namespace detail {

struct ConditionalGrid {
    Eigen::ArrayXd xs;  // flattened cell-center x coords, size R*R
    Eigen::ArrayXd ys;
    double dx = 0.0, dy = 0.0;
    int resolution = 0;

    void build(const Region& region, int res) {
        resolution = res;
        dx = region.width() / res;
        dy = region.height() / res;
        xs.resize(static_cast<Eigen::Index>(res) * res);
        ys.resize(static_cast<Eigen::Index>(res) * res);
        for (int iy = 0; iy < res; ++iy)
            for (int ix = 0; ix < res; ++ix) {
                const Eigen::Index k = static_cast<Eigen::Index>(iy) * res + ix;
                xs(k) = region.xmin + (ix + 0.5) * dx;
                ys(k) = region.ymin + (iy + 0.5) * dy;
            }
    }

    Eigen::MatrixXd points() const {
        Eigen::MatrixXd P(xs.size(), 2);
        P.col(0) = xs;
        P.col(1) = ys;
        return P;
    }

    // Inverse-CDF draw over cells, uniform jitter within the chosen cell.
    Eigen::Vector2d sample(const Eigen::ArrayXd& log_density, Rng& rng) const {
        const double m = log_density.maxCoeff();
        if (!std::isfinite(m))
            throw NumericError("gibbs: conditional density vanished on the whole grid");
        Eigen::ArrayXd w = (log_density - m).exp();
        const double total = w.sum();
        const double u = rng.uniform(0.0, total);
        double cum = 0.0;
        Eigen::Index cell = w.size() - 1;
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            cum += w(k);
            if (u <= cum) {
                cell = k;
                break;
            }
        }
        const double jx = rng.uniform(-0.5, 0.5);
        const double jy = rng.uniform(-0.5, 0.5);
        return {xs(cell) + jx * dx, ys(cell) + jy * dy};
    }
};

}  // namespace detail

// Single-site Gibbs targeting the joint: each sweep resamples x_s from
// p(x_s | x_rho(s)) proportional to phi_s(x_s) prod_t psi(x_s, x_t),
// evaluated on the grid over the bounded region. Returns one
// num_samples x 2 matrix of retained samples per node.
inline std::vector<Eigen::MatrixXd> gibbs_marginals(const MrfGraph& graph, const Region& region,
                                                    const GibbsConfig& config) {
    require(region.valid(), "gibbs_marginals: sampling region must be bounded");
    require(config.num_samples >= 1 && config.burn_in >= 0 && config.thinning >= 1,
            "gibbs_marginals: bad sampler configuration");
    for (NodeId s = 0; s < graph.num_nodes(); ++s)
        require(graph.node_dim(s) == 2, "gibbs_marginals: node domains must be 2-D");

    detail::ConditionalGrid grid;
    grid.build(region, config.grid_resolution);
    const Eigen::MatrixXd grid_points = grid.points();

    // unary grids are constant across sweeps
    std::vector<Eigen::ArrayXd> unary_grid(static_cast<std::size_t>(graph.num_nodes()));
    for (NodeId s = 0; s < graph.num_nodes(); ++s) {
        Eigen::VectorXd v;
        graph.unary(s).evaluate_values(grid_points, v);
        unary_grid[static_cast<std::size_t>(s)] = v.array();
    }

    std::vector<std::vector<NodeId>> neighbors(static_cast<std::size_t>(graph.num_nodes()));
    for (NodeId s = 0; s < graph.num_nodes(); ++s) neighbors[static_cast<std::size_t>(s)] =
        graph.neighbors(s);

    Rng rng = Rng(config.rng_seed).child("gibbs");
    Eigen::MatrixXd positions(graph.num_nodes(), 2);
    for (NodeId s = 0; s < graph.num_nodes(); ++s) {
        positions(s, 0) = rng.uniform(region.xmin, region.xmax);
        positions(s, 1) = rng.uniform(region.ymin, region.ymax);
    }

    std::vector<Eigen::MatrixXd> samples(static_cast<std::size_t>(graph.num_nodes()),
                                         Eigen::MatrixXd(config.num_samples, 2));
    const long total_sweeps =
        config.burn_in + static_cast<long>(config.num_samples) * config.thinning;
    long retained = 0;
    Eigen::MatrixXd L;  // reused per-neighbor buffer
    for (long sweep = 0; sweep < total_sweeps; ++sweep) {
        for (NodeId s = 0; s < graph.num_nodes(); ++s) {
            Eigen::ArrayXd cond = unary_grid[static_cast<std::size_t>(s)];
            for (NodeId t : neighbors[static_cast<std::size_t>(s)]) {
                const Eigen::MatrixXd xt = positions.row(t);
                const auto& psi = graph.pairwise(s, t);
                if (s < t) {
                    psi.evaluate(grid_points, xt, L);  // L is (R*R) x 1
                    cond += L.col(0).array();
                } else {
                    psi.evaluate(xt, grid_points, L);  // L is 1 x (R*R)
                    cond += L.row(0).transpose().array();
                }
            }
            positions.row(s) = grid.sample(cond, rng);
        }
        if (sweep >= config.burn_in && (sweep - config.burn_in) % config.thinning == 0 &&
            retained < config.num_samples) {
            for (NodeId s = 0; s < graph.num_nodes(); ++s)
                samples[static_cast<std::size_t>(s)].row(retained) = positions.row(s);
            ++retained;
        }
    }
    return samples;
}

// Monte-Carlo estimate of the integral message m_{t->s}, built from uniform
// samples over the region:
//   m(x_s) ~= (vol / n) sum_j phi_t(x_j) psi(x_j, x_s) prod_u m_u(x_j).
// The result is evaluable at arbitrary query points; incoming messages are
// supplied as log-valued callables for recursive evaluation on small graphs.
class McMessage {
public:
    using LogMessageFn = std::function<double(const Eigen::VectorXd&)>;

    McMessage(const UnaryPotential& phi_t, const PairwisePotential& psi, bool t_is_first,
              const Region& region, const std::vector<LogMessageFn>& incoming, int n, Rng& rng)
        : psi_(psi), t_is_first_(t_is_first) {
        require(region.valid(), "mc_message: region must be bounded");
        require(n >= 1, "mc_message: need at least one sample");
        samples_.resize(n, 2);
        for (int j = 0; j < n; ++j) {
            samples_(j, 0) = rng.uniform(region.xmin, region.xmax);
            samples_(j, 1) = rng.uniform(region.ymin, region.ymax);
        }
        Eigen::VectorXd log_phi;
        phi_t.evaluate_values(samples_, log_phi);
        base_ = log_phi;
        for (const auto& fn : incoming)
            for (int j = 0; j < n; ++j) base_(j) += fn(samples_.row(j));
        base_.array() += std::log(region.area() / n);
    }

    double log_eval(const Eigen::VectorXd& xs) const {
        Eigen::MatrixXd L;
        if (t_is_first_) {
            psi_.evaluate(samples_, xs.transpose(), L);
            return logsumexp(base_ + L.col(0));
        }
        psi_.evaluate(xs.transpose(), samples_, L);
        return logsumexp(base_ + L.row(0).transpose());
    }

    double eval(const Eigen::VectorXd& xs) const { return std::exp(log_eval(xs)); }

private:
    const PairwisePotential& psi_;
    bool t_is_first_;
    Eigen::MatrixXd samples_;
    Eigen::VectorXd base_;
};

}  // namespace svbp
