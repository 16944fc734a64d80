// Kernelized maximum mean discrepancy (biased V-statistic) with
// median-heuristic bandwidth taken over the ground-truth sample set, plus
// the mean node-error metric.
#pragma once

#include <algorithm>
#include <vector>

#include "svbp/common.hpp"

namespace svbp {

struct MmdReport {
    double mmd_squared = 0.0;
    double bandwidth = 0.0;
    int excluded_particle_count = 0;
};

namespace detail {

// Median pairwise squared distance. Large sets are strided down to a
// deterministic subsample; this only steers the bandwidth heuristic.
inline double median_pairwise_sq_distance(const Eigen::MatrixXd& X, Eigen::Index cap = 2048) {
    const Eigen::Index n = X.rows();
    require(n >= 1, "median_pairwise_sq_distance: empty set");
    const Eigen::Index stride = (n + cap - 1) / cap;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; i += stride) rows.push_back(i);
    std::vector<double> sq;
    sq.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = a + 1; b < rows.size(); ++b)
            sq.push_back((X.row(rows[a]) - X.row(rows[b])).squaredNorm());
    if (sq.empty()) return 1.0;
    const std::size_t mid = sq.size() / 2;
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
    double med = sq[mid];
    if (sq.size() % 2 == 0)
        med = 0.5 * (med + *std::max_element(sq.begin(),
                                             sq.begin() + static_cast<std::ptrdiff_t>(mid)));
    return med;
}

inline double mean_cross_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double h) {
    const Eigen::VectorXd an = A.rowwise().squaredNorm();
    const Eigen::VectorXd bn = B.rowwise().squaredNorm();
    Eigen::MatrixXd sq = an.replicate(1, B.rows()) + bn.transpose().replicate(A.rows(), 1) -
                         2.0 * (A * B.transpose());
    sq = sq.cwiseMax(0.0);
    return (-sq / h).array().exp().mean();
}

}  // namespace detail

// Biased MMD^2 between a ground-truth sample set and a candidate set, with
// RBF kernel bandwidth = median pairwise squared distance of the ground
// truth. Always >= 0 up to round-off.
inline MmdReport mmd(const Eigen::MatrixXd& ground_truth, const Eigen::MatrixXd& samples) {
    require(ground_truth.rows() >= 1 && samples.rows() >= 1, "mmd: empty sample set");
    require(ground_truth.cols() == samples.cols(), "mmd: dimension mismatch");
    MmdReport report;
    report.bandwidth = std::max(detail::median_pairwise_sq_distance(ground_truth), 1e-12);
    const double kaa = detail::mean_cross_kernel(ground_truth, ground_truth, report.bandwidth);
    const double kbb = detail::mean_cross_kernel(samples, samples, report.bandwidth);
    const double kab = detail::mean_cross_kernel(ground_truth, samples, report.bandwidth);
    report.mmd_squared = kaa + kbb - 2.0 * kab;
    return report;
}

// MMD against a weighted particle set: particles with weight below 1% of
// the maximum are excluded from the computation entirely.
inline MmdReport mmd_weighted(const Eigen::MatrixXd& ground_truth,
                              const Eigen::MatrixXd& particles, const Eigen::VectorXd& weights,
                              double exclusion_fraction = 0.01) {
    require(particles.rows() == weights.size(), "mmd_weighted: weight count mismatch");
    const double cutoff = exclusion_fraction * weights.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (weights(i) >= cutoff) keep.push_back(i);
    require(!keep.empty(), "mmd_weighted: all particles excluded");
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(keep.size()), particles.cols());
    for (std::size_t k = 0; k < keep.size(); ++k)
        kept.row(static_cast<Eigen::Index>(k)) = particles.row(keep[k]);
    MmdReport report = mmd(ground_truth, kept);
    report.excluded_particle_count = static_cast<int>(particles.rows() - kept.rows());
    return report;
}

// Mean Euclidean error between per-node estimates and true positions.
inline double node_error(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth) {
    require(estimates.rows() == truth.rows() && estimates.cols() == truth.cols(),
            "node_error: shape mismatch");
    require(estimates.rows() >= 1, "node_error: empty");
    return (estimates - truth).rowwise().norm().mean();
}

}  // namespace svbp
