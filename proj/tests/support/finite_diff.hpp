// Central finite differences used as the independent gradient oracle.
#pragma once

#include <Eigen/Dense>
#include <functional>

namespace testsupport {

inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double step = 1e-5) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd p = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = p(i);
        p(i) = orig + step;
        const double hi = f(p);
        p(i) = orig - step;
        const double lo = f(p);
        p(i) = orig;
        g(i) = (hi - lo) / (2.0 * step);
    }
    return g;
}

// Relative error between an analytic gradient and its finite-difference
// oracle, guarded against vanishing denominators.
inline double grad_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd,
                             double floor = 1e-6) {
    const double denom = std::max(fd.norm(), floor);
    return (analytic - fd).norm() / denom;
}

}  // namespace testsupport
