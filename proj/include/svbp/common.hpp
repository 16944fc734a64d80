// Shared numeric helpers and error types used across the inference engine.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace svbp {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Raised when a computation produces non-finite values. The message names
// the offending node/edge/particle so failures are traceable.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when message tables are read at the wrong iteration stamp.
struct StalenessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when all particle weights of a node collapse to zero mass.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double logsumexp(const Eigen::VectorXd& v) {
    if (v.size() == 0) return kNegInf;
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf (or a NaN/inf poisoning the max)
    return m + std::log((v.array() - m).exp().sum());
}

// Numerically stable softmax of log-values. All -inf input throws.
inline Eigen::VectorXd softmax_from_log(const Eigen::VectorXd& log_v) {
    const double m = log_v.maxCoeff();
    if (!std::isfinite(m))
        throw DegeneracyError("softmax_from_log: all log-values are -inf");
    Eigen::VectorXd w = (log_v.array() - m).exp();
    return w / w.sum();
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    return m.allFinite();
}

// Valid log-density values: -inf (zero mass) is allowed, NaN and +inf are not.
inline bool valid_log_density(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return !v.hasNaN() && (v.array() < std::numeric_limits<double>::infinity()).all();
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Axis-aligned bounded 2-D region (observation area, world bounds).
struct Region {
    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }
    bool valid() const {
        return std::isfinite(xmin) && std::isfinite(xmax) && std::isfinite(ymin) &&
               std::isfinite(ymax) && xmax > xmin && ymax > ymin;
    }
    bool contains(double x, double y) const {
        return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
    }
};

}  // namespace svbp
