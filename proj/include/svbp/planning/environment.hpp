// 2-D world model: circle and axis-aligned-box obstacles inside rectangular
// bounds, with signed distance and its gradient. Distance is negative
// inside obstacles (and outside the bounds when walls are enabled).
#pragma once

#include <vector>

#include "svbp/common.hpp"

namespace svbp {

struct Circle {
    Eigen::Vector2d center;
    double radius = 0.0;
};

struct AlignedBox {
    Eigen::Vector2d min;
    Eigen::Vector2d max;
};

struct Environment2D {
    Region bounds{0.0, 10.0, 0.0, 10.0};
    std::vector<Circle> circles;
    std::vector<AlignedBox> boxes;
    bool wall_bounds = true;  // leaving the bounds counts as penetration

    struct SdfResult {
        double distance;
        Eigen::Vector2d gradient;
    };

    static SdfResult circle_sdf(const Circle& c, const Eigen::Vector2d& p) {
        const Eigen::Vector2d d = p - c.center;
        const double n = d.norm();
        if (n < 1e-12) return {-c.radius, Eigen::Vector2d::Zero()};
        return {n - c.radius, d / n};
    }

    static SdfResult box_sdf(const AlignedBox& b, const Eigen::Vector2d& p) {
        const Eigen::Vector2d center = 0.5 * (b.min + b.max);
        const Eigen::Vector2d half = 0.5 * (b.max - b.min);
        const Eigen::Vector2d rel = p - center;
        const Eigen::Vector2d q = rel.cwiseAbs() - half;
        if (q(0) > 0.0 || q(1) > 0.0) {
            const Eigen::Vector2d outside = q.cwiseMax(0.0);
            const double n = outside.norm();
            Eigen::Vector2d g = outside / n;
            g(0) *= rel(0) < 0.0 ? -1.0 : 1.0;
            g(1) *= rel(1) < 0.0 ? -1.0 : 1.0;
            return {n, g};
        }
        // inside: distance to the nearest face
        if (q(0) > q(1)) {
            Eigen::Vector2d g(rel(0) < 0.0 ? -1.0 : 1.0, 0.0);
            return {q(0), g};
        }
        Eigen::Vector2d g(0.0, rel(1) < 0.0 ? -1.0 : 1.0);
        return {q(1), g};
    }

    SdfResult wall_sdf(const Eigen::Vector2d& p) const {
        // positive inside the bounds, negative outside
        double best = p(0) - bounds.xmin;
        Eigen::Vector2d grad(1.0, 0.0);
        if (bounds.xmax - p(0) < best) {
            best = bounds.xmax - p(0);
            grad = {-1.0, 0.0};
        }
        if (p(1) - bounds.ymin < best) {
            best = p(1) - bounds.ymin;
            grad = {0.0, 1.0};
        }
        if (bounds.ymax - p(1) < best) {
            best = bounds.ymax - p(1);
            grad = {0.0, -1.0};
        }
        return {best, grad};
    }

    // Minimum over all primitives; 1e9 with zero gradient when nothing
    // constrains the point.
    SdfResult sdf(const Eigen::Vector2d& p) const {
        SdfResult best{1e9, Eigen::Vector2d::Zero()};
        for (const auto& c : circles) {
            const SdfResult r = circle_sdf(c, p);
            if (r.distance < best.distance) best = r;
        }
        for (const auto& b : boxes) {
            const SdfResult r = box_sdf(b, p);
            if (r.distance < best.distance) best = r;
        }
        if (wall_bounds) {
            const SdfResult r = wall_sdf(p);
            if (r.distance < best.distance) best = r;
        }
        return best;
    }

    double signed_distance(const Eigen::Vector2d& p) const { return sdf(p).distance; }

    bool point_free(const Eigen::Vector2d& p) const { return signed_distance(p) > 0.0; }
};

}  // namespace svbp
