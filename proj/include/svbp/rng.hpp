// Seeded random streams. Every source of randomness in the project flows
// from one master seed through named child streams, so individual
// components (scenario generation, particle init, solver, transport) can be
// re-seeded in isolation and runs reproduce exactly.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace svbp {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(detail::splitmix64(seed)), seed_(seed) {}

    // Child stream derived from this stream's seed and a tag. Children with
    // distinct tags are independent; deriving a child does not advance the
    // parent's state.
    Rng child(std::uint64_t tag) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(tag)));
    }
    Rng child(std::string_view name) const { return child(detail::fnv1a(name)); }
    Rng child(std::string_view name, std::uint64_t a) const {
        return child(detail::fnv1a(name) ^ detail::splitmix64(a + 0x51ed2701ULL));
    }
    Rng child(std::string_view name, std::uint64_t a, std::uint64_t b) const {
        return child(name, detail::splitmix64(a) ^ detail::splitmix64(~b));
    }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double sd = 1.0) {
        return std::normal_distribution<double>(mean, sd)(engine_);
    }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive bounds
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
        return m;
    }
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double mean = 0.0,
                                  double sd = 1.0) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(mean, sd);
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

}  // namespace svbp
