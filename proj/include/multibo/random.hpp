#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace multibo
{
/// All stochastic operations take this engine explicitly; its textual state is
/// part of a serialized session.
using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform in (0, 1), safe for logarithms.
inline double uniform_open01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double standard_normal(Rng& rng)
{
    // Box-Muller; one value per call keeps the stream position simple to reason about.
    const double u1 = uniform_open01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline double standard_gumbel(Rng& rng) { return -std::log(-std::log(uniform_open01(rng))); }

/// Uniform point in the Euclidean ball of the given radius around the origin.
inline Eigen::VectorXd uniform_in_ball(Rng& rng, Eigen::Index dim, double radius)
{
    Eigen::VectorXd v(dim);
    for (Eigen::Index d = 0; d < dim; ++d)
        v(d) = standard_normal(rng);
    const double norm = v.norm();
    if (norm == 0.0)
        return Eigen::VectorXd::Zero(dim);
    const double r = radius * std::pow(uniform01(rng), 1.0 / static_cast<double>(dim));
    return v * (r / norm);
}
} // namespace multibo
