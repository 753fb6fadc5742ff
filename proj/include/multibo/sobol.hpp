#pragma once

#include "multibo/random.hpp"

#include <Eigen/Dense>

#include <cstddef>

namespace multibo
{
/// First `count` points of the `dim`-dimensional Sobol sequence in [0,1)^dim,
/// rotated by a random Cranley-Patterson shift drawn from `rng` so that
/// different seeds give different (still low-discrepancy) designs.
Eigen::MatrixXd shifted_sobol(std::size_t count, Eigen::Index dim, Rng& rng);
} // namespace multibo
