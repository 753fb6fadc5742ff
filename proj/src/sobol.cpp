#include "multibo/sobol.hpp"

#include "multibo/errors.hpp"

#include <boost/random/sobol.hpp>

#include <cmath>

namespace multibo
{
Eigen::MatrixXd shifted_sobol(std::size_t count, Eigen::Index dim, Rng& rng)
{
    if (dim < 1)
        throw ContractError("shifted_sobol: dimension must be positive");
    Eigen::VectorXd shift(dim);
    for (Eigen::Index d = 0; d < dim; ++d)
        shift(d) = uniform01(rng);

    boost::random::sobol engine(static_cast<std::size_t>(dim));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), dim);
    for (std::size_t i = 0; i < count; ++i)
        for (Eigen::Index d = 0; d < dim; ++d)
        {
            const double u = std::ldexp(static_cast<double>(engine()), -64) + shift(d);
            out(static_cast<Eigen::Index>(i), d) = u - std::floor(u);
        }
    return out;
}
} // namespace multibo
