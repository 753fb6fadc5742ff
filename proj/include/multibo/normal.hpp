#pragma once

#include <cmath>
#include <numbers>

namespace multibo::normal
{
inline double pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double log_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

inline double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// log Phi(z), accurate in both tails.
inline double log_cdf(double z)
{
    if (z > 5.0)
        return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
    if (z > -20.0)
        return std::log(cdf(z));
    // Mills-ratio asymptotic series: Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8)
    const double r = 1.0 / (z * z);
    const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    return log_pdf(z) - std::log(-z) + std::log(series);
}

/// phi(z) / Phi(z), the inverse Mills ratio.
inline double pdf_over_cdf(double z)
{
    if (z > -20.0)
        return pdf(z) / cdf(z);
    return std::exp(log_pdf(z) - log_cdf(z));
}
} // namespace multibo::normal
