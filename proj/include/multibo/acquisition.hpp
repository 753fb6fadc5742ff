#pragma once

// Candidate proposal: closed-form Expected Improvement with multi-start
// maximization, and the Dynamic Balanced Subspace (DBS) batch construction.
//
// DBS builds K candidates from two anchors, the incumbent x* and the EI
// maximizer x_ei:
//   bridge_i = x* + g_i (x_ei - x*),      g_i in [0, 1]
//   C        = mean of grad mu grad mu^T  over points near x*
//   d        = spectral-gap dimension of eig(C)
//   delta_i  = s * sum_{j <= d} a_ij sqrt(l_j) u_j,   a_ij ~ U[-1, 1]
//   out_i    = clip(bridge_i + delta_i)
// Perturbations live in box-normalized coordinates (each axis rescaled to
// [0, 1]) so one perturbation scale fits every parameter.

#include "multibo/gp.hpp"
#include "multibo/random.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace multibo
{
struct BoxBounds
{
    VectorXd lower;
    VectorXd upper;

    BoxBounds() = default;
    BoxBounds(VectorXd lo, VectorXd hi);
    static BoxBounds unit(Eigen::Index dim);

    Eigen::Index dim() const { return lower.size(); }
    VectorXd width() const { return upper - lower; }
    VectorXd center() const { return 0.5 * (lower + upper); }
    double diagonal() const { return width().norm(); }
    bool contains(const VectorXd& x, double tol = 0.0) const;
    VectorXd project(const VectorXd& x) const;
    VectorXd to_unit(const VectorXd& x) const;
    VectorXd from_unit(const VectorXd& u) const;
};

enum class ProposalStrategy
{
    dbs,           ///< bridges plus subspace perturbations
    bridge_only,   ///< bridges, no perturbation
    subspace_only, ///< subspace perturbations around the incumbent
    ei_top_k,      ///< the K best distinct EI local maxima
    random,        ///< uniform in the box
};

std::string to_string(ProposalStrategy s);
ProposalStrategy proposal_strategy_from_string(const std::string& name);

struct DbsConfig
{
    std::size_t k = 4;
    /// Bridge coefficients; empty means evenly spaced {0, 1/(K-1), ..., 1}.
    std::vector<double> gamma_bridge;
    double spectral_threshold = 2.0;
    std::size_t n_gradient_samples = 32;
    /// Neighborhood radius as a fraction of the box diagonal.
    double neighborhood_radius = 0.05;
    /// Perturbation scale as a fraction of box width.
    double perturb_scale = 0.1;
    std::size_t ei_restarts = 50;
    std::size_t ei_raw_samples = 4096;
    int ei_max_iterations = 200;
    /// Score EI on f(x) - f(x_best) jointly instead of on the marginal f(x).
    bool ei_joint_incumbent = true;
    ProposalStrategy strategy = ProposalStrategy::dbs;

    /// Resolved bridge coefficients (fills the evenly spaced default).
    std::vector<double> bridge_coefficients() const;
    void validate() const;
};

struct SubspaceBasis
{
    /// Descending, non-negative.
    VectorXd eigenvalues;
    /// Orthonormal columns matching `eigenvalues`.
    MatrixXd eigenvectors;
    std::size_t selected_dim = 1;
};

/// Closed-form EI for a Gaussian N(mean, sd^2) against incumbent value f_star.
double expected_improvement(double mean, double sd, double f_star);
double expected_improvement(const GpPredictor& predictor, const VectorXd& x, double f_star);

struct EiMaximum
{
    VectorXd x;
    double value = 0.0;
    /// Every raw sample had EI == 0; x is then the first raw sample.
    bool degenerate = false;
    /// Refined restart end points, best first (duplicates removed).
    std::vector<VectorXd> local_maxima;
    std::vector<double> local_values;
};

/// `reference`, when given, switches to the joint form: the improvement is
/// f(x) - f(reference) with its full predictive variance, f_star being the
/// predicted value at the reference.
EiMaximum maximize_ei(const GpPredictor& predictor, double f_star, const BoxBounds& bounds, const DbsConfig& cfg,
                      Rng& rng, const VectorXd* reference = nullptr);

using GradientFn = std::function<VectorXd(const VectorXd&)>;

/// C = (1/H) sum grad(x_i) grad(x_i)^T with x_i uniform in the ball of radius
/// neighborhood_radius * diagonal around x_best, clipped to the box.
MatrixXd gradient_covariance(const GradientFn& gradient, const VectorXd& x_best, const BoxBounds& bounds,
                             const DbsConfig& cfg, Rng& rng);
MatrixXd gradient_covariance(const GpPredictor& predictor, const VectorXd& x_best, const BoxBounds& bounds,
                             const DbsConfig& cfg, Rng& rng);

/// Subspace dimension from a descending spectrum: the smallest i whose ratio
/// l_i / l_{i+1} reaches `threshold`; otherwise the (first) largest ratio.
/// Zero denominators count as an infinite ratio. Returns 1-based d.
std::size_t spectral_gap_dim(std::span<const double> eigenvalues, double threshold);

/// Eigendecomposition of a symmetric PSD matrix plus the spectral-gap dimension.
SubspaceBasis active_subspace(const MatrixXd& covariance, double threshold);

struct DbsProposal
{
    /// K x D, one candidate per row.
    MatrixXd points;
    VectorXd x_ei;
    bool ei_degenerate = false;
    /// Selected subspace dimension; 0 when the strategy does not compute one.
    std::size_t subspace_dim = 0;
    SubspaceBasis basis;
};

DbsProposal dbs_propose(const GpPredictor& predictor, double f_star, const VectorXd& x_best, const BoxBounds& bounds,
                        const DbsConfig& cfg, Rng& rng);
} // namespace multibo
