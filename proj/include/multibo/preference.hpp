#pragma once

// Preference likelihoods over latent utilities and the Laplace-approximate
// posterior they induce under a GP prior.
//
// Four observation models are supported:
//   pairwise-probit    P(a > b) = Phi((f_a - f_b) / (sqrt(2) sigma))
//   pairwise-logit     P(a > b) = sigmoid((f_a - f_b) / (sqrt(2) sigma))
//   multinomial-logit  P(w | Z) = softmax(f_Z)_w            (1-of-K)
//   subset-logit       P(A | Z) = exp(sum_A f) / (prod_Z (1 + e^f) - 1)   (N-of-K)
// The two logit choice models assume Gumbel(0,1) utility noise, so they carry
// no scale parameter.

#include "multibo/gp.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace multibo
{
struct PreferenceObservation
{
    /// Archive indices shown to the user, in presentation order.
    std::vector<std::size_t> choice_set;
    /// Positions into choice_set that the user selected.
    std::vector<std::size_t> winners;

    /// Throws ContractError on duplicates, empty/out-of-range winners, or any
    /// index >= archive_size (when archive_size is given).
    void validate(std::optional<std::size_t> archive_size = std::nullopt) const;
    bool is_pairwise() const { return choice_set.size() == 2 && winners.size() == 1; }
};

enum class LikelihoodKind
{
    pairwise_probit,
    pairwise_logit,
    multinomial_logit,
    subset_logit,
};

std::string to_string(LikelihoodKind kind);
/// Accepts the names produced by to_string (e.g. "multinomial-logit").
LikelihoodKind likelihood_kind_from_string(const std::string& name);

struct LikelihoodModel
{
    LikelihoodKind kind = LikelihoodKind::multinomial_logit;
    /// Pairwise noise sigma; the default makes z = f_a - f_b.
    double noise_scale = 0.70710678118654752440;
};

/// Largest choice set the subset model enumerates (2^K - 1 subsets).
inline constexpr std::size_t k_max_subset_choices = 12;

double pairwise_loglik(const VectorXd& f, const PreferenceObservation& obs, const LikelihoodModel& model);
double multinomial_logit_loglik(const VectorXd& f_subset, std::size_t winner_pos);
double subset_loglik(const VectorXd& f_subset, std::span<const std::size_t> winners);

/// Log-likelihood of one observation under `model`, f indexed by archive.
double observation_loglik(const VectorXd& f, const PreferenceObservation& obs, const LikelihoodModel& model);
double total_loglik(const VectorXd& f, const std::vector<PreferenceObservation>& observations,
                    const LikelihoodModel& model);

struct SubsetMarginals
{
    /// pi_j = P(j in A)
    VectorXd pi;
    /// pi_jk = P(j, k in A); diagonal equals pi.
    MatrixXd pi_pair;
};
SubsetMarginals subset_marginals(const VectorXd& f_subset);

struct LoglikDerivatives
{
    VectorXd gradient;
    /// Negative Hessian of the data term, i.e. W in the Newton system.
    MatrixXd neg_hessian;
};

/// Gradient and negative Hessian of sum_i log P(obs_i | f) in archive coordinates.
/// The prior term is not included. Each observation's K x K block is repaired
/// to be PSD (negative eigenvalues clamped to zero) before it is scattered.
LoglikDerivatives loglik_grad_hess(const VectorXd& f, const std::vector<PreferenceObservation>& observations,
                                   const LikelihoodModel& model);

struct LaplaceOptions
{
    double gradient_tolerance = 1e-6;
    int max_iterations = 100;
    int max_halvings = 20;
    /// Newton start; f = 0 (prior mean) when absent.
    std::optional<VectorXd> warm_start;
};

/// Gaussian approximation N(f_map, posterior_cov) of p(f | observations).
struct LatentPosterior
{
    MatrixXd archive_points;
    VectorXd f_map;
    /// Negative Hessian of the log-likelihood at f_map (W).
    MatrixXd neg_hessian;
    /// (prior_cov^{-1} + W)^{-1}
    MatrixXd posterior_cov;
    MatrixXd prior_cov;
    std::vector<PreferenceObservation> observations;
    KernelConfig kernel;
    LikelihoodModel model;

    /// prior_cov^{-1} f_map; equals the likelihood gradient at the mode.
    VectorXd alpha;
    /// (I + W K)^{-1} W, the variance reduction of the predictive.
    MatrixXd var_reduction;

    double log_posterior = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;

    GpPredictor predictor() const;
    /// Infinity norm of grad log p(f | X) at f_map.
    double map_certificate() const;
};

/// Newton iteration on the unnormalized log-posterior, damped by step halving.
/// Throws NumericalError (diagnostic = last gradient norm) when it fails to converge.
LatentPosterior laplace_fit(const MatrixXd& archive_points, const std::vector<PreferenceObservation>& observations,
                            const KernelConfig& kernel, const LikelihoodModel& model,
                            const LaplaceOptions& options = {});

/// Unnormalized log-posterior -1/2 f^T K^{-1} f + sum log-lik, evaluated with a
/// fresh Cholesky solve. Used by tests and diagnostics, not by the fit.
double log_posterior_value(const VectorXd& f, const MatrixXd& prior_cov,
                           const std::vector<PreferenceObservation>& observations, const LikelihoodModel& model);
} // namespace multibo
