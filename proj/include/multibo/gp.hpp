#pragma once

// Gaussian-process prior and prediction. Points are stored row-wise: an
// N x D matrix holds N points in D dimensions.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace multibo
{
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelFamily
{
    squared_exponential,
    matern52,
};

struct KernelConfig
{
    KernelFamily family = KernelFamily::matern52;
    /// One entry per input dimension, or a single shared entry.
    std::vector<double> lengthscales{1.0};
    double signal_variance = 1.0;
    double jitter = 1e-6;

    /// Throws ContractError unless lengthscales > 0, signal_variance > 0, jitter >= 0.
    void validate() const;
    /// Throws ContractError when the lengthscale count does not fit `dim`.
    void check_dimension(Eigen::Index dim) const;
    double lengthscale(Eigen::Index d) const
    {
        return lengthscales.size() == 1 ? lengthscales.front() : lengthscales[static_cast<std::size_t>(d)];
    }
};

/// Zero-mean GP prior.
struct GpPrior
{
    KernelConfig kernel;
};

struct PredictiveDistribution
{
    VectorXd mean;
    MatrixXd covariance;
};

double kernel_value(const VectorXd& a, const VectorXd& b, const KernelConfig& cfg);

/// d k(a, b) / d a.
VectorXd kernel_gradient(const VectorXd& a, const VectorXd& b, const KernelConfig& cfg);

/// Cross-covariance |a| x |b|. When the two point sets are identical the result
/// is the prior covariance (symmetric, jitter on the diagonal).
MatrixXd kernel_matrix(const MatrixXd& points_a, const MatrixXd& points_b, const KernelConfig& cfg);

/// Prior covariance of one point set: symmetric, jitter added to the diagonal.
MatrixXd kernel_matrix(const MatrixXd& points, const KernelConfig& cfg);

/// Cholesky factor of a prior covariance. On failure the jitter is doubled, at
/// most 8 times; `extra_jitter` is what had to be added on top of the input.
struct PriorFactor
{
    Eigen::LLT<MatrixXd> llt;
    double extra_jitter = 0.0;
};
PriorFactor factorize_prior(const MatrixXd& prior_cov, double jitter);

/// Conditional Gaussian at `test_points` given a Gaussian belief
/// N(latent_mean, latent_cov) over the latent values at `train_points`.
/// With latent_cov = 0 this is the classic noiseless GP conditional.
PredictiveDistribution gp_predict(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                  const MatrixXd& latent_cov, const MatrixXd& test_points);

/// Analytic gradient of the predictive mean k(x, X) K^{-1} latent_mean at `query`.
VectorXd posterior_mean_gradient(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                 const VectorXd& query);

/// Median pairwise Euclidean distance between rows; 1.0 for fewer than two points.
double median_pairwise_distance(const MatrixXd& points);

/// Precomputed predictor in weight form:
///   mean(x) = k(x, X) alpha
///   var(x)  = k(x, x) - k(x, X) R k(X, x)
/// R is K^{-1} - K^{-1} S K^{-1} for a latent covariance S.
class GpPredictor
{
  public:
    GpPredictor() = default;
    GpPredictor(KernelConfig kernel, MatrixXd train_points, VectorXd alpha, MatrixXd var_reduction);

    /// Builds the weight form from a Gaussian latent belief (see gp_predict).
    static GpPredictor from_latent(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                   const MatrixXd& latent_cov);

    Eigen::Index dim() const { return train_.cols(); }
    Eigen::Index size() const { return train_.rows(); }
    const KernelConfig& kernel() const { return kernel_; }
    const MatrixXd& train_points() const { return train_; }
    const VectorXd& alpha() const { return alpha_; }
    const MatrixXd& var_reduction() const { return reduction_; }

    double mean(const VectorXd& x) const;
    double variance(const VectorXd& x) const;
    VectorXd mean_gradient(const VectorXd& x) const;

    struct Moments
    {
        double mean = 0.0;
        double variance = 0.0;
        VectorXd mean_gradient;
        VectorXd variance_gradient;
    };
    /// Mean, variance and both gradients in one pass over the training set.
    Moments moments_with_gradients(const VectorXd& x) const;

    /// Row-wise means and variances for many query points.
    void batch_moments(const MatrixXd& queries, VectorXd& means, VectorXd& variances) const;

  private:
    KernelConfig kernel_;
    MatrixXd train_;
    VectorXd alpha_;
    MatrixXd reduction_;
};
} // namespace multibo
