#include "multibo/gp.hpp"

#include "multibo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace multibo
{
namespace
{
constexpr double k_sqrt5 = 2.23606797749978969640917366873;

// Squared scaled distance sum_d ((a_d - b_d) / l_d)^2.
template <class A, class B> double scaled_sq_dist(const A& a, const B& b, const KernelConfig& cfg)
{
    double r2 = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d)
    {
        const double t = (a(d) - b(d)) / cfg.lengthscale(d);
        r2 += t * t;
    }
    return r2;
}

double kernel_from_r2(double r2, const KernelConfig& cfg)
{
    if (cfg.family == KernelFamily::squared_exponential)
        return cfg.signal_variance * std::exp(-0.5 * r2);
    const double r = std::sqrt(r2);
    return cfg.signal_variance * (1.0 + k_sqrt5 * r + 5.0 / 3.0 * r2) * std::exp(-k_sqrt5 * r);
}

// dk/d(a_d) = -coef * (a_d - b_d) / l_d^2
double kernel_gradient_coef(double r2, const KernelConfig& cfg)
{
    if (cfg.family == KernelFamily::squared_exponential)
        return cfg.signal_variance * std::exp(-0.5 * r2);
    const double r = std::sqrt(r2);
    return cfg.signal_variance * 5.0 / 3.0 * (1.0 + k_sqrt5 * r) * std::exp(-k_sqrt5 * r);
}

void check_finite(const MatrixXd& m, const char* what)
{
    if (!m.allFinite())
        throw ContractError(std::string(what) + " contains non-finite values");
}

MatrixXd cross_kernel(const MatrixXd& a, const MatrixXd& b, const KernelConfig& cfg)
{
    MatrixXd out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            out(i, j) = kernel_from_r2(scaled_sq_dist(a.row(i), b.row(j), cfg), cfg);
    return out;
}
} // namespace

void KernelConfig::validate() const
{
    if (lengthscales.empty())
        throw ContractError("kernel needs at least one lengthscale");
    for (double l : lengthscales)
        if (!(l > 0.0) || !std::isfinite(l))
            throw ContractError("kernel lengthscales must be positive and finite");
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
        throw ContractError("kernel signal_variance must be positive");
    if (!(jitter >= 0.0))
        throw ContractError("kernel jitter must be non-negative");
}

void KernelConfig::check_dimension(Eigen::Index dim) const
{
    if (lengthscales.size() != 1 && static_cast<Eigen::Index>(lengthscales.size()) != dim)
        throw ContractError("lengthscale count " + std::to_string(lengthscales.size()) +
                            " does not match point dimension " + std::to_string(dim));
}

double kernel_value(const VectorXd& a, const VectorXd& b, const KernelConfig& cfg)
{
    if (a.size() != b.size())
        throw ContractError("kernel_value: dimension mismatch");
    cfg.check_dimension(a.size());
    return kernel_from_r2(scaled_sq_dist(a, b, cfg), cfg);
}

VectorXd kernel_gradient(const VectorXd& a, const VectorXd& b, const KernelConfig& cfg)
{
    if (a.size() != b.size())
        throw ContractError("kernel_gradient: dimension mismatch");
    cfg.check_dimension(a.size());
    const double coef = kernel_gradient_coef(scaled_sq_dist(a, b, cfg), cfg);
    VectorXd g(a.size());
    for (Eigen::Index d = 0; d < a.size(); ++d)
    {
        const double l = cfg.lengthscale(d);
        g(d) = -coef * (a(d) - b(d)) / (l * l);
    }
    return g;
}

MatrixXd kernel_matrix(const MatrixXd& points_a, const MatrixXd& points_b, const KernelConfig& cfg)
{
    cfg.validate();
    if (points_a.cols() != points_b.cols())
        throw ContractError("kernel_matrix: point sets have different dimensions");
    cfg.check_dimension(points_a.cols());
    check_finite(points_a, "kernel_matrix points_a");
    check_finite(points_b, "kernel_matrix points_b");
    if (points_a.rows() == points_b.rows() && points_a == points_b)
        return kernel_matrix(points_a, cfg);
    return cross_kernel(points_a, points_b, cfg);
}

MatrixXd kernel_matrix(const MatrixXd& points, const KernelConfig& cfg)
{
    cfg.validate();
    cfg.check_dimension(points.cols());
    check_finite(points, "kernel_matrix points");
    const Eigen::Index n = points.rows();
    MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        out(i, i) = cfg.signal_variance + cfg.jitter;
        for (Eigen::Index j = 0; j < i; ++j)
        {
            const double v = kernel_from_r2(scaled_sq_dist(points.row(i), points.row(j), cfg), cfg);
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

PriorFactor factorize_prior(const MatrixXd& prior_cov, double jitter)
{
    PriorFactor out;
    out.llt.compute(prior_cov);
    if (out.llt.info() == Eigen::Success)
        return out;
    double extra = jitter > 0.0 ? jitter : 1e-10 * std::max(1.0, prior_cov.diagonal().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt)
    {
        MatrixXd m = prior_cov;
        m.diagonal().array() += extra;
        out.llt.compute(m);
        if (out.llt.info() == Eigen::Success)
        {
            out.extra_jitter = extra;
            return out;
        }
        extra *= 2.0;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(prior_cov, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double cond = ev.maxCoeff() / std::max(std::abs(ev.minCoeff()), 1e-300);
    throw NumericalError("prior covariance is singular after jitter (condition estimate " + std::to_string(cond) + ")",
                         cond);
}

PredictiveDistribution gp_predict(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                  const MatrixXd& latent_cov, const MatrixXd& test_points)
{
    const KernelConfig& cfg = prior.kernel;
    cfg.validate();
    check_finite(test_points, "gp_predict test points");
    if (train_points.rows() > 0 && train_points.cols() != test_points.cols())
        throw ContractError("gp_predict: train and test dimensions differ");
    cfg.check_dimension(test_points.cols());

    PredictiveDistribution out;
    out.covariance = cross_kernel(test_points, test_points, cfg);
    if (train_points.rows() == 0)
    {
        out.mean = VectorXd::Zero(test_points.rows());
        return out;
    }
    if (latent_mean.size() != train_points.rows())
        throw ContractError("gp_predict: latent_mean length must equal the number of training points");
    if (latent_cov.rows() != train_points.rows() || latent_cov.cols() != train_points.rows())
        throw ContractError("gp_predict: latent_cov must be |train| x |train|");

    const MatrixXd prior_cov = kernel_matrix(train_points, cfg);
    const PriorFactor factor = factorize_prior(prior_cov, cfg.jitter);
    const MatrixXd cross = cross_kernel(train_points, test_points, cfg); // |train| x |test|
    const MatrixXd solved = factor.llt.solve(cross);                      // K^{-1} K_hat

    out.mean = solved.transpose() * latent_mean;
    out.covariance -= cross.transpose() * solved;
    out.covariance += solved.transpose() * latent_cov * solved;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    for (Eigen::Index i = 0; i < out.covariance.rows(); ++i)
        if (out.covariance(i, i) < 0.0)
            out.covariance(i, i) = 0.0;
    return out;
}

VectorXd posterior_mean_gradient(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                 const VectorXd& query)
{
    if (train_points.rows() == 0)
        return VectorXd::Zero(query.size());
    if (train_points.cols() != query.size())
        throw ContractError("posterior_mean_gradient: query dimension mismatch");
    if (latent_mean.size() != train_points.rows())
        throw ContractError("posterior_mean_gradient: latent_mean length mismatch");
    const MatrixXd prior_cov = kernel_matrix(train_points, prior.kernel);
    const PriorFactor factor = factorize_prior(prior_cov, prior.kernel.jitter);
    const VectorXd alpha = factor.llt.solve(latent_mean);
    VectorXd grad = VectorXd::Zero(query.size());
    for (Eigen::Index i = 0; i < train_points.rows(); ++i)
        grad += alpha(i) * kernel_gradient(query, train_points.row(i).transpose(), prior.kernel);
    return grad;
}

double median_pairwise_distance(const MatrixXd& points)
{
    const Eigen::Index n = points.rows();
    if (n < 2)
        return 1.0;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            dists.push_back((points.row(i) - points.row(j)).norm());
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double med = *mid;
    if (dists.size() % 2 == 0)
        med = 0.5 * (med + *std::max_element(dists.begin(), mid));
    return med > 0.0 ? med : 1.0;
}

GpPredictor::GpPredictor(KernelConfig kernel, MatrixXd train_points, VectorXd alpha, MatrixXd var_reduction)
    : kernel_(std::move(kernel)), train_(std::move(train_points)), alpha_(std::move(alpha)),
      reduction_(std::move(var_reduction))
{
    kernel_.validate();
    if (alpha_.size() != train_.rows() || reduction_.rows() != train_.rows() || reduction_.cols() != train_.rows())
        throw ContractError("GpPredictor: weight shapes do not match the training set");
    if (train_.rows() > 0)
        kernel_.check_dimension(train_.cols());
}

GpPredictor GpPredictor::from_latent(const GpPrior& prior, const MatrixXd& train_points, const VectorXd& latent_mean,
                                     const MatrixXd& latent_cov)
{
    if (train_points.rows() == 0)
        return GpPredictor(prior.kernel, train_points, VectorXd(), MatrixXd());
    const MatrixXd prior_cov = kernel_matrix(train_points, prior.kernel);
    const PriorFactor factor = factorize_prior(prior_cov, prior.kernel.jitter);
    const Eigen::Index n = train_points.rows();
    const MatrixXd inv = factor.llt.solve(MatrixXd::Identity(n, n));
    MatrixXd reduction = inv - inv * latent_cov * inv;
    reduction = 0.5 * (reduction + reduction.transpose()).eval();
    return GpPredictor(prior.kernel, train_points, factor.llt.solve(latent_mean), std::move(reduction));
}

double GpPredictor::mean(const VectorXd& x) const
{
    double m = 0.0;
    for (Eigen::Index i = 0; i < train_.rows(); ++i)
        m += alpha_(i) * kernel_from_r2(scaled_sq_dist(x, train_.row(i), kernel_), kernel_);
    return m;
}

double GpPredictor::variance(const VectorXd& x) const
{
    if (train_.rows() == 0)
        return kernel_.signal_variance;
    VectorXd k(train_.rows());
    for (Eigen::Index i = 0; i < train_.rows(); ++i)
        k(i) = kernel_from_r2(scaled_sq_dist(x, train_.row(i), kernel_), kernel_);
    return std::max(0.0, kernel_.signal_variance - k.dot(reduction_ * k));
}

VectorXd GpPredictor::mean_gradient(const VectorXd& x) const
{
    VectorXd g = VectorXd::Zero(x.size());
    for (Eigen::Index i = 0; i < train_.rows(); ++i)
    {
        const double coef = alpha_(i) * kernel_gradient_coef(scaled_sq_dist(x, train_.row(i), kernel_), kernel_);
        for (Eigen::Index d = 0; d < x.size(); ++d)
        {
            const double l = kernel_.lengthscale(d);
            g(d) -= coef * (x(d) - train_(i, d)) / (l * l);
        }
    }
    return g;
}

GpPredictor::Moments GpPredictor::moments_with_gradients(const VectorXd& x) const
{
    const Eigen::Index n = train_.rows();
    const Eigen::Index dim = x.size();
    Moments out;
    out.mean_gradient = VectorXd::Zero(dim);
    out.variance_gradient = VectorXd::Zero(dim);
    if (n == 0)
    {
        out.variance = kernel_.signal_variance;
        return out;
    }
    VectorXd k(n);
    MatrixXd dk(n, dim); // row i: d k(x, x_i) / dx
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const double r2 = scaled_sq_dist(x, train_.row(i), kernel_);
        k(i) = kernel_from_r2(r2, kernel_);
        const double coef = kernel_gradient_coef(r2, kernel_);
        for (Eigen::Index d = 0; d < dim; ++d)
        {
            const double l = kernel_.lengthscale(d);
            dk(i, d) = -coef * (x(d) - train_(i, d)) / (l * l);
        }
    }
    const VectorXd rk = reduction_ * k;
    out.mean = k.dot(alpha_);
    out.variance = kernel_.signal_variance - k.dot(rk);
    out.mean_gradient = dk.transpose() * alpha_;
    out.variance_gradient = -2.0 * dk.transpose() * rk;
    if (out.variance < 0.0)
    {
        out.variance = 0.0;
        out.variance_gradient.setZero();
    }
    return out;
}

void GpPredictor::batch_moments(const MatrixXd& queries, VectorXd& means, VectorXd& variances) const
{
    const Eigen::Index m = queries.rows();
    if (train_.rows() == 0)
    {
        means = VectorXd::Zero(m);
        variances = VectorXd::Constant(m, kernel_.signal_variance);
        return;
    }
    const MatrixXd cross = cross_kernel(queries, train_, kernel_); // m x n
    means = cross * alpha_;
    const MatrixXd cr = cross * reduction_;
    variances = (kernel_.signal_variance - (cr.array() * cross.array()).rowwise().sum()).max(0.0).matrix();
}
} // namespace multibo
