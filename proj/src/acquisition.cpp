#include "multibo/acquisition.hpp"

#include "multibo/errors.hpp"
#include "multibo/normal.hpp"
#include "multibo/sobol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace multibo
{
namespace
{
struct EiWithGradient
{
    double value = 0.0;
    VectorXd gradient;
};

// EI surface. With a reference point r the improvement is measured on the
// joint difference f(x) - f(r), whose variance var(x) + var(r) - 2 cov(x, r)
// cancels the utility offset that preference data cannot identify.
class EiSurface
{
  public:
    EiSurface(const GpPredictor& predictor, double f_star, const VectorXd* reference)
        : predictor_(predictor), f_star_(f_star)
    {
        if (!reference || predictor.size() == 0)
            return;
        reference_ = *reference;
        const MatrixXd kr = kernel_matrix(predictor.train_points(), reference->transpose(), predictor.kernel());
        const VectorXd mkr = predictor.var_reduction() * kr.col(0);
        cross_ = GpPredictor(predictor.kernel(), predictor.train_points(), mkr,
                             MatrixXd::Zero(predictor.size(), predictor.size()));
        var_ref_ = predictor.variance(*reference);
    }

    double value_from(double mean, double var) const { return expected_improvement(mean, std::sqrt(var), f_star_); }

    void batch(const MatrixXd& queries, std::vector<double>& out) const
    {
        VectorXd means, vars;
        predictor_.batch_moments(queries, means, vars);
        if (reference_)
        {
            const MatrixXd kq = kernel_matrix(queries, reference_->transpose(), predictor_.kernel());
            const MatrixXd kt = kernel_matrix(queries, predictor_.train_points(), predictor_.kernel());
            const VectorXd cov = kq.col(0) - kt * cross_.alpha();
            vars = (vars.array() + var_ref_ - 2.0 * cov.array()).cwiseMax(0.0);
        }
        out.resize(static_cast<std::size_t>(queries.rows()));
        for (Eigen::Index i = 0; i < queries.rows(); ++i)
            out[static_cast<std::size_t>(i)] = value_from(means(i), vars(i));
    }

    EiWithGradient at(const VectorXd& x) const
    {
        const auto m = predictor_.moments_with_gradients(x);
        double var = m.variance;
        VectorXd var_grad = m.variance_gradient;
        if (reference_)
        {
            const double cov = kernel_value(x, *reference_, predictor_.kernel()) - cross_.mean(x);
            var = std::max(0.0, var + var_ref_ - 2.0 * cov);
            var_grad -= 2.0 * (kernel_gradient(x, *reference_, predictor_.kernel()) - cross_.mean_gradient(x));
        }
        EiWithGradient out;
        out.gradient = VectorXd::Zero(x.size());
        const double sd = std::sqrt(var);
        if (sd <= 1e-12)
        {
            out.value = std::max(0.0, m.mean - f_star_);
            if (out.value > 0.0)
                out.gradient = m.mean_gradient;
            return out;
        }
        const double z = (m.mean - f_star_) / sd;
        const double cdf = normal::cdf(z);
        const double pdf = normal::pdf(z);
        out.value = std::max(0.0, sd * (z * cdf + pdf));
        out.gradient = cdf * m.mean_gradient + pdf * var_grad / (2.0 * sd);
        return out;
    }

  private:
    const GpPredictor& predictor_;
    double f_star_;
    std::optional<VectorXd> reference_;
    GpPredictor cross_;
    double var_ref_ = 0.0;
};

double max_abs_unit_distance(const VectorXd& a, const VectorXd& b, const VectorXd& width)
{
    double m = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d)
    {
        const double w = width(d) > 0.0 ? width(d) : 1.0;
        m = std::max(m, std::abs(a(d) - b(d)) / w);
    }
    return m;
}

struct LocalResult
{
    VectorXd x;
    double value;
};

// Projected gradient ascent on EI in box-normalized coordinates with an
// adaptive step: doubled on improvement, halved on failure.
LocalResult ascend_ei(const EiSurface& surface, const BoxBounds& bounds, VectorXd x, int max_iter)
{
    const VectorXd width = bounds.width();
    EiWithGradient cur = surface.at(x);
    VectorXd g_unit = cur.gradient.cwiseProduct(width);
    double gmax = g_unit.lpNorm<Eigen::Infinity>();
    if (!(gmax > 0.0))
        return {x, cur.value};
    double step = 0.05 / gmax;
    for (int it = 0; it < max_iter; ++it)
    {
        VectorXd u = bounds.to_unit(x) + step * g_unit;
        u = u.cwiseMax(0.0).cwiseMin(1.0);
        const VectorXd x_new = bounds.project(bounds.from_unit(u));
        if (max_abs_unit_distance(x_new, x, width) < 1e-6)
            break;
        const EiWithGradient cand = surface.at(x_new);
        if (cand.value > cur.value)
        {
            x = x_new;
            cur = cand;
            g_unit = cur.gradient.cwiseProduct(width);
            gmax = g_unit.lpNorm<Eigen::Infinity>();
            if (!(gmax > 0.0))
                break;
            step *= 2.0;
        }
        else
        {
            step *= 0.5;
        }
    }
    return {x, cur.value};
}
} // namespace

BoxBounds::BoxBounds(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi))
{
    if (lower.size() != upper.size())
        throw ContractError("box bounds: lower and upper differ in dimension");
    if (!lower.allFinite() || !upper.allFinite())
        throw ContractError("box bounds must be finite");
    for (Eigen::Index d = 0; d < lower.size(); ++d)
        if (lower(d) > upper(d))
            throw ContractError("box bounds: lower exceeds upper in dimension " + std::to_string(d));
}

BoxBounds BoxBounds::unit(Eigen::Index dim) { return BoxBounds(VectorXd::Zero(dim), VectorXd::Ones(dim)); }

bool BoxBounds::contains(const VectorXd& x, double tol) const
{
    if (x.size() != dim())
        return false;
    for (Eigen::Index d = 0; d < x.size(); ++d)
        if (!(x(d) >= lower(d) - tol && x(d) <= upper(d) + tol))
            return false;
    return true;
}

VectorXd BoxBounds::project(const VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

VectorXd BoxBounds::to_unit(const VectorXd& x) const
{
    VectorXd u(x.size());
    for (Eigen::Index d = 0; d < x.size(); ++d)
    {
        const double w = upper(d) - lower(d);
        u(d) = w > 0.0 ? (x(d) - lower(d)) / w : 0.5;
    }
    return u;
}

VectorXd BoxBounds::from_unit(const VectorXd& u) const { return lower + u.cwiseProduct(width()); }

std::string to_string(ProposalStrategy s)
{
    switch (s)
    {
    case ProposalStrategy::dbs:
        return "dbs";
    case ProposalStrategy::bridge_only:
        return "bridge-only";
    case ProposalStrategy::subspace_only:
        return "subspace-only";
    case ProposalStrategy::ei_top_k:
        return "ei-top-k";
    case ProposalStrategy::random:
        return "random";
    }
    return "unknown";
}

ProposalStrategy proposal_strategy_from_string(const std::string& name)
{
    for (auto s : {ProposalStrategy::dbs, ProposalStrategy::bridge_only, ProposalStrategy::subspace_only,
                   ProposalStrategy::ei_top_k, ProposalStrategy::random})
        if (to_string(s) == name)
            return s;
    throw ContractError("unknown proposal strategy '" + name + "'");
}

std::vector<double> DbsConfig::bridge_coefficients() const
{
    if (!gamma_bridge.empty())
        return gamma_bridge;
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i)
        g[i] = k == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(k - 1);
    return g;
}

void DbsConfig::validate() const
{
    if (k < 2)
        throw ContractError("DBS needs K >= 2 choices");
    if (!gamma_bridge.empty())
    {
        if (gamma_bridge.size() != k)
            throw ContractError("gamma_bridge must have exactly K entries");
        for (double g : gamma_bridge)
            if (!(g >= 0.0 && g <= 1.0))
                throw ContractError("gamma_bridge entries must lie in [0, 1]");
    }
    if (!(spectral_threshold > 0.0))
        throw ContractError("spectral_threshold must be positive");
    if (n_gradient_samples < 1)
        throw ContractError("n_gradient_samples must be at least 1");
    if (!(neighborhood_radius >= 0.0) || !(perturb_scale >= 0.0))
        throw ContractError("neighborhood_radius and perturb_scale must be non-negative");
    if (ei_raw_samples < 1 || ei_restarts < 1)
        throw ContractError("ei_raw_samples and ei_restarts must be positive");
}

double expected_improvement(double mean, double sd, double f_star)
{
    if (sd <= 1e-12)
        return std::max(0.0, mean - f_star);
    const double z = (mean - f_star) / sd;
    return std::max(0.0, sd * (z * normal::cdf(z) + normal::pdf(z)));
}

double expected_improvement(const GpPredictor& predictor, const VectorXd& x, double f_star)
{
    return expected_improvement(predictor.mean(x), std::sqrt(predictor.variance(x)), f_star);
}

EiMaximum maximize_ei(const GpPredictor& predictor, double f_star, const BoxBounds& bounds, const DbsConfig& cfg,
                      Rng& rng, const VectorXd* reference)
{
    if (predictor.size() > 0 && predictor.dim() != bounds.dim())
        throw ContractError("maximize_ei: bounds dimension does not match the posterior");
    const Eigen::Index dim = bounds.dim();
    const MatrixXd unit = shifted_sobol(cfg.ei_raw_samples, dim, rng);
    MatrixXd raw(unit.rows(), dim);
    for (Eigen::Index i = 0; i < unit.rows(); ++i)
        raw.row(i) = bounds.from_unit(unit.row(i).transpose()).transpose();

    if (reference && reference->size() != dim)
        throw ContractError("maximize_ei: reference point has the wrong dimension");
    const EiSurface surface(predictor, f_star, reference);
    std::vector<double> ei;
    surface.batch(raw, ei);

    std::vector<std::size_t> order(ei.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ei[a] > ei[b]; });

    EiMaximum out;
    if (!(ei[order.front()] > 0.0))
    {
        out.x = raw.row(0).transpose();
        out.value = 0.0;
        out.degenerate = true;
        out.local_maxima.push_back(out.x);
        out.local_values.push_back(0.0);
        return out;
    }

    std::vector<LocalResult> results;
    const std::size_t n_starts = std::min(cfg.ei_restarts, order.size());
    for (std::size_t s = 0; s < n_starts; ++s)
        results.push_back(
            ascend_ei(surface, bounds, raw.row(static_cast<Eigen::Index>(order[s])).transpose(), cfg.ei_max_iterations));
    std::stable_sort(results.begin(), results.end(),
                     [](const LocalResult& a, const LocalResult& b) { return a.value > b.value; });

    const VectorXd width = bounds.width();
    for (const auto& r : results)
    {
        const bool dup = std::any_of(out.local_maxima.begin(), out.local_maxima.end(), [&](const VectorXd& m) {
            return max_abs_unit_distance(m, r.x, width) < 1e-6;
        });
        if (!dup)
        {
            out.local_maxima.push_back(r.x);
            out.local_values.push_back(r.value);
        }
    }
    out.x = out.local_maxima.front();
    out.value = out.local_values.front();
    return out;
}

MatrixXd gradient_covariance(const GradientFn& gradient, const VectorXd& x_best, const BoxBounds& bounds,
                             const DbsConfig& cfg, Rng& rng)
{
    if (x_best.size() != bounds.dim())
        throw ContractError("gradient_covariance: x_best dimension does not match bounds");
    const Eigen::Index dim = x_best.size();
    const double radius = cfg.neighborhood_radius * bounds.diagonal();
    MatrixXd c = MatrixXd::Zero(dim, dim);
    for (std::size_t h = 0; h < cfg.n_gradient_samples; ++h)
    {
        const VectorXd x = bounds.project(x_best + uniform_in_ball(rng, dim, radius));
        const VectorXd g = gradient(x);
        c.noalias() += g * g.transpose();
    }
    return c / static_cast<double>(cfg.n_gradient_samples);
}

MatrixXd gradient_covariance(const GpPredictor& predictor, const VectorXd& x_best, const BoxBounds& bounds,
                             const DbsConfig& cfg, Rng& rng)
{
    return gradient_covariance([&](const VectorXd& x) { return predictor.mean_gradient(x); }, x_best, bounds, cfg,
                               rng);
}

std::size_t spectral_gap_dim(std::span<const double> eigenvalues, double threshold)
{
    if (eigenvalues.size() < 2)
        return 1;
    std::size_t best = 0;
    double best_ratio = -1.0;
    for (std::size_t i = 0; i + 1 < eigenvalues.size(); ++i)
    {
        const double denom = eigenvalues[i + 1];
        const double ratio = denom <= 0.0 ? std::numeric_limits<double>::infinity() : eigenvalues[i] / denom;
        if (ratio >= threshold)
            return i + 1;
        if (ratio > best_ratio)
        {
            best_ratio = ratio;
            best = i;
        }
    }
    return best + 1;
}

SubspaceBasis active_subspace(const MatrixXd& covariance, double threshold)
{
    const Eigen::Index dim = covariance.rows();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (covariance + covariance.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("active_subspace: eigendecomposition failed");
    SubspaceBasis out;
    out.eigenvalues.resize(dim);
    out.eigenvectors.resize(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
    {
        out.eigenvalues(i) = std::max(0.0, es.eigenvalues()(dim - 1 - i));
        out.eigenvectors.col(i) = es.eigenvectors().col(dim - 1 - i);
    }
    out.selected_dim = spectral_gap_dim(std::span<const double>(out.eigenvalues.data(), out.eigenvalues.size()),
                                        threshold);
    return out;
}

DbsProposal dbs_propose(const GpPredictor& predictor, double f_star, const VectorXd& x_best, const BoxBounds& bounds,
                        const DbsConfig& cfg, Rng& rng)
{
    cfg.validate();
    if (!bounds.contains(x_best, 1e-12))
        throw ContractError("dbs_propose: incumbent lies outside the bounds");
    const Eigen::Index dim = bounds.dim();
    const auto k = static_cast<Eigen::Index>(cfg.k);
    const VectorXd width = bounds.width();
    DbsProposal out;
    out.points.resize(k, dim);

    if (cfg.strategy == ProposalStrategy::random)
    {
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index d = 0; d < dim; ++d)
                out.points(i, d) = uniform(rng, bounds.lower(d), bounds.upper(d));
        out.x_ei = out.points.row(0).transpose();
        return out;
    }

    const EiMaximum ei = maximize_ei(predictor, f_star, bounds, cfg, rng, cfg.ei_joint_incumbent ? &x_best : nullptr);
    out.x_ei = ei.x;
    out.ei_degenerate = ei.degenerate;

    if (cfg.strategy == ProposalStrategy::ei_top_k)
    {
        for (Eigen::Index i = 0; i < k; ++i)
        {
            if (static_cast<std::size_t>(i) < ei.local_maxima.size())
                out.points.row(i) = ei.local_maxima[static_cast<std::size_t>(i)].transpose();
            else
                for (Eigen::Index d = 0; d < dim; ++d)
                    out.points(i, d) = uniform(rng, bounds.lower(d), bounds.upper(d));
        }
        return out;
    }

    std::vector<double> gammas = cfg.bridge_coefficients();
    if (cfg.strategy == ProposalStrategy::subspace_only)
        std::fill(gammas.begin(), gammas.end(), 0.0);

    MatrixXd bridges(k, dim);
    for (Eigen::Index i = 0; i < k; ++i)
    {
        const double g = gammas[static_cast<std::size_t>(i)];
        bridges.row(i) = ((1.0 - g) * x_best + g * out.x_ei).transpose();
    }

    // Directions in box-normalized coordinates, scaled by sqrt of the
    // normalized eigenvalues (largest = 1).
    MatrixXd directions(dim, 0);
    if (cfg.strategy != ProposalStrategy::bridge_only)
    {
        const MatrixXd c = gradient_covariance(predictor, x_best, bounds, cfg, rng);
        const MatrixXd c_unit = width.asDiagonal() * c * width.asDiagonal();
        out.basis = active_subspace(c_unit, cfg.spectral_threshold);
        out.subspace_dim = out.basis.selected_dim;
        const double top = out.basis.eigenvalues(0);
        if (top > 1e-12 && cfg.perturb_scale > 0.0)
        {
            const auto d = static_cast<Eigen::Index>(out.basis.selected_dim);
            directions.resize(dim, d);
            for (Eigen::Index j = 0; j < d; ++j)
                directions.col(j) = std::sqrt(out.basis.eigenvalues(j) / top) * out.basis.eigenvectors.col(j);
        }
    }

    auto perturbed = [&](Eigen::Index i) {
        VectorXd x = bridges.row(i).transpose();
        if (directions.cols() > 0)
        {
            VectorXd delta = VectorXd::Zero(dim);
            for (Eigen::Index j = 0; j < directions.cols(); ++j)
                delta += uniform(rng, -1.0, 1.0) * directions.col(j);
            x += cfg.perturb_scale * delta.cwiseProduct(width);
        }
        return bounds.project(x);
    };
    auto collides = [&](Eigen::Index i) {
        for (Eigen::Index j = 0; j < i; ++j)
            if (max_abs_unit_distance(out.points.row(i).transpose(), out.points.row(j).transpose(), width) < 1e-9)
                return true;
        return false;
    };

    for (Eigen::Index i = 0; i < k; ++i)
    {
        out.points.row(i) = perturbed(i).transpose();
        for (int retry = 0; retry < 10 && collides(i) && directions.cols() > 0; ++retry)
            out.points.row(i) = perturbed(i).transpose();
        // Deterministic fallback: nudge one coordinate until the point is unique.
        for (Eigen::Index step = 1; collides(i) && step <= 4 * dim; ++step)
        {
            const Eigen::Index d = (i + step) % dim;
            VectorXd x = out.points.row(i).transpose();
            const double nudge = 1e-6 * static_cast<double>(step) * width(d);
            x(d) = x(d) + nudge <= bounds.upper(d) ? x(d) + nudge : x(d) - nudge;
            out.points.row(i) = x.transpose();
        }
    }
    return out;
}
} // namespace multibo
