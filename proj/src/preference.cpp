#include "multibo/preference.hpp"

#include "multibo/errors.hpp"
#include "multibo/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace multibo
{
namespace
{
double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z)
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(exp(s) - 1) for s > 0
double log_expm1(double s) { return s > 30.0 ? s + std::log1p(-std::exp(-s)) : std::log(std::expm1(s)); }

VectorXd gather(const VectorXd& f, const std::vector<std::size_t>& idx)
{
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
    {
        if (idx[i] >= static_cast<std::size_t>(f.size()))
            throw ContractError("observation index out of range of the latent vector");
        out(static_cast<Eigen::Index>(i)) = f(static_cast<Eigen::Index>(idx[i]));
    }
    return out;
}

VectorXd softmax(const VectorXd& f)
{
    const double m = f.maxCoeff();
    VectorXd e = (f.array() - m).exp().matrix();
    return e / e.sum();
}

double pairwise_scale(const LikelihoodModel& model)
{
    if (!(model.noise_scale > 0.0))
        throw ContractError("pairwise noise_scale must be positive");
    return std::numbers::sqrt2 * model.noise_scale;
}

void check_model_arity(const PreferenceObservation& obs, const LikelihoodModel& model)
{
    switch (model.kind)
    {
    case LikelihoodKind::pairwise_probit:
    case LikelihoodKind::pairwise_logit:
        if (!obs.is_pairwise())
            throw ContractError("pairwise likelihood needs exactly two choices and one winner");
        break;
    case LikelihoodKind::multinomial_logit:
        if (obs.winners.size() != 1)
            throw ContractError("multinomial-logit likelihood needs exactly one winner");
        break;
    case LikelihoodKind::subset_logit:
        if (obs.choice_set.size() > k_max_subset_choices)
            throw ContractError("subset-logit choice set larger than " + std::to_string(k_max_subset_choices));
        break;
    }
}

struct LocalDerivatives
{
    VectorXd gradient;
    MatrixXd neg_hessian;
};

LocalDerivatives local_derivatives(const VectorXd& f_local, const PreferenceObservation& obs,
                                   const LikelihoodModel& model)
{
    const Eigen::Index k = f_local.size();
    LocalDerivatives out{VectorXd::Zero(k), MatrixXd::Zero(k, k)};
    switch (model.kind)
    {
    case LikelihoodKind::pairwise_probit:
    case LikelihoodKind::pairwise_logit: {
        const Eigen::Index w = static_cast<Eigen::Index>(obs.winners.front());
        const Eigen::Index l = 1 - w;
        const double s = pairwise_scale(model);
        const double z = (f_local(w) - f_local(l)) / s;
        double dz = 0.0;   // d log P / dz
        double curv = 0.0; // -d^2 log P / dz^2
        if (model.kind == LikelihoodKind::pairwise_logit)
        {
            const double p = sigmoid(z);
            dz = 1.0 - p;
            curv = p * (1.0 - p);
        }
        else
        {
            const double r = normal::pdf_over_cdf(z);
            dz = r;
            curv = r * (z + r);
        }
        out.gradient(w) = dz / s;
        out.gradient(l) = -dz / s;
        const double c = curv / (s * s);
        out.neg_hessian << c, -c, -c, c;
        break;
    }
    case LikelihoodKind::multinomial_logit: {
        const VectorXd pi = softmax(f_local);
        out.gradient = -pi;
        out.gradient(static_cast<Eigen::Index>(obs.winners.front())) += 1.0;
        out.neg_hessian = pi.asDiagonal();
        out.neg_hessian -= pi * pi.transpose();
        break;
    }
    case LikelihoodKind::subset_logit: {
        const SubsetMarginals m = subset_marginals(f_local);
        out.gradient = -m.pi;
        for (std::size_t w : obs.winners)
            out.gradient(static_cast<Eigen::Index>(w)) += 1.0;
        out.neg_hessian = m.pi_pair - m.pi * m.pi.transpose();
        break;
    }
    }
    return out;
}

// Clamp negative eigenvalues of a small symmetric block to zero.
void repair_psd(MatrixXd& block)
{
    block = 0.5 * (block + block.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(block);
    if (es.eigenvalues().minCoeff() >= 0.0)
        return;
    const VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
    block = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}
} // namespace

void PreferenceObservation::validate(std::optional<std::size_t> archive_size) const
{
    if (choice_set.empty())
        throw ContractError("observation has an empty choice set");
    if (winners.empty())
        throw ContractError("observation must select a non-empty subset of winners");
    std::set<std::size_t> seen(choice_set.begin(), choice_set.end());
    if (seen.size() != choice_set.size())
        throw ContractError("observation choice set contains duplicate indices");
    std::set<std::size_t> won(winners.begin(), winners.end());
    if (won.size() != winners.size())
        throw ContractError("observation winners contain duplicates");
    for (std::size_t w : winners)
        if (w >= choice_set.size())
            throw ContractError("winner position outside the choice set");
    if (archive_size)
        for (std::size_t idx : choice_set)
            if (idx >= *archive_size)
                throw ContractError("observation refers to archive index " + std::to_string(idx) +
                                    " but the archive has " + std::to_string(*archive_size) + " points");
}

std::string to_string(LikelihoodKind kind)
{
    switch (kind)
    {
    case LikelihoodKind::pairwise_probit:
        return "pairwise-probit";
    case LikelihoodKind::pairwise_logit:
        return "pairwise-logit";
    case LikelihoodKind::multinomial_logit:
        return "multinomial-logit";
    case LikelihoodKind::subset_logit:
        return "subset-logit";
    }
    return "unknown";
}

LikelihoodKind likelihood_kind_from_string(const std::string& name)
{
    for (auto k : {LikelihoodKind::pairwise_probit, LikelihoodKind::pairwise_logit, LikelihoodKind::multinomial_logit,
                   LikelihoodKind::subset_logit})
        if (to_string(k) == name)
            return k;
    throw ContractError("unknown likelihood kind '" + name + "'");
}

double pairwise_loglik(const VectorXd& f, const PreferenceObservation& obs, const LikelihoodModel& model)
{
    if (!obs.is_pairwise())
        throw ContractError("pairwise_loglik needs exactly two choices and one winner");
    if (model.kind != LikelihoodKind::pairwise_logit && model.kind != LikelihoodKind::pairwise_probit)
        throw ContractError("pairwise_loglik needs a pairwise likelihood model");
    const VectorXd local = gather(f, obs.choice_set);
    const Eigen::Index w = static_cast<Eigen::Index>(obs.winners.front());
    const double z = (local(w) - local(1 - w)) / pairwise_scale(model);
    return model.kind == LikelihoodKind::pairwise_logit ? log_sigmoid(z) : normal::log_cdf(z);
}

double multinomial_logit_loglik(const VectorXd& f_subset, std::size_t winner_pos)
{
    if (f_subset.size() < 1 || winner_pos >= static_cast<std::size_t>(f_subset.size()))
        throw ContractError("multinomial_logit_loglik: winner position out of range");
    const double m = f_subset.maxCoeff();
    const double lse = m + std::log((f_subset.array() - m).exp().sum());
    return f_subset(static_cast<Eigen::Index>(winner_pos)) - lse;
}

double subset_loglik(const VectorXd& f_subset, std::span<const std::size_t> winners)
{
    if (winners.empty())
        throw ContractError("subset_loglik: winners must be a non-empty subset");
    double numer = 0.0;
    for (std::size_t w : winners)
    {
        if (w >= static_cast<std::size_t>(f_subset.size()))
            throw ContractError("subset_loglik: winner position out of range");
        numer += f_subset(static_cast<Eigen::Index>(w));
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < f_subset.size(); ++j)
        s += softplus(f_subset(j));
    return numer - log_expm1(s);
}

double observation_loglik(const VectorXd& f, const PreferenceObservation& obs, const LikelihoodModel& model)
{
    check_model_arity(obs, model);
    switch (model.kind)
    {
    case LikelihoodKind::pairwise_probit:
    case LikelihoodKind::pairwise_logit:
        return pairwise_loglik(f, obs, model);
    case LikelihoodKind::multinomial_logit:
        return multinomial_logit_loglik(gather(f, obs.choice_set), obs.winners.front());
    case LikelihoodKind::subset_logit:
        return subset_loglik(gather(f, obs.choice_set), obs.winners);
    }
    return 0.0;
}

double total_loglik(const VectorXd& f, const std::vector<PreferenceObservation>& observations,
                    const LikelihoodModel& model)
{
    double sum = 0.0;
    for (const auto& obs : observations)
        sum += observation_loglik(f, obs, model);
    return sum;
}

SubsetMarginals subset_marginals(const VectorXd& f_subset)
{
    const auto k = static_cast<std::size_t>(f_subset.size());
    if (k == 0)
        throw ContractError("subset_marginals: empty choice set");
    if (k > k_max_subset_choices)
        throw ContractError("subset_marginals: K=" + std::to_string(k) + " exceeds the enumeration bound of " +
                            std::to_string(k_max_subset_choices));
    const std::size_t n_subsets = (std::size_t{1} << k) - 1;
    // Shift by the largest subset log-weight: sum of positive utilities.
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j)
        shift += std::max(0.0, f_subset(static_cast<Eigen::Index>(j)));

    SubsetMarginals out{VectorXd::Zero(f_subset.size()), MatrixXd::Zero(f_subset.size(), f_subset.size())};
    double total = 0.0;
    std::vector<Eigen::Index> members;
    members.reserve(k);
    for (std::size_t mask = 1; mask <= n_subsets; ++mask)
    {
        members.clear();
        double logw = -shift;
        for (std::size_t j = 0; j < k; ++j)
            if (mask & (std::size_t{1} << j))
            {
                members.push_back(static_cast<Eigen::Index>(j));
                logw += f_subset(static_cast<Eigen::Index>(j));
            }
        const double w = std::exp(logw);
        total += w;
        for (Eigen::Index a : members)
            for (Eigen::Index b : members)
                out.pi_pair(a, b) += w;
    }
    out.pi_pair /= total;
    out.pi = out.pi_pair.diagonal();
    return out;
}

LoglikDerivatives loglik_grad_hess(const VectorXd& f, const std::vector<PreferenceObservation>& observations,
                                   const LikelihoodModel& model)
{
    const Eigen::Index n = f.size();
    LoglikDerivatives out{VectorXd::Zero(n), MatrixXd::Zero(n, n)};
    for (const auto& obs : observations)
    {
        obs.validate(static_cast<std::size_t>(n));
        check_model_arity(obs, model);
        const VectorXd local = gather(f, obs.choice_set);
        LocalDerivatives d = local_derivatives(local, obs, model);
        repair_psd(d.neg_hessian);
        for (std::size_t a = 0; a < obs.choice_set.size(); ++a)
        {
            const auto ia = static_cast<Eigen::Index>(obs.choice_set[a]);
            out.gradient(ia) += d.gradient(static_cast<Eigen::Index>(a));
            for (std::size_t b = 0; b < obs.choice_set.size(); ++b)
                out.neg_hessian(ia, static_cast<Eigen::Index>(obs.choice_set[b])) +=
                    d.neg_hessian(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    return out;
}

GpPredictor LatentPosterior::predictor() const { return GpPredictor(kernel, archive_points, alpha, var_reduction); }

double LatentPosterior::map_certificate() const
{
    if (f_map.size() == 0)
        return 0.0;
    const LoglikDerivatives d = loglik_grad_hess(f_map, observations, model);
    return (d.gradient - alpha).lpNorm<Eigen::Infinity>();
}

double log_posterior_value(const VectorXd& f, const MatrixXd& prior_cov,
                           const std::vector<PreferenceObservation>& observations, const LikelihoodModel& model)
{
    const PriorFactor factor = factorize_prior(prior_cov, 0.0);
    return -0.5 * f.dot(factor.llt.solve(f)) + total_loglik(f, observations, model);
}

LatentPosterior laplace_fit(const MatrixXd& archive_points, const std::vector<PreferenceObservation>& observations,
                            const KernelConfig& kernel, const LikelihoodModel& model, const LaplaceOptions& options)
{
    if (archive_points.rows() == 0)
        throw ContractError("laplace_fit: archive is empty");
    const Eigen::Index n = archive_points.rows();
    for (const auto& obs : observations)
    {
        obs.validate(static_cast<std::size_t>(n));
        check_model_arity(obs, model);
    }

    LatentPosterior post;
    post.archive_points = archive_points;
    post.observations = observations;
    post.kernel = kernel;
    post.model = model;
    post.prior_cov = kernel_matrix(archive_points, kernel);
    const MatrixXd& prior = post.prior_cov;
    const MatrixXd identity = MatrixXd::Identity(n, n);

    // The latent vector is carried as f = K a so that K^{-1} is never formed.
    VectorXd a = VectorXd::Zero(n);
    if (options.warm_start)
    {
        if (options.warm_start->size() != n)
            throw ContractError("laplace_fit: warm start has the wrong length");
        a = factorize_prior(prior, kernel.jitter).llt.solve(*options.warm_start);
    }
    VectorXd f = prior * a;
    auto objective = [&](const VectorXd& av, const VectorXd& fv) {
        return -0.5 * av.dot(fv) + total_loglik(fv, observations, model);
    };
    double psi = objective(a, f);

    LoglikDerivatives d = loglik_grad_hess(f, observations, model);
    double grad_norm = (d.gradient - a).lpNorm<Eigen::Infinity>();
    int iter = 0;
    while (grad_norm > options.gradient_tolerance)
    {
        if (iter >= options.max_iterations)
            throw NumericalError("laplace_fit did not converge in " + std::to_string(options.max_iterations) +
                                     " iterations (gradient norm " + std::to_string(grad_norm) + ")",
                                 grad_norm);
        ++iter;
        const VectorXd b = d.neg_hessian * f + d.gradient;
        const MatrixXd system = identity + d.neg_hessian * prior;
        const VectorXd a_newton = system.partialPivLu().solve(b);
        const VectorXd step = a_newton - a;

        bool accepted = false;
        double t = 1.0;
        for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5)
        {
            const VectorXd a_try = a + t * step;
            const VectorXd f_try = prior * a_try;
            const double psi_try = objective(a_try, f_try);
            if (std::isfinite(psi_try) && psi_try >= psi)
            {
                a = a_try;
                f = f_try;
                psi = psi_try;
                accepted = true;
                break;
            }
        }
        d = loglik_grad_hess(f, observations, model);
        grad_norm = (d.gradient - a).lpNorm<Eigen::Infinity>();
        if (!accepted)
        {
            if (grad_norm <= options.gradient_tolerance)
                break;
            throw NumericalError("laplace_fit line search failed (gradient norm " + std::to_string(grad_norm) + ")",
                                 grad_norm);
        }
    }

    post.f_map = f;
    post.alpha = a;
    post.neg_hessian = d.neg_hessian;
    post.log_posterior = psi;
    post.gradient_norm = grad_norm;
    post.iterations = iter;

    const Eigen::PartialPivLU<MatrixXd> lu_wk(identity + d.neg_hessian * prior);
    post.var_reduction = lu_wk.solve(d.neg_hessian);
    post.var_reduction = 0.5 * (post.var_reduction + post.var_reduction.transpose()).eval();
    const Eigen::PartialPivLU<MatrixXd> lu_kw(identity + prior * d.neg_hessian);
    post.posterior_cov = lu_kw.solve(prior);
    post.posterior_cov = 0.5 * (post.posterior_cov + post.posterior_cov.transpose()).eval();
    return post;
}
} // namespace multibo
