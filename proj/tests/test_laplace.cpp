#include "multibo/errors.hpp"
#include "multibo/preference.hpp"
#include "multibo/random.hpp"
#include "oracle_support.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>

using namespace multibo;

namespace
{
void check_certificate(const LatentPosterior& post)
{
    CHECK(post.map_certificate() <= 1e-6);
    // Independent check: K^{-1} f - grad loglik = 0 at the mode.
    const VectorXd g = loglik_grad_hess(post.f_map, post.observations, post.model).gradient;
    const VectorXd prior_term = post.prior_cov.ldlt().solve(post.f_map);
    CHECK((g - prior_term).cwiseAbs().maxCoeff() <= 1e-6);
}
} // namespace

TEST_CASE("no observations leave the prior mean")
{
    MatrixXd x(3, 1);
    x << 0.0, 0.5, 1.0;
    const auto post = laplace_fit(x, {}, KernelConfig{}, LikelihoodModel{});
    CHECK(post.f_map.cwiseAbs().maxCoeff() == 0.0);
    check_certificate(post);
}

TEST_CASE("two independent points and one pairwise comparison")
{
    MatrixXd x(2, 1);
    x << 0.0, 100.0;
    KernelConfig kernel{KernelFamily::squared_exponential, {1.0}, 1.0, 0.0};
    LikelihoodModel model{LikelihoodKind::pairwise_logit, 0.70710678118654752440};
    const auto post = laplace_fit(x, {{{0, 1}, {0}}}, kernel, model);
    // Reduced problem: maximize -c^2 + log sigmoid(2c), so c = 1 - sigmoid(2c). Bisection oracle.
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i)
    {
        const double mid = 0.5 * (lo + hi);
        const double r = mid - (1.0 - 1.0 / (1.0 + std::exp(-2.0 * mid)));
        (r > 0.0 ? hi : lo) = mid;
    }
    const double c = 0.5 * (lo + hi);
    CHECK(c > 0.0);
    CHECK(post.f_map(0) == doctest::Approx(c).epsilon(1e-7));
    CHECK(post.f_map(1) == doctest::Approx(-c).epsilon(1e-7));
    check_certificate(post);
}

TEST_CASE("three-point multinomial fit against a dense grid")
{
    const auto t0 = std::chrono::steady_clock::now();
    MatrixXd x(3, 1);
    x << 0.0, 0.5, 1.0;
    KernelConfig kernel{KernelFamily::squared_exponential, {0.5}, 1.0, 1e-6};
    LikelihoodModel model{LikelihoodKind::multinomial_logit};
    const std::vector<PreferenceObservation> obs{{{0, 1, 2}, {1}}};
    const auto post = laplace_fit(x, obs, kernel, model);
    check_certificate(post);
    CHECK(post.f_map(1) > post.f_map(0));
    CHECK(post.f_map(1) > post.f_map(2));

    // Unnormalized log posterior written out by hand.
    const MatrixXd kinv = kernel_matrix(x, kernel).inverse();
    auto logpost = [&](double a, double b, double c) {
        Eigen::Vector3d f(a, b, c);
        const double m = std::max({a, b, c});
        const double lse = m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
        return -0.5 * f.dot(kinv * f) + b - lse;
    };
    double best = -1e300;
    Eigen::Vector3d arg;
    const int n = 121;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
            {
                const double a = -3.0 + 0.05 * i, b = -3.0 + 0.05 * j, c = -3.0 + 0.05 * k;
                const double v = logpost(a, b, c);
                if (v > best)
                {
                    best = v;
                    arg = Eigen::Vector3d(a, b, c);
                }
            }
    CHECK((post.f_map - arg).cwiseAbs().maxCoeff() <= 0.05);
    CHECK(log_posterior_value(post.f_map, post.prior_cov, obs, model) >= best - 1e-12);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 30.0);
}

TEST_CASE("fits satisfy the MAP certificate across models")
{
    Rng rng(8);
    for (auto kind : {LikelihoodKind::pairwise_probit, LikelihoodKind::pairwise_logit, LikelihoodKind::multinomial_logit,
                      LikelihoodKind::subset_logit})
    {
        const bool pairwise = kind == LikelihoodKind::pairwise_probit || kind == LikelihoodKind::pairwise_logit;
        for (int trial = 0; trial < 10; ++trial)
        {
            const Eigen::Index n = 12;
            MatrixXd x(n, 2);
            for (Eigen::Index i = 0; i < x.size(); ++i)
                x.data()[i] = uniform01(rng);
            std::vector<PreferenceObservation> obs;
            for (Eigen::Index r = 0; r + (pairwise ? 2 : 4) <= n; r += pairwise ? 2 : 4)
            {
                PreferenceObservation o;
                const std::size_t k = pairwise ? 2 : 4;
                for (std::size_t j = 0; j < k; ++j)
                    o.choice_set.push_back(static_cast<std::size_t>(r) + j);
                o.winners = {rng() % k};
                if (kind == LikelihoodKind::subset_logit && trial % 2 == 0)
                    o.winners = {0, 2};
                obs.push_back(o);
            }
            KernelConfig kernel{KernelFamily::matern52, {0.3}, 4.0, 4e-6};
            const auto post = laplace_fit(x, obs, kernel, LikelihoodModel{kind, 0.70710678118654752440});
            check_certificate(post);
            // posterior_cov is the inverse of K^{-1} + W.
            const MatrixXd prec = post.prior_cov.inverse() + post.neg_hessian;
            CHECK((prec * post.posterior_cov - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
}

TEST_CASE("Newton ascent is monotone from a warm start")
{
    MatrixXd x(4, 1);
    x << 0.0, 0.3, 0.6, 0.9;
    KernelConfig kernel{KernelFamily::matern52, {0.4}, 4.0, 1e-6};
    LikelihoodModel model{LikelihoodKind::multinomial_logit};
    const std::vector<PreferenceObservation> obs{{{0, 1, 2, 3}, {3}}, {{0, 1, 2, 3}, {2}}};
    LaplaceOptions opts;
    opts.warm_start = VectorXd::Constant(4, 5.0);
    const auto warm = laplace_fit(x, obs, kernel, model, opts);
    const auto cold = laplace_fit(x, obs, kernel, model);
    check_certificate(warm);
    CHECK((warm.f_map - cold.f_map).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("non-convergence reports the gradient norm")
{
    MatrixXd x(2, 1);
    x << 0.0, 1.0;
    LaplaceOptions opts;
    opts.max_iterations = 0;
    try
    {
        laplace_fit(x, {{{0, 1}, {0}}}, KernelConfig{}, LikelihoodModel{LikelihoodKind::pairwise_logit}, opts);
        FAIL("expected NumericalError");
    }
    catch (const NumericalError& e)
    {
        CHECK(e.diagnostic() > 1e-6);
    }
}
