#include "multibo/acquisition.hpp"
#include "multibo/errors.hpp"
#include "multibo/random.hpp"
#include "oracle_support.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace multibo;

namespace
{
// Closed-form EI written independently of the library.
double ei_oracle(double mu, double sd, double f_star)
{
    if (sd <= 1e-12)
        return std::max(0.0, mu - f_star);
    const double z = (mu - f_star) / sd;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return sd * (z * cdf + pdf);
}

GpPredictor bump_predictor()
{
    // Noiseless GP through samples of a bump centred at 0.37.
    const int n = 11;
    MatrixXd x(n, 1);
    VectorXd y(n);
    for (int i = 0; i < n; ++i)
    {
        x(i, 0) = i / 10.0;
        y(i) = std::exp(-std::pow(x(i, 0) - 0.37, 2) / 0.02);
    }
    GpPrior prior{KernelConfig{KernelFamily::squared_exponential, {0.1}, 1.0, 1e-8}};
    return GpPredictor::from_latent(prior, x, y, MatrixXd::Zero(n, n));
}

DbsConfig small_cfg(std::size_t k)
{
    DbsConfig cfg;
    cfg.k = k;
    cfg.ei_raw_samples = 512;
    cfg.ei_restarts = 8;
    return cfg;
}
} // namespace

TEST_CASE("EI closed-form spot values")
{
    CHECK(expected_improvement(-1.0, 0.0, 0.0) == 0.0);
    CHECK(std::abs(expected_improvement(0.0, 1.0, 0.0) - 0.398942280401433) <= 1e-9);
    CHECK(expected_improvement(1.0, 1e-14, 0.0) == doctest::Approx(1.0));
    CHECK(expected_improvement(1.0, 1e-6, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    Rng rng(1);
    for (int i = 0; i < 1000; ++i)
    {
        const double mu = uniform(rng, -3, 3), sd = uniform(rng, 0.01, 2);
        CHECK(expected_improvement(mu, sd, 0.0) == doctest::Approx(ei_oracle(mu, sd, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("EI is non-negative on random queries")
{
    Rng rng(2);
    MatrixXd x(6, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = uniform01(rng);
    VectorXd y(6);
    for (Eigen::Index i = 0; i < 6; ++i)
        y(i) = standard_normal(rng);
    const GpPredictor p =
        GpPredictor::from_latent(GpPrior{KernelConfig{KernelFamily::matern52, {0.4}, 1.0, 1e-6}}, x, y,
                                 0.01 * MatrixXd::Identity(6, 6));
    const double f_star = y.maxCoeff();
    for (int i = 0; i < 10000; ++i)
    {
        VectorXd q(3);
        for (Eigen::Index d = 0; d < 3; ++d)
            q(d) = uniform(rng, -0.5, 1.5);
        CHECK(expected_improvement(p, q, f_star + uniform(rng, -2, 2)) >= 0.0);
    }
}

TEST_CASE("maximize_ei avoids a noiseless incumbent")
{
    MatrixXd x(1, 1);
    x << 0.4;
    VectorXd y(1);
    y << 0.5;
    const GpPredictor p = GpPredictor::from_latent(GpPrior{KernelConfig{KernelFamily::matern52, {0.2}, 1.0, 1e-10}},
                                                   x, y, MatrixXd::Zero(1, 1));
    Rng rng(3);
    const VectorXd at = x.row(0).transpose();
    CHECK(expected_improvement(p, at, p.mean(at)) <= 1e-5);
    const auto m = maximize_ei(p, p.mean(at), BoxBounds::unit(1), small_cfg(4), rng);
    CHECK(std::abs(m.x(0) - 0.4) > 1e-3);
    CHECK(m.value > 0.0);
}

TEST_CASE("maximize_ei finds the dense-grid argmax of a bump")
{
    const GpPredictor p = bump_predictor();
    const double f_star = 0.9;
    double best = -1.0, arg = 0.0;
    for (int i = 0; i <= 10000; ++i)
    {
        VectorXd q(1);
        q << i * 1e-4;
        const double v = ei_oracle(p.mean(q), std::sqrt(std::max(0.0, p.variance(q))), f_star);
        if (v > best)
        {
            best = v;
            arg = q(0);
        }
    }
    Rng rng(4);
    const auto m = maximize_ei(p, f_star, BoxBounds::unit(1), small_cfg(4), rng);
    CHECK(std::abs(m.x(0) - arg) <= 1e-2);
    CHECK(m.value >= best - 1e-9);
}

TEST_CASE("maximize_ei is deterministic for a fixed seed")
{
    const GpPredictor p = bump_predictor();
    Rng a(99), b(99);
    const auto ma = maximize_ei(p, 0.9, BoxBounds::unit(1), small_cfg(4), a);
    const auto mb = maximize_ei(p, 0.9, BoxBounds::unit(1), small_cfg(4), b);
    CHECK(ma.x == mb.x);
    CHECK(ma.value == mb.value);
}

TEST_CASE("joint EI against a reference point")
{
    const GpPredictor p = bump_predictor();
    VectorXd ref(1);
    ref << 0.4;
    Rng rng(5);
    const auto m = maximize_ei(p, p.mean(ref), BoxBounds::unit(1), small_cfg(4), rng, &ref);
    CHECK(m.value >= 0.0);
    CHECK(BoxBounds::unit(1).contains(m.x));
    VectorXd wrong(2);
    wrong << 0.1, 0.2;
    CHECK_THROWS_AS(maximize_ei(p, 0.0, BoxBounds::unit(1), small_cfg(4), rng, &wrong), ContractError);
}

TEST_CASE("gradient covariance of a linear mean is w w^T")
{
    VectorXd w(3);
    w << 1.0, -2.0, 0.5;
    DbsConfig cfg;
    for (std::size_t h : {std::size_t{1}, std::size_t{7}, std::size_t{32}})
    {
        cfg.n_gradient_samples = h;
        Rng rng(6);
        const MatrixXd c = gradient_covariance([&](const VectorXd&) { return w; }, VectorXd::Constant(3, 0.5),
                                               BoxBounds::unit(3), cfg, rng);
        CHECK((c - w * w.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const auto basis = active_subspace(c, 2.0);
        CHECK(basis.selected_dim == 1);
        CHECK(std::abs(std::abs(basis.eigenvectors.col(0).dot(w.normalized())) - 1.0) <= 1e-12);
    }
}

TEST_CASE("single-sample gradient covariance is one outer product")
{
    DbsConfig cfg;
    cfg.n_gradient_samples = 1;
    std::vector<VectorXd> seen;
    auto grad = [&](const VectorXd& x) {
        seen.push_back(x);
        VectorXd g(2);
        g << std::sin(x(0)), x(1) * x(1);
        return g;
    };
    Rng rng(7);
    const MatrixXd c = gradient_covariance(grad, VectorXd::Constant(2, 0.5), BoxBounds::unit(2), cfg, rng);
    REQUIRE(seen.size() == 1);
    const VectorXd sample = seen.front();
    const VectorXd g = grad(sample);
    CHECK((c - g * g.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spectral gap rule")
{
    const std::vector<double> a{8, 4, 1, 0.5}, b{1, 1, 1}, c{10, 1e-15, 0, 0}, d{5, 4, 3}, one{3};
    CHECK(spectral_gap_dim(a, 2.0) == 1);
    CHECK(spectral_gap_dim(b, 2.0) == 1);
    CHECK(spectral_gap_dim(c, 2.0) == 1);
    CHECK(spectral_gap_dim(d, 2.0) == 2); // ratios 1.25, 1.33: fallback argmax
    CHECK(spectral_gap_dim(one, 2.0) == 1);
    const std::vector<double> e{4, 3, 1, 0.9};
    CHECK(spectral_gap_dim(e, 2.0) == 2);
}

TEST_CASE("planted subspace recovery in 10 dimensions")
{
    const Eigen::Index dim = 10;
    for (std::size_t d_star : {1u, 2u, 3u})
    {
        SUBCASE("additive synthetic mean")
        {
            // Bowl -sum (u_j . (x - c))^2 over random orthonormal u_j, centred on the incumbent.
            Rng rng(40 + d_star);
            MatrixXd g(dim, dim);
            for (Eigen::Index i = 0; i < g.size(); ++i)
                g.data()[i] = standard_normal(rng);
            const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
            const MatrixXd u = q.leftCols(static_cast<Eigen::Index>(d_star));
            const VectorXd scales = VectorXd::Ones(static_cast<Eigen::Index>(d_star));
            const VectorXd center = VectorXd::Constant(dim, 0.5);
            auto grad = [&](const VectorXd& x) {
                VectorXd out = VectorXd::Zero(dim);
                for (Eigen::Index j = 0; j < u.cols(); ++j)
                    out -= 2.0 * scales(j) * u.col(j).dot(x - center) * u.col(j);
                return out;
            };
            DbsConfig cfg;
            const MatrixXd c = gradient_covariance(grad, VectorXd::Constant(dim, 0.5), BoxBounds::unit(dim), cfg, rng);
            const auto basis = active_subspace(c, 2.0);
            CHECK(basis.selected_dim == d_star);
            for (Eigen::Index j = static_cast<Eigen::Index>(d_star); j < dim; ++j)
                CHECK(basis.eigenvalues(j) <= 1e-8 * basis.eigenvalues(0));
            // Recovered span equals the planted span.
            const MatrixXd v = basis.eigenvectors.leftCols(static_cast<Eigen::Index>(d_star));
            const Eigen::JacobiSVD<MatrixXd> svd(u.transpose() * v);
            CHECK(svd.singularValues().minCoeff() >= 1.0 - 1e-8);
        }
        SUBCASE("GP posterior mean varying in the leading coordinates")
        {
            // Inactive axes get a huge lengthscale, so the mean is flat along them.
            std::vector<double> ell(static_cast<std::size_t>(dim), 1e5);
            for (std::size_t j = 0; j < d_star; ++j)
                ell[j] = 0.5;
            Rng rng(50 + d_star);
            const Eigen::Index n = 60;
            MatrixXd x(n, dim);
            VectorXd y(n);
            for (Eigen::Index i = 0; i < n; ++i)
            {
                for (Eigen::Index j = 0; j < dim; ++j)
                    x(i, j) = uniform01(rng);
                y(i) = 0.0;
                for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d_star); ++j)
                    y(i) -= std::pow(x(i, j) - 0.5, 2);
            }
            const GpPredictor p = GpPredictor::from_latent(
                GpPrior{KernelConfig{KernelFamily::squared_exponential, ell, 1.0, 1e-4}}, x, y,
                MatrixXd::Zero(n, n));
            DbsConfig cfg;
            cfg.neighborhood_radius = 0.1;
            const MatrixXd c = gradient_covariance(p, VectorXd::Constant(dim, 0.5), BoxBounds::unit(dim), cfg, rng);
            const auto basis = active_subspace(c, 2.0);
            CHECK(basis.selected_dim == d_star);
            for (Eigen::Index j = static_cast<Eigen::Index>(d_star); j < dim; ++j)
                CHECK(basis.eigenvalues(j) <= 1e-8 * basis.eigenvalues(0));
        }
    }
}

TEST_CASE("DBS structure without perturbation")
{
    const GpPredictor p = []() {
        Rng rng(8);
        MatrixXd x(12, 4);
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x.data()[i] = uniform01(rng);
        VectorXd y(12);
        for (Eigen::Index i = 0; i < 12; ++i)
            y(i) = -(x.row(i).array() - 0.6).square().sum();
        return GpPredictor::from_latent(GpPrior{KernelConfig{KernelFamily::matern52, {0.4}, 1.0, 1e-6}}, x, y,
                                        MatrixXd::Zero(12, 12));
    }();
    const BoxBounds box(VectorXd::Constant(4, -1.0), VectorXd::Constant(4, 2.0));
    VectorXd x_best(4);
    x_best << 0.3, 0.2, 0.5, 0.4;
    DbsConfig cfg = small_cfg(4);
    cfg.perturb_scale = 0.0;
    cfg.gamma_bridge = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (auto strategy : {ProposalStrategy::dbs, ProposalStrategy::bridge_only})
    {
        cfg.strategy = strategy;
        Rng rng(9);
        const auto prop = dbs_propose(p, p.mean(x_best), x_best, box, cfg, rng);
        REQUIRE(prop.points.rows() == 4);
        CHECK(prop.points.row(0).transpose() == x_best);
        CHECK(prop.points.row(3).transpose() == box.project(prop.x_ei));
        CHECK((prop.points.row(1).transpose() - (x_best + (prop.x_ei - x_best) / 3.0)).cwiseAbs().maxCoeff() <= 1e-12);
        MatrixXd offsets(4, 4);
        for (Eigen::Index i = 0; i < 4; ++i)
            offsets.row(i) = prop.points.row(i) - x_best.transpose();
        const Eigen::JacobiSVD<MatrixXd> svd(offsets);
        CHECK(svd.singularValues()(1) <= 1e-9);
    }
}

TEST_CASE("every strategy stays in bounds and is deterministic")
{
    Rng data(10);
    MatrixXd x(10, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = uniform01(data);
    VectorXd y(10);
    for (Eigen::Index i = 0; i < 10; ++i)
        y(i) = standard_normal(data);
    const GpPredictor p = GpPredictor::from_latent(GpPrior{KernelConfig{KernelFamily::matern52, {0.3}, 1.0, 1e-6}},
                                                   x, y, 0.01 * MatrixXd::Identity(10, 10));
    const BoxBounds box = BoxBounds::unit(3);
    Eigen::Index best = 0;
    y.maxCoeff(&best);
    const VectorXd x_best = x.row(best).transpose();
    for (auto s : {ProposalStrategy::dbs, ProposalStrategy::bridge_only, ProposalStrategy::subspace_only,
                   ProposalStrategy::ei_top_k, ProposalStrategy::random})
    {
        DbsConfig cfg = small_cfg(6);
        cfg.strategy = s;
        cfg.perturb_scale = 0.5;
        Rng a(11), b(11);
        const auto pa = dbs_propose(p, y(best), x_best, box, cfg, a);
        const auto pb = dbs_propose(p, y(best), x_best, box, cfg, b);
        CHECK(pa.points == pb.points);
        for (Eigen::Index i = 0; i < pa.points.rows(); ++i)
        {
            CHECK(box.contains(pa.points.row(i).transpose()));
            for (Eigen::Index j = 0; j < i; ++j)
                CHECK((pa.points.row(i) - pa.points.row(j)).cwiseAbs().maxCoeff() > 0.0);
        }
        CHECK(proposal_strategy_from_string(to_string(s)) == s);
    }
}

TEST_CASE("DBS rejects an incumbent outside the box")
{
    const GpPredictor p = bump_predictor();
    VectorXd out(1);
    out << 1.5;
    Rng rng(12);
    CHECK_THROWS_AS(dbs_propose(p, 0.0, out, BoxBounds::unit(1), small_cfg(2), rng), ContractError);
}
