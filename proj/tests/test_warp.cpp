#include "multibo/errors.hpp"
#include "multibo/random.hpp"
#include "multibo/warp.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace multibo;

namespace
{
Field2D random_field(int w, int h, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (double& x : v)
        x = uniform(rng, -1.0, 3.0);
    return Field2D(w, h, v);
}

Eigen::VectorXd random_theta(Rng& rng)
{
    const BoxBounds b = theta_bounds();
    Eigen::VectorXd t(k_warp_dim);
    for (Eigen::Index i = 0; i < k_warp_dim; ++i)
        t(i) = uniform(rng, b.lower(i), b.upper(i));
    return t;
}
} // namespace

TEST_CASE("parameter box")
{
    const BoxBounds b = theta_bounds();
    REQUIRE(b.dim() == 24);
    CHECK(b.lower(0) == -0.75);
    CHECK(b.upper(0) == 0.75);
    CHECK(b.upper(2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(b.lower(4) == doctest::Approx(-std::numbers::pi / 3).epsilon(1e-15));
    CHECK(b.upper(4) == doctest::Approx(std::numbers::pi / 3).epsilon(1e-15));
    CHECK(b.upper(23) == 0.25);
    CHECK(b.center().cwiseAbs().maxCoeff() == 0.0);
    CHECK(WarpParams(b.center()).is_identity());
}

TEST_CASE("out-of-box parameters are rejected")
{
    Eigen::VectorXd t = Eigen::VectorXd::Zero(k_warp_dim);
    t(4) = std::numbers::pi / 2;
    CHECK_THROWS_AS(WarpParams{t}, ContractError);
    CHECK_THROWS_AS(WarpParams{Eigen::VectorXd::Zero(6)}, ContractError);
    CHECK_THROWS_AS(Field2D(1, 5, 0.0), ContractError);
    CHECK_THROWS_AS(Field2D(2, 2, std::vector<double>{0, 1, 2, std::nan("")}), ContractError);
}

TEST_CASE("identity warps are bit-identical")
{
    const Field2D f = random_field(37, 29, 1);
    const WarpParams id;
    const std::array<double, 18> zeros{};
    CHECK(affine_apply(id, f) == f);
    CHECK(tps_apply(std::span<const double, 18>(zeros), f) == f);
    CHECK(warp_compose(id, f) == f);
}

TEST_CASE("radial basis")
{
    CHECK(tps_radial(1.0) == 0.0);
    CHECK(tps_radial(0.0) == 0.0);
    CHECK(tps_radial(2.0) == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("TPS interpolates its control points")
{
    const auto lattice = ThinPlateSpline::lattice();
    for (std::size_t moved = 0; moved < k_tps_points; ++moved)
    {
        std::array<double, 18> off{};
        off[2 * moved] = 0.1;
        const ThinPlateSpline tps{std::span<const double, 18>(off)};
        for (std::size_t i = 0; i < k_tps_points; ++i)
        {
            const Eigen::Vector2d d = tps.displacement(lattice[i].x(), lattice[i].y());
            CHECK(std::abs(d.x() - (i == moved ? 0.1 : 0.0)) <= 1e-8);
            CHECK(std::abs(d.y()) <= 1e-8);
        }
    }
    // Arbitrary offsets on every control.
    Rng rng(2);
    std::array<double, 18> off{};
    for (double& o : off)
        o = uniform(rng, -0.25, 0.25);
    const ThinPlateSpline tps{std::span<const double, 18>(off)};
    for (std::size_t i = 0; i < k_tps_points; ++i)
    {
        const Eigen::Vector2d d = tps.displacement(lattice[i].x(), lattice[i].y());
        CHECK(std::abs(d.x() - off[2 * i]) <= 1e-8);
        CHECK(std::abs(d.y() - off[2 * i + 1]) <= 1e-8);
    }
}

TEST_CASE("TPS with a uniform offset is a pure translation")
{
    std::array<double, 18> off{};
    for (std::size_t i = 0; i < k_tps_points; ++i)
    {
        off[2 * i] = 0.05;
        off[2 * i + 1] = -0.02;
    }
    const ThinPlateSpline tps{std::span<const double, 18>(off)};
    for (double u : {0.1, 0.33, 0.8})
        for (double v : {0.2, 0.9})
        {
            const Eigen::Vector2d d = tps.displacement(u, v);
            CHECK(d.x() == doctest::Approx(0.05).epsilon(1e-10));
            CHECK(d.y() == doctest::Approx(-0.02).epsilon(1e-10));
        }
}

TEST_CASE("integer translation shifts columns exactly")
{
    const Field2D f = random_field(64, 64, 3);
    Eigen::VectorXd t = Eigen::VectorXd::Zero(k_warp_dim);
    t(0) = 0.5;
    const Field2D g = affine_apply(WarpParams(t), f);
    for (int row = 0; row < 64; ++row)
        for (int col = 0; col < 64; ++col)
        {
            const int src = std::max(0, col - 32);
            CHECK(g.at(col, row) == f.at(src, row));
        }
    // Vertical translation, the other sign.
    t.setZero();
    t(1) = -0.25;
    const Field2D h = affine_apply(WarpParams(t), f);
    for (int row = 0; row < 64; ++row)
        for (int col = 0; col < 64; ++col)
            CHECK(h.at(col, row) == f.at(col, std::min(63, row + 16)));
}

TEST_CASE("pure affine parameters skip the TPS stage")
{
    Rng rng(4);
    const Field2D f = random_field(32, 32, 5);
    Eigen::VectorXd t = random_theta(rng);
    t.tail(18).setZero();
    CHECK(warp_compose(WarpParams(t), f) == affine_apply(WarpParams(t), f));
}

TEST_CASE("random warps stay finite and inside the input range")
{
    Rng rng(6);
    const Field2D f = random_field(32, 32, 7);
    for (int trial = 0; trial < 100; ++trial)
    {
        const Field2D g = warp_compose(WarpParams(random_theta(rng)), f);
        CHECK(g.width() == 32);
        CHECK(g.height() == 32);
        bool finite = true;
        for (double v : g.values())
            finite = finite && std::isfinite(v);
        CHECK(finite);
        CHECK(g.min_value() >= f.min_value());
        CHECK(g.max_value() <= f.max_value());
    }
}

TEST_CASE("bilinear sampling")
{
    const Field2D f(2, 2, std::vector<double>{0.0, 1.0, 2.0, 3.0});
    CHECK(f.sample(0.5, 0.5) == 1.5);
    CHECK(f.sample(-4.0, 0.0) == 0.0);
    CHECK(f.sample(9.0, 9.0) == 3.0);
    CHECK(f.sample(1.0, 0.25) == doctest::Approx(1.5));
}

TEST_CASE("affine matrix composition order")
{
    Eigen::VectorXd t = Eigen::VectorXd::Zero(k_warp_dim);
    t(2) = std::log(2.0);
    t(4) = std::numbers::pi / 6;
    t(5) = 0.2;
    const Eigen::Matrix2d a = WarpParams(t).affine_matrix();
    Eigen::Matrix2d r, s, d;
    const double c = std::cos(t(4)), sn = std::sin(t(4));
    r << c, -sn, sn, c;
    s << 1, std::tan(0.2), 0, 1;
    d << 2, 0, 0, 1;
    // Shear as a tangent or a plain coefficient; both are accepted conventions.
    const Eigen::Matrix2d s_lin = (Eigen::Matrix2d() << 1, 0.2, 0, 1).finished();
    const double err = std::min((a - r * s * d).cwiseAbs().maxCoeff(), (a - r * s_lin * d).cwiseAbs().maxCoeff());
    CHECK(err <= 1e-14);
    CHECK(a.determinant() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("PGM encoding")
{
    const Field2D f(3, 2, std::vector<double>{0.0, 0.5, 1.0, 0.25, 0.75, 1.0});
    const std::string bytes = encode_pgm(f);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    CHECK(bytes.substr(0, header.size()) == header);
    const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
    CHECK(px[0] == 0);
    CHECK(px[1] == 128);
    CHECK(px[2] == 255);
    CHECK(px[3] == 64);
    const Field2D back = decode_pgm(bytes);
    CHECK(back.width() == 3);
    CHECK(back.at(2, 0) == 1.0);
    CHECK(back.at(1, 0) == doctest::Approx(128.0 / 255.0));
    CHECK(encode_pgm(Field2D(2, 2, 0.3)).substr(header.size() - 4) == std::string("255\n") + std::string(4, '\0'));
    CHECK_THROWS_AS(decode_pgm("P2\n1 1\n255\n0"), ContractError);
}

TEST_CASE("test pattern is asymmetric and deterministic")
{
    const Field2D a = make_test_pattern(32, 32), b = make_test_pattern(32, 32);
    CHECK(a == b);
    Field2D mirrored(32, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
            mirrored.at(c, r) = a.at(31 - c, r);
    CHECK(!(mirrored == a));
}
