#include "multibo/warp.hpp"

#include "multibo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace multibo
{
BoxBounds theta_bounds()
{
    VectorXd hi(k_warp_dim);
    hi << k_max_translation, k_max_translation, k_max_log_scale, k_max_log_scale, k_max_angle, k_max_angle;
    hi.tail(k_warp_dim - k_affine_dim).setConstant(k_max_tps_offset);
    return BoxBounds(-hi, hi);
}

WarpParams::WarpParams(const Eigen::VectorXd& theta)
{
    if (theta.size() != k_warp_dim)
        throw ContractError("warp parameters need " + std::to_string(k_warp_dim) + " entries, got " +
                            std::to_string(theta.size()));
    const BoxBounds box = theta_bounds();
    for (Eigen::Index d = 0; d < k_warp_dim; ++d)
    {
        if (!std::isfinite(theta(d)) || theta(d) < box.lower(d) || theta(d) > box.upper(d))
            throw ContractError("warp parameter " + std::to_string(d) + " = " + std::to_string(theta(d)) +
                                " is outside [" + std::to_string(box.lower(d)) + ", " +
                                std::to_string(box.upper(d)) + "]");
        values_[static_cast<std::size_t>(d)] = theta(d);
    }
}

Eigen::VectorXd WarpParams::to_vector() const { return Eigen::Map<const Eigen::VectorXd>(values_.data(), k_warp_dim); }

bool WarpParams::is_identity() const
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

Eigen::Matrix2d WarpParams::affine_matrix() const
{
    Eigen::Matrix2d r, sh, sc;
    r << std::cos(rot()), -std::sin(rot()), std::sin(rot()), std::cos(rot());
    sh << 1.0, std::tan(shear()), 0.0, 1.0;
    sc << std::exp(sx()), 0.0, 0.0, std::exp(sy());
    return r * sh * sc;
}

Field2D::Field2D(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values))
{
    if (width < 2 || height < 2)
        throw ContractError("fields must be at least 2 x 2");
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw ContractError("field value count does not match width x height");
    for (double v : values_)
        if (!std::isfinite(v))
            throw ContractError("field values must be finite");
}

Field2D::Field2D(int width, int height, double fill)
    : Field2D(width, height,
              std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill))
{
}

double Field2D::sample(double col, double row) const
{
    col = std::clamp(col, 0.0, static_cast<double>(width_ - 1));
    row = std::clamp(row, 0.0, static_cast<double>(height_ - 1));
    const int c0 = static_cast<int>(std::floor(col));
    const int r0 = static_cast<int>(std::floor(row));
    const int c1 = std::min(c0 + 1, width_ - 1);
    const int r1 = std::min(r0 + 1, height_ - 1);
    const double fx = col - c0;
    const double fy = row - r0;
    const double v00 = at(c0, r0), v10 = at(c1, r0), v01 = at(c0, r1), v11 = at(c1, r1);
    const double v = (1.0 - fx) * (1.0 - fy) * v00 + fx * (1.0 - fy) * v10 + (1.0 - fx) * fy * v01 + fx * fy * v11;
    const double lo = std::min({v00, v10, v01, v11});
    const double hi = std::max({v00, v10, v01, v11});
    return std::clamp(v, lo, hi);
}

double Field2D::min_value() const { return *std::min_element(values_.begin(), values_.end()); }
double Field2D::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

double Field2D::l2_norm() const
{
    double s = 0.0;
    for (double v : values_)
        s += v * v;
    return std::sqrt(s);
}

double tps_radial(double r)
{
    if (r == 0.0)
        return 0.0;
    const double r2 = r * r;
    return r2 * std::log(r2);
}

std::array<Eigen::Vector2d, k_tps_points> ThinPlateSpline::lattice()
{
    std::array<Eigen::Vector2d, k_tps_points> pts;
    for (std::size_t i = 0; i < k_tps_points; ++i)
        pts[i] = Eigen::Vector2d(0.5 * static_cast<double>(i % 3), 0.5 * static_cast<double>(i / 3));
    return pts;
}

ThinPlateSpline::ThinPlateSpline(std::span<const double, 18> offsets)
{
    coef_.setZero();
    zero_ = std::all_of(offsets.begin(), offsets.end(), [](double v) { return v == 0.0; });
    if (zero_)
        return;
    const auto pts = lattice();
    Eigen::Matrix<double, 12, 12> system = Eigen::Matrix<double, 12, 12>::Zero();
    Eigen::Matrix<double, 12, 2> rhs = Eigen::Matrix<double, 12, 2>::Zero();
    for (std::size_t i = 0; i < k_tps_points; ++i)
    {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < k_tps_points; ++j)
            system(ii, static_cast<Eigen::Index>(j)) = tps_radial((pts[i] - pts[j]).norm());
        system(ii, 9) = system(9, ii) = 1.0;
        system(ii, 10) = system(10, ii) = pts[i].x();
        system(ii, 11) = system(11, ii) = pts[i].y();
        rhs(ii, 0) = offsets[2 * i];
        rhs(ii, 1) = offsets[2 * i + 1];
    }
    coef_ = system.fullPivLu().solve(rhs);
}

Eigen::Vector2d ThinPlateSpline::displacement(double u, double v) const
{
    if (zero_)
        return Eigen::Vector2d::Zero();
    static const auto pts = lattice();
    Eigen::Vector2d d = coef_.row(9).transpose() + u * coef_.row(10).transpose() + v * coef_.row(11).transpose();
    const Eigen::Vector2d x(u, v);
    for (std::size_t i = 0; i < k_tps_points; ++i)
        d += tps_radial((x - pts[i]).norm()) * coef_.row(static_cast<Eigen::Index>(i)).transpose();
    return d;
}

Field2D affine_apply(const WarpParams& params, const Field2D& field)
{
    bool affine_identity = true;
    for (double v : {params.tx(), params.ty(), params.sx(), params.sy(), params.rot(), params.shear()})
        affine_identity = affine_identity && v == 0.0;
    if (affine_identity)
        return field;

    const int w = field.width();
    const int h = field.height();
    const Eigen::Matrix2d inv = params.affine_matrix().inverse();
    const Eigen::Vector2d center(0.5 * (w - 1), 0.5 * (h - 1));
    const Eigen::Vector2d tau(params.tx() * w, params.ty() * h);
    Field2D out(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
        {
            const Eigen::Vector2d q = Eigen::Vector2d(c, r) - center - tau;
            const Eigen::Vector2d src = inv * q + center;
            out.at(c, r) = field.sample(src.x(), src.y());
        }
    return out;
}

Field2D tps_apply(std::span<const double, 18> offsets, const Field2D& field)
{
    const ThinPlateSpline spline(offsets);
    if (spline.is_zero())
        return field;
    const int w = field.width();
    const int h = field.height();
    const double sw = w - 1;
    const double sh = h - 1;
    Field2D out(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
        {
            const Eigen::Vector2d d = spline.displacement(c / sw, r / sh);
            out.at(c, r) = field.sample(c - d.x() * sw, r - d.y() * sh);
        }
    return out;
}

Field2D warp_compose(const WarpParams& theta, const Field2D& field)
{
    return tps_apply(theta.tps_offsets(), affine_apply(theta, field));
}

Field2D make_test_pattern(int width, int height)
{
    Field2D out(width, height);
    struct Blob
    {
        double u, v, su, sv, amp;
    };
    const Blob blobs[] = {
        {0.30, 0.35, 0.20, 0.12, 1.0},
        {0.68, 0.30, 0.10, 0.24, 0.7},
        {0.55, 0.72, 0.28, 0.16, 0.85},
        {0.20, 0.78, 0.08, 0.08, 0.5},
    };
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
        {
            const double u = static_cast<double>(c) / (width - 1);
            const double v = static_cast<double>(r) / (height - 1);
            double val = 0.15 * u + 0.05 * v;
            for (const auto& b : blobs)
            {
                const double du = (u - b.u) / b.su;
                const double dv = (v - b.v) / b.sv;
                val += b.amp * std::exp(-0.5 * (du * du + dv * dv));
            }
            out.at(c, r) = val;
        }
    return out;
}

std::string encode_pgm(const Field2D& field, std::optional<std::pair<double, double>> range)
{
    const auto [lo, hi] = range.value_or(std::make_pair(field.min_value(), field.max_value()));
    std::ostringstream os;
    os << "P5\n" << field.width() << ' ' << field.height() << "\n255\n";
    std::string bytes = os.str();
    bytes.reserve(bytes.size() + field.values().size());
    const double span = hi - lo;
    for (double v : field.values())
    {
        double scaled = span > 0.0 ? 255.0 * (v - lo) / span : 0.0;
        scaled = std::clamp(std::round(scaled), 0.0, 255.0);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(scaled)));
    }
    return bytes;
}

Field2D decode_pgm(const std::string& bytes)
{
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size())
        {
            if (bytes[pos] == '#')
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            else if (std::isspace(static_cast<unsigned char>(bytes[pos])))
                ++pos;
            else
                break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P5")
        throw ContractError("not a binary PGM (missing P5 magic)");
    int w = 0, h = 0, maxval = 0;
    try
    {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    }
    catch (const std::exception&)
    {
        throw ContractError("malformed PGM header");
    }
    if (maxval <= 0 || maxval > 255)
        throw ContractError("only 8-bit PGM is supported");
    ++pos; // single whitespace after maxval
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (w < 2 || h < 2 || bytes.size() < pos + n)
        throw ContractError("PGM pixel data is truncated");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i)
        values[i] = static_cast<unsigned char>(bytes[pos + i]) / static_cast<double>(maxval);
    return Field2D(w, h, std::move(values));
}
} // namespace multibo
