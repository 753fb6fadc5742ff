#pragma once

// Affine + thin-plate-spline warping of 2-D scalar fields.
//
// The 24-dimensional parameter vector is laid out as
//   [0] tx   [1] ty      translation, fraction of field width / height
//   [2] sx   [3] sy      log scale factors
//   [4] rot  [5] shear   radians
//   [6 + 2i], [7 + 2i]   TPS offset (dx, dy) of lattice point i, fraction of field size
// The TPS lattice is the 3 x 3 grid {0, 0.5, 1}^2 over the unit square, row-major
// (i = 3 * row + col). The all-zero vector is the identity warp.

#include "multibo/acquisition.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace multibo
{
inline constexpr Eigen::Index k_warp_dim = 24;
inline constexpr Eigen::Index k_affine_dim = 6;
inline constexpr std::size_t k_tps_points = 9;

inline constexpr double k_max_translation = 0.75;
inline constexpr double k_max_log_scale = 1.38629436111989061883; // ln 4
inline constexpr double k_max_angle = 1.04719755119659774615;     // pi / 3
inline constexpr double k_max_tps_offset = 0.25;

/// The 24-dimensional warp parameter box.
BoxBounds theta_bounds();

class WarpParams
{
  public:
    /// Identity warp.
    WarpParams() = default;
    /// Throws ContractError when `theta` has the wrong size or leaves theta_bounds().
    explicit WarpParams(const Eigen::VectorXd& theta);

    static WarpParams identity() { return WarpParams(); }

    double tx() const { return values_[0]; }
    double ty() const { return values_[1]; }
    double sx() const { return values_[2]; }
    double sy() const { return values_[3]; }
    double rot() const { return values_[4]; }
    double shear() const { return values_[5]; }
    std::span<const double, 18> tps_offsets() const { return std::span<const double, 18>(values_.data() + 6, 18); }

    Eigen::VectorXd to_vector() const;
    bool is_identity() const;

    /// Linear part R(rot) Shear(shear) diag(e^sx, e^sy).
    Eigen::Matrix2d affine_matrix() const;

  private:
    std::array<double, k_warp_dim> values_{};
};

class Field2D
{
  public:
    Field2D() = default;
    /// Throws ContractError unless width, height >= 2 and all values are finite.
    Field2D(int width, int height, std::vector<double> values);
    Field2D(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<double>& values() const { return values_; }
    double at(int col, int row) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }
    double& at(int col, int row) { return values_[static_cast<std::size_t>(row) * width_ + col]; }

    /// Bilinear sample at fractional pixel coordinates, clamped to the edge.
    /// The result never leaves the range of the four neighbours.
    double sample(double col, double row) const;

    double min_value() const;
    double max_value() const;
    double l2_norm() const;

    bool operator==(const Field2D&) const = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// U(r) = r^2 ln(r^2), with U(0) = 0.
double tps_radial(double r);

/// Thin-plate spline displacement through the fixed 3 x 3 lattice.
class ThinPlateSpline
{
  public:
    /// offsets: 9 (dx, dy) pairs, lattice order.
    explicit ThinPlateSpline(std::span<const double, 18> offsets);

    static std::array<Eigen::Vector2d, k_tps_points> lattice();

    /// Displacement at (u, v) in unit-square coordinates.
    Eigen::Vector2d displacement(double u, double v) const;
    bool is_zero() const { return zero_; }

  private:
    Eigen::Matrix<double, 12, 2> coef_; // 9 radial weights then (a1, ax, ay), per component
    bool zero_ = true;
};

/// Inverse-mapped bilinear resampling through x' = A x + tau about the field center.
Field2D affine_apply(const WarpParams& params, const Field2D& field);

/// Backward mapping with the negated TPS displacement (small-displacement inverse).
Field2D tps_apply(std::span<const double, 18> offsets, const Field2D& field);

/// Affine first, then TPS.
Field2D warp_compose(const WarpParams& theta, const Field2D& field);

/// Deterministic asymmetric test pattern (blobs and a ramp) for warp-matching tasks.
Field2D make_test_pattern(int width, int height);

/// Binary PGM ("P5"), 8-bit. Values are mapped affinely so that range.first -> 0
/// and range.second -> 255 (defaults to the field's own min/max), then rounded
/// and clamped. A zero-width range maps everything to 0.
std::string encode_pgm(const Field2D& field, std::optional<std::pair<double, double>> range = std::nullopt);
/// Parses a binary PGM with maxval <= 255; values become byte / maxval.
Field2D decode_pgm(const std::string& bytes);
} // namespace multibo
