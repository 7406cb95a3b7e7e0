#pragma once

#include <array>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "pdnet/tensor.hpp"

namespace pdnet {

/// 4x4 homogeneous affine map of voxel coordinates (x, y, z, 1), where
/// x runs along W, y along H and z along D. The last row is fixed to
/// (0, 0, 0, 1) and the linear block must be invertible.
class AffineMatrix {
public:
    AffineMatrix();  // identity

    /// Rows 0..2 of the matrix, 12 free entries a00..a23 in row-major order.
    static AffineMatrix from_rows(const std::array<double, 12>& a);
    static AffineMatrix from_matrix(const Eigen::Matrix4d& m);

    const Eigen::Matrix4d& matrix() const { return m_; }
    std::array<double, 12> rows() const;

    double linear_determinant() const;
    AffineMatrix inverse() const;
    Eigen::Vector3d apply(const Eigen::Vector3d& p) const;

    /// this * other (other applied first).
    AffineMatrix operator*(const AffineMatrix& other) const;

private:
    explicit AffineMatrix(const Eigen::Matrix4d& m) : m_(m) {}
    Eigen::Matrix4d m_;
};

/// T * R * S: uniform scale, then rotations about x, y, z (degrees, applied
/// in that order), then translation (voxels).
AffineMatrix make_similarity(double scale, const std::array<double, 3>& rotation_deg,
                             const std::array<double, 3>& translation);

/// The same similarity, but rotating and scaling about `center` instead of
/// the origin.
AffineMatrix make_similarity_about(const std::array<double, 3>& center, double scale,
                                   const std::array<double, 3>& rotation_deg,
                                   const std::array<double, 3>& translation);

/// Geometric center ((W-1)/2, (H-1)/2, (D-1)/2) of a (D, H, W) volume.
std::array<double, 3> volume_center(const Shape& shape);

/// Output voxel c' takes the trilinear sample of `v` at A^-1 c'. Neighbours
/// outside the input contribute zero. Throws DataError for singular A.
Tensor affine_resample(const Tensor& v, const AffineMatrix& a, const Shape& out_shape);

/// Scale-only resample onto `target` (D, H, W) with voxel centers aligned;
/// identity when the shapes already agree.
Tensor resample_to_shape(const Tensor& v, const Shape& target);

/// The affine map used by resample_to_shape (input voxel -> output voxel).
AffineMatrix scaling_between(const Shape& from, const Shape& to);

// ---------------------------------------------------------------------------

inline constexpr double kTopFraction = 0.03;

/// Divide by the mean of the ceil(top_fraction * count) largest voxels.
Tensor normalize_max(const Tensor& v, double top_fraction = kTopFraction);

/// Divide by the whole-volume mean.
Tensor normalize_integral(const Tensor& v);

/// Mean of the ceil(fraction * count) largest values.
double top_fraction_mean(const Tensor& v, double fraction = kTopFraction);

enum class IntensityNorm { none, integral, max };

/// "<no|int|max>_<u|w>"; `w` means a spatial (registration) transform is applied.
struct PipelineTag {
    IntensityNorm intensity = IntensityNorm::none;
    bool spatial = false;

    static PipelineTag parse(const std::string& text);  // throws UsageError
    std::string str() const;

    friend bool operator==(const PipelineTag&, const PipelineTag&) = default;
};

/// Spatial step first (resample with `registration` onto the same grid),
/// then the intensity step. A `w` tag without a registration throws.
Tensor apply_pipeline(const Tensor& v, const PipelineTag& tag,
                      const std::optional<AffineMatrix>& registration = std::nullopt);

}  // namespace pdnet
