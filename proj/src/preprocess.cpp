#include "pdnet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace pdnet {

AffineMatrix::AffineMatrix() : m_(Eigen::Matrix4d::Identity()) {}

AffineMatrix AffineMatrix::from_rows(const std::array<double, 12>& a) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = a[r * 4 + c];
    return from_matrix(m);
}

AffineMatrix AffineMatrix::from_matrix(const Eigen::Matrix4d& m) {
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
        throw UsageError("affine matrix last row must be (0,0,0,1)");
    if (!m.allFinite()) throw UsageError("affine matrix has non-finite entries");
    return AffineMatrix(m);
}

std::array<double, 12> AffineMatrix::rows() const {
    std::array<double, 12> a{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) a[r * 4 + c] = m_(r, c);
    return a;
}

double AffineMatrix::linear_determinant() const { return m_.topLeftCorner<3, 3>().determinant(); }

AffineMatrix AffineMatrix::inverse() const {
    const double det = linear_determinant();
    if (!(std::abs(det) > 1e-12)) throw DataError("affine matrix is singular");
    Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d lin = m_.topLeftCorner<3, 3>().inverse();
    inv.topLeftCorner<3, 3>() = lin;
    inv.topRightCorner<3, 1>() = -lin * m_.topRightCorner<3, 1>();
    return AffineMatrix(inv);
}

Eigen::Vector3d AffineMatrix::apply(const Eigen::Vector3d& p) const {
    return m_.topLeftCorner<3, 3>() * p + m_.topRightCorner<3, 1>();
}

AffineMatrix AffineMatrix::operator*(const AffineMatrix& other) const {
    Eigen::Matrix4d m = m_ * other.m_;
    m.row(3) << 0.0, 0.0, 0.0, 1.0;
    return AffineMatrix(m);
}

AffineMatrix make_similarity(double scale, const std::array<double, 3>& rotation_deg,
                             const std::array<double, 3>& translation) {
    if (!(scale > 0.0)) throw UsageError("similarity scale must be positive");
    const double k = std::numbers::pi / 180.0;
    const Eigen::Matrix3d rot = (Eigen::AngleAxisd(rotation_deg[2] * k, Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(rotation_deg[1] * k, Eigen::Vector3d::UnitY()) *
                                 Eigen::AngleAxisd(rotation_deg[0] * k, Eigen::Vector3d::UnitX()))
                                    .toRotationMatrix();
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rot * scale;
    m.topRightCorner<3, 1>() = Eigen::Vector3d(translation[0], translation[1], translation[2]);
    return AffineMatrix::from_matrix(m);
}

AffineMatrix make_similarity_about(const std::array<double, 3>& center, double scale,
                                   const std::array<double, 3>& rotation_deg,
                                   const std::array<double, 3>& translation) {
    const AffineMatrix to_origin = make_similarity(1.0, {0, 0, 0}, {-center[0], -center[1], -center[2]});
    const AffineMatrix back = make_similarity(1.0, {0, 0, 0}, {center[0] + translation[0], center[1] + translation[1],
                                                              center[2] + translation[2]});
    return back * make_similarity(scale, rotation_deg, {0, 0, 0}) * to_origin;
}

std::array<double, 3> volume_center(const Shape& shape) {
    if (shape.rank() != 3) throw UsageError("volume must be rank 3 (D,H,W), got " + shape.str());
    return {(shape[2] - 1) / 2.0, (shape[1] - 1) / 2.0, (shape[0] - 1) / 2.0};
}

Tensor affine_resample(const Tensor& v, const AffineMatrix& a, const Shape& out_shape) {
    const Shape& is = v.shape();
    if (is.rank() != 3 || out_shape.rank() != 3) throw UsageError("affine_resample works on (D,H,W) volumes");
    const AffineMatrix inv = a.inverse();
    const long D = static_cast<long>(is[0]), H = static_cast<long>(is[1]), W = static_cast<long>(is[2]);
    const float* in = v.raw();

    auto at = [&](long z, long y, long x) -> double {
        if (z < 0 || y < 0 || x < 0 || z >= D || y >= H || x >= W) return 0.0;
        return in[(z * H + y) * W + x];
    };

    Tensor out(out_shape, 0.0f);
    std::size_t o = 0;
    for (std::size_t z = 0; z < out_shape[0]; ++z)
        for (std::size_t y = 0; y < out_shape[1]; ++y)
            for (std::size_t x = 0; x < out_shape[2]; ++x, ++o) {
                const Eigen::Vector3d p = inv.apply(Eigen::Vector3d(double(x), double(y), double(z)));
                const double fx0 = std::floor(p.x()), fy0 = std::floor(p.y()), fz0 = std::floor(p.z());
                if (fx0 < -1 || fy0 < -1 || fz0 < -1 || fx0 >= W || fy0 >= H || fz0 >= D) continue;
                const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0), z0 = static_cast<long>(fz0);
                const double tx = p.x() - fx0, ty = p.y() - fy0, tz = p.z() - fz0;
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    const double wz = dz ? tz : 1.0 - tz;
                    if (wz == 0.0) continue;
                    for (int dy = 0; dy < 2; ++dy) {
                        const double wy = dy ? ty : 1.0 - ty;
                        if (wy == 0.0) continue;
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wx = dx ? tx : 1.0 - tx;
                            if (wx == 0.0) continue;
                            acc += wz * wy * wx * at(z0 + dz, y0 + dy, x0 + dx);
                        }
                    }
                }
                out[o] = static_cast<float>(acc);
            }
    require_finite(out, "affine_resample");
    return out;
}

AffineMatrix scaling_between(const Shape& from, const Shape& to) {
    if (from.rank() != 3 || to.rank() != 3) throw UsageError("scaling_between works on (D,H,W) shapes");
    // Input voxel centers map to output voxel centers: x' = (x + 0.5) * to/from - 0.5.
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    for (int axis = 0; axis < 3; ++axis) {
        const double s = static_cast<double>(to[2 - axis]) / static_cast<double>(from[2 - axis]);
        m(axis, axis) = s;
        m(axis, 3) = 0.5 * s - 0.5;
    }
    return AffineMatrix::from_matrix(m);
}

Tensor resample_to_shape(const Tensor& v, const Shape& target) {
    if (v.shape() == target) return v;
    return affine_resample(v, scaling_between(v.shape(), target), target);
}

// ---------------------------------------------------------------------------

double top_fraction_mean(const Tensor& v, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("top fraction must lie in (0, 1]");
    if (v.size() == 0) throw UsageError("empty volume");
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9)));
    std::vector<float> values(v.data().begin(), v.data().end());
    std::nth_element(values.begin(), values.begin() + (k - 1), values.end(), std::greater<float>());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += values[i];
    return sum / static_cast<double>(k);
}

namespace {

Tensor divide(const Tensor& v, double divisor) {
    Tensor out = v;
    for (float& x : out.data()) x = static_cast<float>(x / divisor);
    require_finite(out, "intensity normalisation");
    return out;
}

}  // namespace

Tensor normalize_max(const Tensor& v, double top_fraction) {
    const double in = top_fraction_mean(v, top_fraction);
    if (in == 0.0 || !std::isfinite(in)) throw DataError("max normalisation: top-intensity mean is zero");
    return divide(v, in);
}

Tensor normalize_integral(const Tensor& v) {
    const double mean = tensor_reduce(v, Reduction::mean);
    if (mean == 0.0 || !std::isfinite(mean)) throw DataError("integral normalisation: volume mean is zero");
    return divide(v, mean);
}

PipelineTag PipelineTag::parse(const std::string& text) {
    const auto sep = text.find('_');
    if (sep == std::string::npos) throw UsageError("malformed pipeline tag '" + text + "' (expected e.g. int_u)");
    const std::string i = text.substr(0, sep), s = text.substr(sep + 1);
    PipelineTag tag;
    if (i == "no") tag.intensity = IntensityNorm::none;
    else if (i == "int") tag.intensity = IntensityNorm::integral;
    else if (i == "max") tag.intensity = IntensityNorm::max;
    else throw UsageError("malformed pipeline tag '" + text + "': intensity must be no, int or max");
    if (s == "u") tag.spatial = false;
    else if (s == "w") tag.spatial = true;
    else throw UsageError("malformed pipeline tag '" + text + "': spatial must be u or w");
    return tag;
}

std::string PipelineTag::str() const {
    const char* i = intensity == IntensityNorm::none ? "no" : intensity == IntensityNorm::integral ? "int" : "max";
    return std::string(i) + (spatial ? "_w" : "_u");
}

Tensor apply_pipeline(const Tensor& v, const PipelineTag& tag, const std::optional<AffineMatrix>& registration) {
    Tensor out = v;
    if (tag.spatial) {
        if (!registration) throw UsageError("pipeline '" + tag.str() + "' needs a registration transform");
        out = affine_resample(out, *registration, out.shape());
    }
    switch (tag.intensity) {
    case IntensityNorm::none: break;
    case IntensityNorm::integral: out = normalize_integral(out); break;
    case IntensityNorm::max: out = normalize_max(out); break;
    }
    return out;
}

}  // namespace pdnet
