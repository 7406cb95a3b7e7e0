#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdnet/io.hpp"
#include "pdnet/preprocess.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

/// Axis-aligned ellipsoid in voxel coordinates (x, y, z).
struct Ellipsoid {
    std::array<double, 3> center{};
    std::array<double, 3> semi_axes{};

    bool contains(double x, double y, double z) const;
};

/// Synthetic DaTSCAN-like cohort: a uniform background with two striatal
/// ellipsoids at `ratio * background`. Nuisance factors are pose jitter,
/// a per-subject global intensity scale and additive noise.
struct PhantomParams {
    std::array<std::size_t, 3> shape{24, 28, 24};  // (D, H, W)
    double background = 1.0;
    std::array<Ellipsoid, 2> striata{};

    double control_ratio_mean = 3.0;
    double control_ratio_spread = 0.3;
    double pd_ratio_mean = 1.4;
    double pd_ratio_spread = 0.3;
    double pd_asymmetry_min = 0.7;  // one PD striatum is multiplied by U[min, max]
    double pd_asymmetry_max = 1.0;

    double max_rotation_deg = 8.0;
    double max_translation = 2.0;
    double pose_scale_min = 0.95;
    double pose_scale_max = 1.05;

    double intensity_scale_min = 0.5;  // log-uniform
    double intensity_scale_max = 2.0;

    double noise_sigma = 0.05;
    double smoothing_sigma = 0.7;
};

/// Defaults with the striata placed proportionally inside `shape`.
PhantomParams default_phantom(std::array<std::size_t, 3> shape = {24, 28, 24});

/// Throws UsageError when an invariant does not hold.
void validate(const PhantomParams& params);

struct SubjectRecord {
    std::string volume_path;
    int label = 0;
    std::string subject_id;
    double binding_ratio = 0.0;   // before asymmetry
    double asymmetry = 1.0;
    int asymmetric_side = 0;      // striatum index the asymmetry was applied to
    double pose_scale = 1.0;
    std::array<double, 3> rotation_deg{};
    std::array<double, 3> translation{};
    double intensity_scale = 1.0;
    bool jitter_clipped = false;  // jitter was shrunk to keep the striata inside

    /// Pose applied to the canonical phantom (about the volume center).
    AffineMatrix pose(const Shape& shape) const;
};

struct Subject {
    Tensor volume;
    SubjectRecord record;
};

Subject generate_subject(const PhantomParams& params, int label, std::uint64_t seed);

/// Controls first, then PD; subject i uses derive_seed(seed, "subject", i).
std::vector<Subject> generate_cohort(const PhantomParams& params, std::size_t n_control, std::size_t n_pd,
                                     std::uint64_t seed);

/// Writes sub-XXXX.nvol files and manifest.csv into `out_dir`; returns
/// the manifest table.
CsvTable generate_dataset(const PhantomParams& params, std::size_t n_control, std::size_t n_pd,
                          std::uint64_t seed, const fs::path& out_dir);

inline const std::vector<std::string>& manifest_header() {
    static const std::vector<std::string> h{"path",       "label",     "subject_id",    "binding_ratio",
                                            "scale",      "rotation_deg", "translation", "pose_scale",
                                            "asymmetry",  "asymmetric_side", "jitter_clipped"};
    return h;
}

std::vector<std::string> manifest_row(const SubjectRecord& r);
SubjectRecord record_from_manifest(const Manifest& m, std::size_t row);

/// 1 inside either striatum of this subject's (posed) volume, else 0.
Tensor striatal_mask(const PhantomParams& params, const SubjectRecord& record);

/// Separable gaussian blur; the kernel is renormalised at the borders so a
/// constant field stays constant.
Tensor gaussian_smooth(const Tensor& v, double sigma);

}  // namespace pdnet
