#include "pdnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "pdnet/rng.hpp"

namespace pdnet {

bool Ellipsoid::contains(double x, double y, double z) const {
    const double dx = (x - center[0]) / semi_axes[0];
    const double dy = (y - center[1]) / semi_axes[1];
    const double dz = (z - center[2]) / semi_axes[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

PhantomParams default_phantom(std::array<std::size_t, 3> shape) {
    PhantomParams p;
    p.shape = shape;
    const double D = static_cast<double>(shape[0]), H = static_cast<double>(shape[1]),
                 W = static_cast<double>(shape[2]);
    const std::array<double, 3> axes{0.104 * W, 0.18 * H, 0.125 * D};
    p.striata[0] = {{W * 0.33 - 0.5, H * 0.55 - 0.5, D * 0.5 - 0.5}, axes};
    p.striata[1] = {{W * 0.67 - 0.5, H * 0.55 - 0.5, D * 0.5 - 0.5}, axes};
    return p;
}

void validate(const PhantomParams& p) {
    for (std::size_t e : p.shape)
        if (e < 8) throw UsageError("phantom extents must be >= 8");
    if (!(p.control_ratio_mean > p.pd_ratio_mean))
        throw UsageError("control binding ratio mean must exceed the PD mean");
    if (p.control_ratio_spread < 0 || p.pd_ratio_spread < 0 || p.noise_sigma < 0 || p.smoothing_sigma < 0 ||
        p.max_rotation_deg < 0 || p.max_translation < 0)
        throw UsageError("phantom spreads and jitter ranges must be >= 0");
    if (!(p.background > 0)) throw UsageError("background uptake must be positive");
    if (!(p.pose_scale_min > 0 && p.pose_scale_min <= p.pose_scale_max))
        throw UsageError("pose scale range must be positive and ordered");
    if (!(p.intensity_scale_min > 0 && p.intensity_scale_min <= p.intensity_scale_max))
        throw UsageError("intensity scale range must be positive and ordered");
    if (!(p.pd_asymmetry_min > 0 && p.pd_asymmetry_min <= p.pd_asymmetry_max))
        throw UsageError("asymmetry range must be positive and ordered");
    for (const Ellipsoid& e : p.striata)
        for (int a = 0; a < 3; ++a)
            if (!(e.semi_axes[a] > 0)) throw UsageError("striatal semi-axes must be positive");
}

AffineMatrix SubjectRecord::pose(const Shape& shape) const {
    return make_similarity_about(volume_center(shape), pose_scale, rotation_deg, translation);
}

Tensor gaussian_smooth(const Tensor& v, double sigma) {
    if (sigma <= 0.0) return v;
    const Shape& s = v.shape();
    if (s.rank() != 3) throw UsageError("gaussian_smooth works on (D,H,W) volumes");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));

    const std::array<std::size_t, 3> ext{s[0], s[1], s[2]};
    const std::array<std::size_t, 3> stride{s[1] * s[2], s[2], 1};
    std::vector<double> cur(v.data().begin(), v.data().end()), next(cur.size());
    for (int axis = 0; axis < 3; ++axis) {
        const long n = static_cast<long>(ext[axis]);
        for (std::size_t idx = 0; idx < cur.size(); ++idx) {
            const long pos = static_cast<long>((idx / stride[axis]) % ext[axis]);
            double acc = 0.0, wsum = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const long q = pos + k;
                if (q < 0 || q >= n) continue;
                const double w = kernel[k + radius];
                acc += w * cur[idx + (q - pos) * static_cast<long>(stride[axis])];
                wsum += w;
            }
            next[idx] = acc / wsum;
        }
        std::swap(cur, next);
    }
    Tensor out(s, 0.0f);
    for (std::size_t i = 0; i < cur.size(); ++i) out[i] = static_cast<float>(cur[i]);
    return out;
}

namespace {

Shape volume_shape(const PhantomParams& p) { return Shape{p.shape[0], p.shape[1], p.shape[2]}; }

// True when every corner of every striatal bounding box (one voxel margin)
// stays inside the volume under `pose`.
bool striata_inside(const PhantomParams& p, const AffineMatrix& pose) {
    for (const Ellipsoid& e : p.striata)
        for (int corner = 0; corner < 8; ++corner) {
            Eigen::Vector3d c;
            for (int a = 0; a < 3; ++a) {
                const double r = e.semi_axes[a] + 1.0;
                c[a] = e.center[a] + ((corner >> a) & 1 ? r : -r);
            }
            const Eigen::Vector3d q = pose.apply(c);
            if (q.x() < 0 || q.y() < 0 || q.z() < 0 || q.x() > double(p.shape[2] - 1) ||
                q.y() > double(p.shape[1] - 1) || q.z() > double(p.shape[0] - 1))
                return false;
        }
    return true;
}

Tensor canonical_volume(const PhantomParams& p, const std::array<double, 2>& ratios) {
    Tensor v(volume_shape(p), static_cast<float>(p.background));
    std::size_t i = 0;
    for (std::size_t z = 0; z < p.shape[0]; ++z)
        for (std::size_t y = 0; y < p.shape[1]; ++y)
            for (std::size_t x = 0; x < p.shape[2]; ++x, ++i)
                for (int s = 0; s < 2; ++s)
                    if (p.striata[s].contains(double(x), double(y), double(z)))
                        v[i] = static_cast<float>(p.background * ratios[s]);
    return v;
}

}  // namespace

Subject generate_subject(const PhantomParams& params, int label, std::uint64_t seed) {
    validate(params);
    if (label != 0 && label != 1) throw UsageError("phantom label must be 0 (control) or 1 (pd)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    SubjectRecord rec;
    rec.label = label;
    const double mean = label == 1 ? params.pd_ratio_mean : params.control_ratio_mean;
    const double spread = label == 1 ? params.pd_ratio_spread : params.control_ratio_spread;
    std::normal_distribution<double> ratio_dist(mean, spread);
    rec.binding_ratio = std::max(0.05, spread > 0 ? ratio_dist(rng) : mean);
    rec.asymmetric_side = unit(rng) < 0.5 ? 0 : 1;
    rec.asymmetry = label == 1 ? uniform(params.pd_asymmetry_min, params.pd_asymmetry_max) : 1.0;

    std::array<double, 3> rot{}, trans{};
    for (int a = 0; a < 3; ++a) rot[a] = uniform(-params.max_rotation_deg, params.max_rotation_deg);
    for (int a = 0; a < 3; ++a) trans[a] = uniform(-params.max_translation, params.max_translation);
    const double scale = uniform(params.pose_scale_min, params.pose_scale_max);
    rec.intensity_scale =
        std::exp(uniform(std::log(params.intensity_scale_min), std::log(params.intensity_scale_max)));
    const std::uint64_t noise_seed = rng();

    // Shrink the jitter until both striata stay inside the field of view.
    const Shape shape = volume_shape(params);
    bool fits = false;
    for (double shrink : {1.0, 0.5, 0.25, 0.125, 0.0}) {
        for (int a = 0; a < 3; ++a) {
            rec.rotation_deg[a] = rot[a] * shrink;
            rec.translation[a] = trans[a] * shrink;
        }
        rec.pose_scale = 1.0 + (scale - 1.0) * shrink;
        if ((fits = striata_inside(params, rec.pose(shape)))) break;
        rec.jitter_clipped = true;
    }
    if (!fits) throw UsageError("phantom striata do not fit inside the volume");

    std::array<double, 2> ratios{rec.binding_ratio, rec.binding_ratio};
    ratios[rec.asymmetric_side] *= rec.asymmetry;
    Tensor v = gaussian_smooth(canonical_volume(params, ratios), params.smoothing_sigma);
    v = affine_resample(v, rec.pose(shape), shape);

    std::mt19937_64 noise_rng(noise_seed);
    std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);
    for (float& x : v.data()) {
        double val = x * rec.intensity_scale;
        if (params.noise_sigma > 0) val += noise(noise_rng);
        x = static_cast<float>(std::max(0.0, val));
    }
    return {std::move(v), std::move(rec)};
}

std::vector<Subject> generate_cohort(const PhantomParams& params, std::size_t n_control, std::size_t n_pd,
                                     std::uint64_t seed) {
    std::vector<Subject> out;
    out.reserve(n_control + n_pd);
    for (std::size_t i = 0; i < n_control + n_pd; ++i) {
        Subject s = generate_subject(params, i < n_control ? 0 : 1, derive_seed(seed, "subject", i));
        char id[32];
        std::snprintf(id, sizeof id, "sub-%04zu", i + 1);
        s.record.subject_id = id;
        s.record.volume_path = std::string(id) + ".nvol";
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> manifest_row(const SubjectRecord& r) {
    return {r.volume_path,
            label_name(r.label),
            r.subject_id,
            format_double(r.binding_ratio),
            format_double(r.intensity_scale),
            join_values({r.rotation_deg[0], r.rotation_deg[1], r.rotation_deg[2]}),
            join_values({r.translation[0], r.translation[1], r.translation[2]}),
            format_double(r.pose_scale),
            format_double(r.asymmetry),
            std::to_string(r.asymmetric_side),
            r.jitter_clipped ? "1" : "0"};
}

SubjectRecord record_from_manifest(const Manifest& m, std::size_t row) {
    SubjectRecord r;
    r.volume_path = m.get(row, "path");
    r.label = m.label(row);
    r.subject_id = m.get(row, "subject_id");
    r.binding_ratio = parse_double(m.get(row, "binding_ratio"));
    r.intensity_scale = parse_double(m.get(row, "scale"));
    const auto rot = split_values(m.get(row, "rotation_deg"));
    const auto tr = split_values(m.get(row, "translation"));
    if (rot.size() != 3 || tr.size() != 3) throw DataError("rotation/translation need three values");
    std::copy(rot.begin(), rot.end(), r.rotation_deg.begin());
    std::copy(tr.begin(), tr.end(), r.translation.begin());
    r.pose_scale = m.table.column("pose_scale") ? parse_double(m.get(row, "pose_scale")) : 1.0;
    r.asymmetry = m.table.column("asymmetry") ? parse_double(m.get(row, "asymmetry")) : 1.0;
    r.asymmetric_side = m.table.column("asymmetric_side") ? static_cast<int>(parse_int(m.get(row, "asymmetric_side"))) : 0;
    r.jitter_clipped = m.table.column("jitter_clipped") && m.get(row, "jitter_clipped") == "1";
    return r;
}

CsvTable generate_dataset(const PhantomParams& params, std::size_t n_control, std::size_t n_pd, std::uint64_t seed,
                          const fs::path& out_dir) {
    if (n_control < 1 || n_pd < 1) throw UsageError("need at least one control and one PD subject");
    CsvTable table{manifest_header(), {}};
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < n_control + n_pd; ++i) {
        Subject s = generate_subject(params, i < n_control ? 0 : 1, derive_seed(seed, "subject", i));
        char id[32];
        std::snprintf(id, sizeof id, "sub-%04zu", i + 1);
        s.record.subject_id = id;
        s.record.volume_path = std::string(id) + ".nvol";
        write_nvol(out_dir / s.record.volume_path, s.volume);
        table.rows.push_back(manifest_row(s.record));
    }
    write_manifest(out_dir / "manifest.csv", table);
    return table;
}

Tensor striatal_mask(const PhantomParams& params, const SubjectRecord& record) {
    const Shape shape = volume_shape(params);
    Tensor mask(shape, 0.0f);
    const AffineMatrix inv = record.pose(shape).inverse();
    std::size_t i = 0;
    for (std::size_t z = 0; z < shape[0]; ++z)
        for (std::size_t y = 0; y < shape[1]; ++y)
            for (std::size_t x = 0; x < shape[2]; ++x, ++i) {
                const Eigen::Vector3d p = inv.apply(Eigen::Vector3d(double(x), double(y), double(z)));
                for (const Ellipsoid& e : params.striata)
                    if (e.contains(p.x(), p.y(), p.z())) mask[i] = 1.0f;
            }
    return mask;
}

}  // namespace pdnet
