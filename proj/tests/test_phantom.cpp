#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pdnet/io.hpp"
#include "pdnet/phantom.hpp"

using namespace pdnet;
namespace fs = std::filesystem;

namespace {

PhantomParams still(PhantomParams p) {
    p.max_rotation_deg = p.max_translation = 0.0;
    p.pose_scale_min = p.pose_scale_max = 1.0;
    return p;
}

// Mean inside the striatal mask over the mean well outside it (mask grown by two voxels).
double measured_ratio(const PhantomParams& p, const Subject& s) {
    PhantomParams grown = p;
    for (Ellipsoid& e : grown.striata)
        for (double& a : e.semi_axes) a += 2.0;
    const Tensor in = striatal_mask(p, s.record), near = striatal_mask(grown, s.record);
    double si = 0, ni = 0, so = 0, no = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        if (in[k] > 0) {
            si += s.volume[k];
            ++ni;
        } else if (near[k] == 0) {
            so += s.volume[k];
            ++no;
        }
    }
    return (si / ni) / (so / no);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("pdnet_test_" + name);
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("constructive definition") {
    PhantomParams p = still(default_phantom());
    p.noise_sigma = 0.0;
    p.intensity_scale_min = p.intensity_scale_max = 1.0;
    p.control_ratio_spread = 0.0;
    const Subject s = generate_subject(p, 0, 1);
    CHECK(s.record.binding_ratio == 3.0);
    const Ellipsoid& e = p.striata[0];
    const std::size_t cz = std::lround(e.center[2]), cy = std::lround(e.center[1]), cx = std::lround(e.center[0]);
    CHECK(s.volume[(cz * 28 + cy) * 24 + cx] == doctest::Approx(3.0).epsilon(0.05));
    CHECK(s.volume[(1 * 28 + 1) * 24 + 1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("determinism and validity") {
    const PhantomParams p = default_phantom();
    const Subject a = generate_subject(p, 1, 42), b = generate_subject(p, 1, 42), c = generate_subject(p, 1, 43);
    CHECK(a.volume == b.volume);
    CHECK(!(a.volume == c.volume));
    for (int i = 0; i < 20; ++i) {
        const Subject s = generate_subject(p, i % 2, 100 + i);
        CHECK(s.volume.all_finite());
        CHECK(*std::min_element(s.volume.raw(), s.volume.raw() + s.volume.size()) >= 0.0f);
        CHECK(s.record.label == i % 2);
        CHECK(s.record.intensity_scale >= 0.5);
        CHECK(s.record.intensity_scale <= 2.0);
    }
}

TEST_CASE("mask average recovers the binding ratio") {
    PhantomParams p = still(default_phantom());
    p.noise_sigma = 0.0;
    p.smoothing_sigma = 1.0 / 2.3548;  // one voxel FWHM
    for (int i = 0; i < 20; ++i) {
        const Subject s = generate_subject(p, 0, 200 + i);
        CHECK(measured_ratio(p, s) == doctest::Approx(s.record.binding_ratio).epsilon(0.10));
    }
}

TEST_CASE("ratio separates the classes when scale and pose are fixed") {
    PhantomParams p = still(default_phantom());
    p.intensity_scale_min = p.intensity_scale_max = 1.0;
    p.control_ratio_spread = p.pd_ratio_spread = 0.1;  // non-overlapping distributions
    const std::vector<Subject> cohort = generate_cohort(p, 15, 15, 5);
    double lowest_control = 1e9, highest_pd = -1e9;
    for (const Subject& s : cohort) {
        const double r = measured_ratio(p, s);
        if (s.record.label == 0) lowest_control = std::min(lowest_control, r);
        else highest_pd = std::max(highest_pd, r);
    }
    CHECK(lowest_control > highest_pd);
}

TEST_CASE("global scaling hides the classes from raw mean intensity but not from the ratio") {
    const PhantomParams p = default_phantom();
    const std::vector<Subject> cohort = generate_cohort(p, 30, 30, 6);
    std::array<double, 2> lo{1e9, 1e9}, hi{-1e9, -1e9};
    std::vector<double> means, ratios;
    for (const Subject& s : cohort) {
        const double m = tensor_reduce(s.volume, Reduction::mean);
        means.push_back(m);
        ratios.push_back(measured_ratio(p, s));
        lo[s.record.label] = std::min(lo[s.record.label], m);
        hi[s.record.label] = std::max(hi[s.record.label], m);
    }
    // subjects whose raw mean falls inside the other class's range
    std::size_t ambiguous = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const int other = 1 - cohort[i].record.label;
        if (means[i] >= lo[other] && means[i] <= hi[other]) ++ambiguous;
    }
    CHECK(double(ambiguous) / double(cohort.size()) >= 0.5);

    double lowest_control = 1e9, highest_pd = -1e9;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort[i].record.label == 0) lowest_control = std::min(lowest_control, ratios[i]);
        else highest_pd = std::max(highest_pd, ratios[i]);
    }
    CHECK(lowest_control > highest_pd);
}

TEST_CASE("cohort statistics") {
    const PhantomParams p = default_phantom();
    const std::vector<Subject> cohort = generate_cohort(p, 25, 25, 8);
    double sums[2] = {0, 0};
    int n[2] = {0, 0};
    for (const Subject& s : cohort) {
        sums[s.record.label] += s.record.binding_ratio;
        ++n[s.record.label];
        if (s.record.label == 0) CHECK(s.record.asymmetry == 1.0);
        else {
            CHECK(s.record.asymmetry >= 0.7);
            CHECK(s.record.asymmetry <= 1.0);
        }
    }
    CHECK(n[0] == 25);
    CHECK(cohort.front().record.subject_id == "sub-0001");
    CHECK(std::abs(sums[0] / n[0] - p.control_ratio_mean) <= 2 * p.control_ratio_spread);
    CHECK(std::abs(sums[1] / n[1] - p.pd_ratio_mean) <= 2 * p.pd_ratio_spread);
}

TEST_CASE("jitter is shrunk when the striata would leave the field of view") {
    PhantomParams p = default_phantom({10, 12, 10});
    p.max_translation = 6.0;
    bool clipped = false;
    for (int i = 0; i < 20; ++i) {
        const Subject s = generate_subject(p, 0, 300 + i);
        clipped = clipped || s.record.jitter_clipped;
        for (double t : s.record.translation) CHECK(std::abs(t) <= 6.0);
    }
    CHECK(clipped);
}

TEST_CASE("parameter validation") {
    PhantomParams p = default_phantom();
    p.pd_ratio_mean = 3.5;
    CHECK_THROWS_AS(generate_subject(p, 0, 1), UsageError);
    CHECK_THROWS_AS(validate(default_phantom({6, 12, 12})), UsageError);
    p = default_phantom();
    p.noise_sigma = -1;
    CHECK_THROWS_AS(validate(p), UsageError);
    CHECK_THROWS_AS(generate_subject(default_phantom(), 2, 1), UsageError);
}

TEST_CASE("dataset files and manifest") {
    const fs::path a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
    const PhantomParams p = default_phantom({12, 14, 12});
    const CsvTable t = generate_dataset(p, 10, 10, 3, a);
    generate_dataset(p, 10, 10, 3, b);
    CHECK(t.rows.size() == 20);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) files += e.path().extension() == ".nvol";
    CHECK(files == 20);
    CHECK(read_file(a / "manifest.csv") == read_file(b / "manifest.csv"));
    CHECK(read_file(a / "sub-0020.nvol") == read_file(b / "sub-0020.nvol"));
    const std::vector<std::string> head(t.header.begin(), t.header.begin() + 7);
    CHECK(head == std::vector<std::string>{"path", "label", "subject_id", "binding_ratio", "scale", "rotation_deg",
                                           "translation"});

    const Manifest m = read_manifest(a / "manifest.csv");
    const SubjectRecord r = record_from_manifest(m, 13);
    const Subject again = generate_cohort(p, 10, 10, 3)[13];
    CHECK(r.binding_ratio == again.record.binding_ratio);
    CHECK(r.rotation_deg == again.record.rotation_deg);
    CHECK(r.translation == again.record.translation);
    CHECK(r.pose_scale == again.record.pose_scale);
    CHECK(read_nvol(m.volume_path(13)) == again.volume);
    CHECK_THROWS_AS(generate_dataset(p, 0, 3, 1, scratch_dir("ds_c")), UsageError);
    fs::remove_all(a);
    fs::remove_all(b);
}
