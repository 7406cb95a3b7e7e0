#include "pdnet/experiment.hpp"

#include <sstream>

#include "pdnet/phantom.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {

const std::vector<std::string>& summary_header() {
    static const std::vector<std::string> h{"run", "model", "tag", "loss", "folds", "acc", "sens",
                                            "spec", "f1", "bal_acc", "auc"};
    return h;
}

namespace {

AffineMatrix matrix_file(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::array<double, 12> a{};
    for (double& v : a)
        if (!(in >> v)) throw DataError("registration file " + path.string() + " needs 12 numbers");
    double extra;
    if (in >> extra) throw DataError("registration file " + path.string() + " has more than 12 numbers");
    return AffineMatrix::from_rows(a);
}

}  // namespace

AffineMatrix registration_for(const RegistrationSource& source, const Manifest& manifest, std::size_t row,
                              const Shape& volume_shape) {
    if (source.value == "identity") return AffineMatrix();
    if (source.value == "pose") return record_from_manifest(manifest, row).pose(volume_shape).inverse();
    return matrix_file(source.value);
}

LabeledDataset load_dataset(const fs::path& manifest_path, const PipelineTag& tag,
                            const RegistrationSource& registration,
                            const std::optional<std::array<std::size_t, 3>>& input_shape) {
    const Manifest m = read_manifest(manifest_path);
    if (m.size() == 0) throw DataError("manifest " + manifest_path.string() + " has no rows");
    const auto prov = m.table.column("provenance");
    LabeledDataset data;
    data.provenance = tag.str();
    for (std::size_t r = 0; r < m.size(); ++r) {
        Tensor v = read_nvol(m.volume_path(r));
        if (prov) {
            if (m.table.rows[r][*prov] != tag.str())
                throw DataError("manifest row " + std::to_string(r + 1) + " was preprocessed as '" +
                                m.table.rows[r][*prov] + "', config asks for '" + tag.str() + "'");
        } else {
            std::optional<AffineMatrix> reg;
            if (tag.spatial) reg = registration_for(registration, m, r, v.shape());
            v = apply_pipeline(v, tag, reg);
        }
        if (input_shape) v = resample_to_shape(v, Shape{(*input_shape)[0], (*input_shape)[1], (*input_shape)[2]});
        if (!data.volumes.empty() && v.shape() != data.volumes.front().shape())
            throw DataError("volume " + m.volume_path(r).string() + " has shape " + v.shape().str() +
                            ", expected " + data.volumes.front().shape().str());
        data.volumes.push_back(std::move(v));
        data.labels.push_back(m.label(r));
        data.subject_ids.push_back(m.get(r, "subject_id"));
    }
    return data;
}

CsvTable preprocess_dataset(const fs::path& manifest_path, const PipelineTag& tag,
                            const RegistrationSource& registration, const fs::path& out_dir) {
    const Manifest m = read_manifest(manifest_path);
    if (m.size() == 0) throw DataError("manifest " + manifest_path.string() + " has no rows");
    if (auto p = m.table.column("provenance"))
        for (const auto& row : m.table.rows)
            if (row[*p] != "no_u") throw DataError("manifest is already preprocessed (" + row[*p] + ")");

    CsvTable out{m.table.header, {}};
    std::size_t prov = out.header.size();
    if (auto p = m.table.column("provenance")) prov = *p;
    else out.header.push_back("provenance");
    const std::size_t path_col = m.table.require_column("path");

    fs::create_directories(out_dir);
    for (std::size_t r = 0; r < m.size(); ++r) {
        const Tensor v = read_nvol(m.volume_path(r));
        std::optional<AffineMatrix> reg;
        if (tag.spatial) reg = registration_for(registration, m, r, v.shape());
        const fs::path name = fs::path(m.get(r, "path")).filename();
        write_nvol(out_dir / name, apply_pipeline(v, tag, reg));
        std::vector<std::string> row = m.table.rows[r];
        row[path_col] = name.string();
        if (prov == row.size()) row.push_back(tag.str());
        else row[prov] = tag.str();
        out.rows.push_back(std::move(row));
    }
    write_manifest(out_dir / "manifest.csv", out);
    return out;
}

namespace {

std::string metric_cell(const Metric& m) { return m ? format_double(*m) : "nan"; }

void write_outputs(const ExperimentConfig& cfg, const LabeledDataset& data, const CrossValidationResult& cv) {
    const fs::path& dir = cfg.out;
    fs::create_directories(dir);
    write_file_atomic(dir / "config.txt", config_to_text([&] {
                          ExperimentConfig c = cfg;
                          c.out.clear();
                          c.manifest = c.manifest.filename();
                          return c;
                      }()));

    CsvTable folds{{"fold", "acc", "sens", "spec", "f1", "bal_acc"}, {}};
    CsvTable scores{{"subject_id", "fold", "label", "score"}, {}};
    const std::uint64_t digest = config_digest(cfg);
    for (const FoldResult& f : cv.folds) {
        const MetricsReport& m = f.metrics;
        folds.rows.push_back({std::to_string(f.fold), metric_cell(m.acc), metric_cell(m.sens), metric_cell(m.spec),
                              metric_cell(m.f1), metric_cell(m.balanced_acc)});
        CsvTable hist{{"epoch", "mean_loss", "train_accuracy"}, {}};
        for (const EpochStats& e : f.history)
            hist.rows.push_back({std::to_string(e.epoch), format_double(e.mean_loss), format_double(e.train_accuracy)});
        write_csv(dir / ("history_fold" + std::to_string(f.fold) + ".csv"), hist);
        for (std::size_t i = 0; i < f.test_indices.size(); ++i) {
            const std::size_t s = f.test_indices[i];
            scores.rows.push_back({data.subject_ids[s], std::to_string(f.fold), std::to_string(data.labels[s]),
                                   format_double(f.scores[i])});
        }
        const std::uint64_t train_seed = derive_seed(derive_seed(cfg.seed, "fold", f.fold), "train");
        save_checkpoint(dir / ("fold" + std::to_string(f.fold) + ".pdw"), {f.model, train_seed, digest});
    }
    write_csv(dir / "folds.csv", folds);
    write_csv(dir / "scores.csv", scores);

    CsvTable roc{{"fpr", "tpr", "threshold"}, {}};
    for (const RocPoint& p : cv.pooled_roc.points)
        roc.rows.push_back({format_double(p.fpr), format_double(p.tpr), format_double(p.threshold)});
    write_csv(dir / "roc.csv", roc);

    const std::string run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    CsvTable summary{summary_header(), {}};
    summary.rows.push_back({run, cfg.model, cfg.tag.str(), to_string(cfg.loss), std::to_string(cfg.folds),
                            format_mean_std(cv.acc), format_mean_std(cv.sens), format_mean_std(cv.spec),
                            format_mean_std(cv.f1), format_mean_std(cv.balanced_acc),
                            format_metric(cv.pooled_roc.auc)});
    write_csv(dir / "summary.csv", summary);

    std::ostringstream txt;
    txt << "pipeline  acc            sens           spec           f1             bal_acc        auc\n"
        << cfg.tag.str() << "     " << format_mean_std(cv.acc) << "  " << format_mean_std(cv.sens) << "  "
        << format_mean_std(cv.spec) << "  " << format_mean_std(cv.f1) << "  " << format_mean_std(cv.balanced_acc)
        << "  " << format_metric(cv.pooled_roc.auc) << "\n";
    write_file_atomic(dir / "summary.txt", txt.str());
}

}  // namespace

CrossValidationResult run_experiment(const ExperimentConfig& cfg, const FoldProgress& progress) {
    validate(cfg);
    const LabeledDataset data = load_dataset(cfg.manifest, cfg.tag, cfg.registration, cfg.input_shape);
    const Shape& s = data.volumes.front().shape();
    CrossValidationConfig cv;
    cv.arch = architecture_by_name(cfg.model, {s[0], s[1], s[2]}, cfg.width_scale);
    cv.train = train_config(cfg);
    cv.folds = cfg.folds;
    cv.seed = cfg.seed;
    CrossValidationResult result = cross_validate(data, cv, progress);
    if (!cfg.out.empty()) write_outputs(cfg, data, result);
    return result;
}

}  // namespace pdnet
