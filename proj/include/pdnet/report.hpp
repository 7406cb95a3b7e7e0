#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pdnet/evaluation.hpp"
#include "pdnet/io.hpp"

namespace pdnet {

namespace fs = std::filesystem;

/// Everything the report needs from one `train` output directory.
struct RunRecord {
    std::string run, model, tag, loss;
    std::vector<MetricsReport> folds;                  // from folds.csv (cm left empty)
    std::vector<std::vector<EpochStats>> history;      // per fold
    std::vector<RocPoint> roc;
    double auc = 0.0;                                  // trapezoid over roc.csv

    /// Tag, plus the loss when another run shares the tag.
    std::string label;
};

RunRecord load_run(const fs::path& dir);

/// `results` itself when it holds folds.csv, else every subdirectory that
/// does, sorted by name. Throws DataError when none is found.
std::vector<RunRecord> load_runs(const fs::path& results);

/// One row per run (summary_header() columns), mean [std] recomputed from
/// the per-fold values.
CsvTable merged_table(const std::vector<RunRecord>& runs);

/// Training accuracy per epoch: mean line with a +-1 std band per run.
std::string accuracy_band_svg(const std::vector<RunRecord>& runs);
/// Pooled ROC curve of every run, labelled.
std::string roc_overlay_svg(const std::vector<RunRecord>& runs);
/// Per-fold accuracy boxes, intensity normalization on the x axis and
/// spatial normalization as colour.
std::string box_plot_svg(const std::vector<RunRecord>& runs);

/// Writes the merged table to `out` and the plots next to it
/// (<stem>_accuracy.svg, <stem>_roc.svg and, for more than one run,
/// <stem>_box.svg). Returns the written paths.
std::vector<fs::path> write_report(const fs::path& results, const fs::path& out);

}  // namespace pdnet
