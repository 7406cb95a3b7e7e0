#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdnet/config.hpp"
#include "pdnet/evaluation.hpp"
#include "pdnet/io.hpp"

namespace pdnet {

namespace fs = std::filesystem;

/// Registration matrix for one manifest row of a `w` pipeline.
AffineMatrix registration_for(const RegistrationSource& source, const Manifest& manifest, std::size_t row,
                              const Shape& volume_shape);

/// Reads every volume of a manifest. A manifest with a `provenance` column
/// is taken as already preprocessed and must match `tag`; otherwise the
/// pipeline is applied in memory. Volumes are resampled to `input_shape`
/// when given and different.
LabeledDataset load_dataset(const fs::path& manifest_path, const PipelineTag& tag,
                            const RegistrationSource& registration = {},
                            const std::optional<std::array<std::size_t, 3>>& input_shape = std::nullopt);

/// Writes preprocessed copies of every volume to `out_dir` plus a manifest
/// with a `provenance` column. Returns the new manifest table.
CsvTable preprocess_dataset(const fs::path& manifest_path, const PipelineTag& tag,
                            const RegistrationSource& registration, const fs::path& out_dir);

/// Loads the data, runs cross-validation and, when cfg.out is set, writes
///   config.txt, folds.csv, history_fold<i>.csv, roc.csv, scores.csv,
///   summary.csv, summary.txt, fold<i>.pdw
CrossValidationResult run_experiment(const ExperimentConfig& cfg, const FoldProgress& progress = {});

/// Header shared by summary.csv and the merged report table.
const std::vector<std::string>& summary_header();

}  // namespace pdnet
