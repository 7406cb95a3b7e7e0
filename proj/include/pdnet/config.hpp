#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pdnet/model.hpp"
#include "pdnet/preprocess.hpp"
#include "pdnet/training.hpp"

namespace pdnet {

namespace fs = std::filesystem;

/// How the registration matrix of a `w` pipeline is obtained.
///   identity  - volumes are already aligned
///   pose      - inverse of the pose recorded in a phantom manifest
///   <path>    - text file with 12 numbers (rows of the 3x4 block), used for every subject
struct RegistrationSource {
    std::string value = "identity";
};

/// One cross-validation run. Files use `key = value` lines; `#` starts a
/// comment. Relative paths are resolved against the config file's directory.
struct ExperimentConfig {
    std::string model = "alexnet3d";
    double width_scale = 1.0;
    PipelineTag tag;
    LossKind loss = LossKind::cross_entropy;
    std::size_t folds = 10;
    int epochs = 60;
    int batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    ClassWeighting class_weighting = ClassWeighting::inverse_frequency;
    std::uint64_t seed = 0;
    fs::path manifest;
    fs::path out;
    std::optional<std::array<std::size_t, 3>> input_shape;  // default: shape of the first volume
    RegistrationSource registration;
};

/// Sets one key from its text value; throws UsageError on unknown keys or
/// malformed values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir = {});
ExperimentConfig load_config(const fs::path& path);

/// Range checks; throws UsageError.
void validate(const ExperimentConfig& cfg);

/// Canonical text form, one key per line in a fixed order.
std::string config_to_text(const ExperimentConfig& cfg);

/// Hash of everything that affects results (the output directory is excluded).
std::uint64_t config_digest(const ExperimentConfig& cfg);

TrainConfig train_config(const ExperimentConfig& cfg);

/// "24x28x24" style shape (D x H x W).
std::array<std::size_t, 3> parse_shape(const std::string& text);
std::string shape_text(const std::array<std::size_t, 3>& shape);

std::string to_string(OptimizerKind kind);
std::string to_string(ClassWeighting mode);

}  // namespace pdnet
