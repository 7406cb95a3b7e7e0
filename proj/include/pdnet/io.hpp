#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdnet/model.hpp"
#include "pdnet/tensor.hpp"

namespace pdnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// NVOL: "NV01", uint32 LE dx, dy, dz, then dx*dy*dz float32 LE, x fastest.
// A volume tensor (D, H, W) is stored with dx = W, dy = H, dz = D, so the
// payload is exactly the tensor's row-major data.

std::string encode_nvol(const Tensor& volume);
Tensor decode_nvol(const std::string& bytes);  // throws DataError

void write_nvol(const fs::path& path, const Tensor& volume);
Tensor read_nvol(const fs::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::string read_file(const fs::path& path);

// ---------------------------------------------------------------------------
// Checkpoints: "PDW1", uint32 version, length-prefixed architecture text,
// uint64 training seed, uint64 config digest, then one block per parameter
// tensor (uint32 rank, uint32 extents, float32 LE data).

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::uint64_t training_seed = 0;
    std::uint64_t config_digest = 0;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const fs::path& path);

// ---------------------------------------------------------------------------
// CSV (comma-separated, no quoting; fields never contain commas)

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of `name`, or nullopt.
    std::optional<std::size_t> column(const std::string& name) const;
    /// Index of `name`; throws DataError when absent.
    std::size_t require_column(const std::string& name) const;
};

std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const fs::path& path, const CsvTable& table);
CsvTable read_csv(const fs::path& path);

/// Fixed "%.17g" formatting so values round-trip and outputs are byte-stable.
std::string format_double(double v);
double parse_double(const std::string& s);
long long parse_int(const std::string& s);

// ---------------------------------------------------------------------------
// Dataset manifests

/// Manifest CSV plus the directory its relative paths are resolved against.
struct Manifest {
    CsvTable table;
    fs::path base_dir;

    std::size_t size() const { return table.rows.size(); }
    const std::string& get(std::size_t row, const std::string& column) const;
    fs::path volume_path(std::size_t row) const;
    int label(std::size_t row) const;  // "control"/"0" -> 0, "pd"/"1" -> 1
};

Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const CsvTable& table);

std::string label_name(int label);
int parse_label(const std::string& s);

/// Separator used inside a single CSV field for vector values ("1;2;3").
std::string join_values(const std::vector<double>& values);
std::vector<double> split_values(const std::string& field);

}  // namespace pdnet
