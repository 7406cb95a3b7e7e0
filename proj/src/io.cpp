#include "pdnet/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pdnet {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_floats(std::string& out, std::span<const float> values) {
    out.reserve(out.size() + 4 * values.size());
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
    Reader(const std::string& bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void floats(std::span<float> out) {
        need(4 * out.size());
        for (float& f : out) f = std::bit_cast<float>(u32());
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError(std::string(what_) + ": truncated data");
    }

    const std::string& bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

std::string encode_nvol(const Tensor& volume) {
    const Shape& s = volume.shape();
    if (s.rank() != 3) throw UsageError("NVOL stores rank-3 volumes, got " + s.str());
    std::string out = "NV01";
    put_u32(out, static_cast<std::uint32_t>(s[2]));
    put_u32(out, static_cast<std::uint32_t>(s[1]));
    put_u32(out, static_cast<std::uint32_t>(s[0]));
    put_floats(out, volume.data());
    return out;
}

Tensor decode_nvol(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "NV01") != 0) throw DataError("not an NVOL file (bad magic)");
    Reader r(bytes, "NVOL");
    r.raw(4);
    const std::uint32_t dx = r.u32(), dy = r.u32(), dz = r.u32();
    if (dx == 0 || dy == 0 || dz == 0) throw DataError("NVOL extents must be >= 1");
    const std::uint64_t count = std::uint64_t(dx) * dy * dz;
    if (r.remaining() != 4 * count)
        throw DataError("NVOL payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                        std::to_string(4 * count));
    Tensor t(Shape{dz, dy, dx}, 0.0f);
    r.floats(t.data());
    return t;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_nvol(const fs::path& path, const Tensor& volume) { write_file_atomic(path, encode_nvol(volume)); }

Tensor read_nvol(const fs::path& path) {
    try {
        return decode_nvol(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out = "PDW1";
    put_u32(out, kCheckpointVersion);
    const std::string spec = spec_to_text(ckpt.model.spec);
    put_u32(out, static_cast<std::uint32_t>(spec.size()));
    out += spec;
    put_u64(out, ckpt.training_seed);
    put_u64(out, ckpt.config_digest);
    const auto params = parameters(ckpt.model);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* p : params) {
        put_u32(out, static_cast<std::uint32_t>(p->shape().rank()));
        for (std::size_t d : p->shape().dims()) put_u32(out, static_cast<std::uint32_t>(d));
        put_floats(out, p->data());
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 4, "PDW1") != 0) throw DataError("not a checkpoint (bad magic)");
    Reader r(bytes, "checkpoint");
    r.raw(4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::string spec_text = r.raw(r.u32());

    Checkpoint ckpt;
    ckpt.model = build_model(spec_from_text(spec_text), 0);
    ckpt.training_seed = r.u64();
    ckpt.config_digest = r.u64();
    ckpt.model.seed = ckpt.training_seed;

    auto params = parameters(ckpt.model);
    const std::uint32_t n = r.u32();
    if (n != params.size())
        throw DataError("checkpoint has " + std::to_string(n) + " parameter blocks, architecture needs " +
                        std::to_string(params.size()));
    for (Tensor* p : params) {
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > Shape::kMaxRank) throw DataError("checkpoint block has invalid rank");
        std::vector<std::size_t> dims;
        for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(r.u32());
        if (!(Shape(dims) == p->shape()))
            throw DataError("checkpoint block shape " + Shape(dims).str() + " does not match architecture " +
                            p->shape().str());
        r.floats(p->data());
    }
    if (r.remaining() != 0) throw DataError("trailing bytes after checkpoint");
    return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) { write_file_atomic(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const fs::path& path) {
    try {
        return decode_checkpoint(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::require_column(const std::string& name) const {
    if (auto c = column(name)) return *c;
    throw DataError("CSV is missing column '" + name + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::string format_csv(const CsvTable& table) {
    std::string out;
    auto emit = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].find_first_of(",\n") != std::string::npos)
                throw UsageError("CSV field may not contain ',' or newline: " + fields[i]);
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    emit(table.header);
    for (const auto& row : table.rows) emit(row);
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != t.header.size())
                throw DataError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                                std::to_string(t.header.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    if (first) throw DataError("CSV is empty");
    return t;
}

void write_csv(const fs::path& path, const CsvTable& table) { write_file_atomic(path, format_csv(table)); }

CsvTable read_csv(const fs::path& path) {
    try {
        return parse_csv(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::nan("");
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw DataError("trailing characters in number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw DataError("not a number: '" + s + "'");
    }
}

long long parse_int(const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("not an integer: '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------

std::string label_name(int label) { return label == 1 ? "pd" : "control"; }

int parse_label(const std::string& s) {
    if (s == "control" || s == "0") return 0;
    if (s == "pd" || s == "PD" || s == "1") return 1;
    throw DataError("unknown label '" + s + "' (control or pd)");
}

const std::string& Manifest::get(std::size_t row, const std::string& column) const {
    return table.rows.at(row).at(table.require_column(column));
}

fs::path Manifest::volume_path(std::size_t row) const {
    fs::path p = get(row, "path");
    return p.is_absolute() ? p : base_dir / p;
}

int Manifest::label(std::size_t row) const { return parse_label(get(row, "label")); }

Manifest read_manifest(const fs::path& path) {
    Manifest m{read_csv(path), path.parent_path()};
    m.table.require_column("path");
    m.table.require_column("label");
    m.table.require_column("subject_id");
    if (m.table.rows.empty()) throw DataError(path.string() + ": manifest has no rows");
    return m;
}

void write_manifest(const fs::path& path, const CsvTable& table) { write_csv(path, table); }

std::string join_values(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ';';
        out += format_double(values[i]);
    }
    return out;
}

std::vector<double> split_values(const std::string& field) {
    std::vector<double> out;
    std::istringstream is(field);
    std::string part;
    while (std::getline(is, part, ';')) out.push_back(parse_double(part));
    return out;
}

}  // namespace pdnet
