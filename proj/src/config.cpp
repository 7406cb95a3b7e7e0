#include "pdnet/config.hpp"

#include <sstream>

#include "pdnet/io.hpp"
#include "pdnet/rng.hpp"

namespace pdnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long int_value(const std::string& key, const std::string& value) {
    try {
        return parse_int(value);
    } catch (const DataError&) {
        throw UsageError("config key '" + key + "' expects an integer, got '" + value + "'");
    }
}

double real_value(const std::string& key, const std::string& value) {
    try {
        return parse_double(value);
    } catch (const DataError&) {
        throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

std::string to_string(ClassWeighting mode) {
    return mode == ClassWeighting::inverse_frequency ? "inverse_frequency" : "proportion";
}

std::array<std::size_t, 3> parse_shape(const std::string& text) {
    std::array<std::size_t, 3> out{};
    std::size_t start = 0;
    for (int a = 0; a < 3; ++a) {
        const std::size_t end = a < 2 ? text.find('x', start) : text.size();
        if (end == std::string::npos) throw UsageError("shape must look like DxHxW, got '" + text + "'");
        const std::string part = text.substr(start, end - start);
        long long v = 0;
        try {
            v = parse_int(part);
        } catch (const DataError&) {
            throw UsageError("shape must look like DxHxW, got '" + text + "'");
        }
        if (v < 1) throw UsageError("shape extents must be >= 1");
        out[a] = static_cast<std::size_t>(v);
        start = end + 1;
    }
    return out;
}

std::string shape_text(const std::array<std::size_t, 3>& s) {
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "model") cfg.model = value;
    else if (key == "width_scale") cfg.width_scale = real_value(key, value);
    else if (key == "tag") cfg.tag = PipelineTag::parse(value);
    else if (key == "loss") cfg.loss = loss_from_string(value);
    else if (key == "folds") {
        const long long v = int_value(key, value);
        if (v < 2) throw UsageError("folds must be >= 2");
        cfg.folds = static_cast<std::size_t>(v);
    } else if (key == "epochs") cfg.epochs = static_cast<int>(int_value(key, value));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(int_value(key, value));
    else if (key == "learning_rate") cfg.learning_rate = real_value(key, value);
    else if (key == "optimizer") {
        if (value == "adam") cfg.optimizer = OptimizerKind::adam;
        else if (value == "sgd") cfg.optimizer = OptimizerKind::sgd;
        else throw UsageError("optimizer must be adam or sgd");
    } else if (key == "class_weighting") {
        if (value == "inverse_frequency") cfg.class_weighting = ClassWeighting::inverse_frequency;
        else if (value == "proportion") cfg.class_weighting = ClassWeighting::proportion;
        else throw UsageError("class_weighting must be inverse_frequency or proportion");
    } else if (key == "seed") {
        const long long v = int_value(key, value);
        if (v < 0) throw UsageError("seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "manifest") cfg.manifest = value;
    else if (key == "out") cfg.out = value;
    else if (key == "input_shape") cfg.input_shape = parse_shape(value);
    else if (key == "registration") cfg.registration.value = value;
    else throw UsageError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw UsageError("config line " + std::to_string(lineno) + ": empty key or value");
        set_config_value(cfg, key, value);
    }
    if (!base_dir.empty()) {
        if (!cfg.manifest.empty() && cfg.manifest.is_relative()) cfg.manifest = base_dir / cfg.manifest;
        if (!cfg.out.empty() && cfg.out.is_relative()) cfg.out = base_dir / cfg.out;
        const std::string& r = cfg.registration.value;
        if (r != "identity" && r != "pose" && fs::path(r).is_relative())
            cfg.registration.value = (base_dir / r).string();
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    return parse_config(read_file(path), path.parent_path());
}

void validate(const ExperimentConfig& cfg) {
    if (!(cfg.width_scale > 0)) throw UsageError("width_scale must be positive");
    if (cfg.folds < 2) throw UsageError("folds must be >= 2");
    if (cfg.manifest.empty()) throw UsageError("no manifest given");
    validate(train_config(cfg));
    if (cfg.input_shape) architecture_by_name(cfg.model, *cfg.input_shape, cfg.width_scale);
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream o;
    o << "model = " << cfg.model << "\n"
      << "width_scale = " << format_double(cfg.width_scale) << "\n"
      << "tag = " << cfg.tag.str() << "\n"
      << "loss = " << to_string(cfg.loss) << "\n"
      << "folds = " << cfg.folds << "\n"
      << "epochs = " << cfg.epochs << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "learning_rate = " << format_double(cfg.learning_rate) << "\n"
      << "optimizer = " << to_string(cfg.optimizer) << "\n"
      << "class_weighting = " << to_string(cfg.class_weighting) << "\n"
      << "seed = " << cfg.seed << "\n"
      << "manifest = " << cfg.manifest.string() << "\n";
    if (cfg.input_shape) o << "input_shape = " << shape_text(*cfg.input_shape) << "\n";
    o << "registration = " << cfg.registration.value << "\n";
    if (!cfg.out.empty()) o << "out = " << cfg.out.string() << "\n";
    return o.str();
}

std::uint64_t config_digest(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.out.clear();
    c.manifest = c.manifest.filename();
    return fnv1a(config_to_text(c));
}

TrainConfig train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.batch_size = cfg.batch_size;
    t.loss = cfg.loss;
    t.optimizer.kind = cfg.optimizer;
    t.optimizer.learning_rate = cfg.learning_rate;
    t.weighting = cfg.class_weighting;
    t.seed = cfg.seed;
    return t;
}

}  // namespace pdnet
