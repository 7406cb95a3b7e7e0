// pdnet command-line front end. Exit codes: 0 ok, 1 usage, 2 data/I-O, 3 numeric.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "pdnet/config.hpp"
#include "pdnet/errors.hpp"
#include "pdnet/experiment.hpp"
#include "pdnet/io.hpp"
#include "pdnet/phantom.hpp"
#include "pdnet/report.hpp"
#include "pdnet/saliency.hpp"

using namespace pdnet;

namespace {

struct PhantomArgs {
    std::string out, shape = "24x28x24";
    long long n_control = -1, n_pd = -1;
    std::uint64_t seed = 0;
    std::optional<double> noise, scale_min, scale_max;
    bool no_jitter = false;
};

int cmd_phantom(const PhantomArgs& a) {
    if (a.n_control < 1 || a.n_pd < 1) throw UsageError("--n-control and --n-pd must be >= 1");
    PhantomParams p = default_phantom(parse_shape(a.shape));
    if (a.noise) p.noise_sigma = *a.noise;
    if (a.scale_min) p.intensity_scale_min = *a.scale_min;
    if (a.scale_max) p.intensity_scale_max = *a.scale_max;
    if (a.no_jitter) {
        p.max_rotation_deg = p.max_translation = 0.0;
        p.pose_scale_min = p.pose_scale_max = 1.0;
    }
    const CsvTable t = generate_dataset(p, static_cast<std::size_t>(a.n_control), static_cast<std::size_t>(a.n_pd),
                                        a.seed, a.out);
    std::cerr << "wrote " << t.rows.size() << " volumes to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, out;
    std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
    ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
    for (const auto& [k, v] : a.overrides) set_config_value(cfg, k, v);
    if (!a.out.empty()) cfg.out = a.out;
    if (cfg.out.empty()) throw UsageError("no output directory (--out or out = ...)");
    const CrossValidationResult r = run_experiment(cfg, [&](std::size_t fold, const EpochStats& s) {
        std::fprintf(stderr, "fold %zu epoch %d loss %.4f train_acc %.3f\n", fold, s.epoch, s.mean_loss,
                     s.train_accuracy);
    });
    std::cout << cfg.tag.str() << " acc " << format_mean_std(r.acc) << " auc " << format_metric(r.pooled_roc.auc)
              << "\n";
    return 0;
}

int cmd_saliency(const std::string& checkpoint, const std::string& volume, int target, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Tensor v = read_nvol(volume);
    const auto& in = ckpt.model.spec.input_shape;
    if (v.shape() != Shape{in[0], in[1], in[2]})
        throw DataError("volume shape " + v.shape().str() + " does not match the model input " +
                        Shape{in[0], in[1], in[2]}.str());
    const Tensor map = saliency_map(ckpt.model, v, target);
    fs::create_directories(out);
    write_nvol(fs::path(out) / "saliency.nvol", map);
    write_file_atomic(fs::path(out) / "saliency_axial_max.pgm", encode_pgm(saliency_projection(map)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D-CNN DaTSCAN pipeline: phantom data, preprocessing, training, saliency, reports"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "synthetic striatal phantom data");
    phantom->require_subcommand(1);
    auto* gen = phantom->add_subcommand("generate", "write NVOL volumes and manifest.csv");
    gen->add_option("--out", pa.out, "output directory")->required();
    gen->add_option("--n-control", pa.n_control, "control subjects")->required();
    gen->add_option("--n-pd", pa.n_pd, "PD subjects")->required();
    gen->add_option("--seed", pa.seed, "top-level seed")->required();
    gen->add_option("--shape", pa.shape, "volume shape DxHxW")->capture_default_str();
    gen->add_option("--noise-sigma", pa.noise, "additive noise sigma");
    gen->add_option("--scale-min", pa.scale_min, "lower bound of the global intensity scale");
    gen->add_option("--scale-max", pa.scale_max, "upper bound of the global intensity scale");
    gen->add_flag("--no-jitter", pa.no_jitter, "disable pose jitter");

    std::string pp_manifest, pp_tag, pp_out, pp_reg = "identity";
    auto* pre = app.add_subcommand("preprocess", "apply a [no|int|max]_[u|w] pipeline to a manifest");
    pre->add_option("--manifest", pp_manifest, "input manifest.csv")->required();
    pre->add_option("--tag", pp_tag, "pipeline tag")->required();
    pre->add_option("--out", pp_out, "output directory")->required();
    auto* reg_opt = pre->add_option("--registration", pp_reg, "identity, pose, or a file with 12 numbers");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "cross-validated training");
    train->add_option("--config", ta.config, "key = value config file");
    train->add_option("--out", ta.out, "output directory");
    for (const char* key : {"model", "width_scale", "tag", "loss", "folds", "epochs", "batch_size", "learning_rate",
                            "optimizer", "class_weighting", "seed", "manifest", "input_shape", "registration"}) {
        std::string flag = std::string("--") + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        train->add_option_function<std::string>(
            flag, [&ta, key](const std::string& v) { ta.overrides[key] = v; }, std::string("overrides ") + key);
    }

    std::string sal_ckpt, sal_vol, sal_out;
    int sal_class = 1;
    auto* sal = app.add_subcommand("saliency", "input-gradient saliency of one volume");
    sal->add_option("--checkpoint", sal_ckpt, "fold checkpoint (.pdw)")->required();
    sal->add_option("--volume", sal_vol, "input NVOL volume")->required();
    sal->add_option("--class", sal_class, "target class, 0 control or 1 PD")->required()->check(CLI::Range(0, 1));
    sal->add_option("--out", sal_out, "output directory")->required();

    std::string rep_results, rep_out;
    auto* rep = app.add_subcommand("report", "merge train results into a table and SVG plots");
    rep->add_option("--results", rep_results, "a train output directory or a directory of them")->required();
    rep->add_option("--out", rep_out, "merged table (CSV); plots are written next to it")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_phantom(pa);
        if (pre->parsed()) {
            const PipelineTag tag = PipelineTag::parse(pp_tag);
            if (tag.spatial && reg_opt->count() == 0)
                throw UsageError("tag " + pp_tag + " needs --registration (identity, pose or a matrix file)");
            const CsvTable t = preprocess_dataset(pp_manifest, tag, {pp_reg}, pp_out);
            std::cerr << "preprocessed " << t.rows.size() << " volumes as " << tag.str() << "\n";
            return 0;
        }
        if (train->parsed()) return cmd_train(ta);
        if (sal->parsed()) return cmd_saliency(sal_ckpt, sal_vol, sal_class, sal_out);
        if (rep->parsed()) {
            for (const fs::path& p : write_report(rep_results, rep_out)) std::cerr << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
