#include "pdnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pdnet/experiment.hpp"

namespace pdnet {

namespace {

Metric metric_value(const std::string& s) {
    const double v = parse_double(s);
    if (std::isnan(v)) return std::nullopt;
    return v;
}

}  // namespace

RunRecord load_run(const fs::path& dir) {
    RunRecord r;
    const CsvTable summary = read_csv(dir / "summary.csv");
    if (summary.rows.size() != 1) throw DataError(dir.string() + "/summary.csv must have one row");
    const auto& srow = summary.rows[0];
    r.run = srow[summary.require_column("run")];
    r.model = srow[summary.require_column("model")];
    r.tag = srow[summary.require_column("tag")];
    r.loss = srow[summary.require_column("loss")];
    r.label = r.tag;

    const CsvTable folds = read_csv(dir / "folds.csv");
    if (folds.rows.empty()) throw DataError(dir.string() + "/folds.csv has no folds");
    const std::size_t c_acc = folds.require_column("acc"), c_sens = folds.require_column("sens"),
                      c_spec = folds.require_column("spec"), c_f1 = folds.require_column("f1"),
                      c_bal = folds.require_column("bal_acc"), c_fold = folds.require_column("fold");
    for (const auto& row : folds.rows) {
        MetricsReport m;
        m.acc = metric_value(row[c_acc]);
        m.sens = metric_value(row[c_sens]);
        m.spec = metric_value(row[c_spec]);
        m.f1 = metric_value(row[c_f1]);
        m.balanced_acc = metric_value(row[c_bal]);
        r.folds.push_back(m);

        const CsvTable hist = read_csv(dir / ("history_fold" + row[c_fold] + ".csv"));
        const std::size_t c_ep = hist.require_column("epoch"), c_loss = hist.require_column("mean_loss"),
                          c_tacc = hist.require_column("train_accuracy");
        std::vector<EpochStats> h;
        for (const auto& hr : hist.rows)
            h.push_back({static_cast<int>(parse_int(hr[c_ep])), parse_double(hr[c_loss]), parse_double(hr[c_tacc])});
        r.history.push_back(std::move(h));
    }

    const CsvTable roc = read_csv(dir / "roc.csv");
    const std::size_t c_fpr = roc.require_column("fpr"), c_tpr = roc.require_column("tpr"),
                      c_thr = roc.require_column("threshold");
    for (const auto& row : roc.rows)
        r.roc.push_back({parse_double(row[c_fpr]), parse_double(row[c_tpr]), parse_double(row[c_thr])});
    if (r.roc.size() < 2) throw DataError(dir.string() + "/roc.csv needs at least two points");
    for (std::size_t i = 1; i < r.roc.size(); ++i)
        r.auc += (r.roc[i].fpr - r.roc[i - 1].fpr) * (r.roc[i].tpr + r.roc[i - 1].tpr) / 2.0;
    return r;
}

std::vector<RunRecord> load_runs(const fs::path& results) {
    if (!fs::is_directory(results)) throw DataError("results directory " + results.string() + " does not exist");
    std::vector<RunRecord> runs;
    if (fs::exists(results / "folds.csv")) {
        runs.push_back(load_run(results));
    } else {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(results))
            if (e.is_directory() && fs::exists(e.path() / "folds.csv")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const fs::path& d : dirs) runs.push_back(load_run(d));
    }
    if (runs.empty()) throw DataError("no train results under " + results.string());

    std::map<std::string, int> per_tag;
    for (const RunRecord& r : runs) ++per_tag[r.tag];
    std::map<std::string, int> per_label;
    for (RunRecord& r : runs) {
        if (per_tag[r.tag] > 1) r.label = r.tag + " " + r.loss;
        ++per_label[r.label];
    }
    for (RunRecord& r : runs)
        if (per_label[r.label] > 1) r.label += " (" + r.run + ")";
    return runs;
}

CsvTable merged_table(const std::vector<RunRecord>& runs) {
    CsvTable t{summary_header(), {}};
    for (const RunRecord& r : runs) {
        auto col = [&](Metric MetricsReport::*field) {
            std::vector<Metric> v;
            for (const MetricsReport& m : r.folds) v.push_back(m.*field);
            return format_mean_std(summarize(v));
        };
        t.rows.push_back({r.run, r.model, r.tag, r.loss, std::to_string(r.folds.size()), col(&MetricsReport::acc),
                          col(&MetricsReport::sens), col(&MetricsReport::spec), col(&MetricsReport::f1),
                          col(&MetricsReport::balanced_acc), format_metric(r.auc)});
    }
    return t;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kW = 640, kH = 420, kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

std::string color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof *kPalette)]; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

// Plot frame with axes in data range [x0,x1] x [y0,y1].
struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
    double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void open_svg(std::ostringstream& o, const std::string& title) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel,
          const std::vector<double>& xticks, const std::vector<double>& yticks) {
    o << "<g stroke=\"black\" fill=\"none\">\n"
      << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(f.x1))
      << "\" y2=\"" << num(f.py(f.y0)) << "\"/>\n"
      << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(f.x0))
      << "\" y2=\"" << num(f.py(f.y1)) << "\"/>\n</g>\n";
    for (double t : xticks)
        o << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(f.py(f.y0) + 16) << "\" text-anchor=\"middle\">"
          << num(t) << "</text>\n";
    for (double t : yticks)
        o << "<text x=\"" << num(f.px(f.x0) - 6) << "\" y=\"" << num(f.py(t) + 4) << "\" text-anchor=\"end\">"
          << num(t) << "</text>\n";
    o << "<text x=\"" << num((f.px(f.x0) + f.px(f.x1)) / 2) << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n"
      << "<text transform=\"translate(16," << num((f.py(f.y0) + f.py(f.y1)) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<std::string>& labels) {
    const double x = kW - kRight + 15;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = kTop + 10 + 16.0 * static_cast<double>(i);
        o << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
          << color(i) << "\"/>\n<text class=\"legend\" x=\"" << num(x + 15) << "\" y=\"" << num(y) << "\">"
          << escape(labels[i]) << "</text>\n";
    }
}

std::vector<double> ticks(double lo, double hi, int n) {
    std::vector<double> t;
    for (int i = 0; i <= n; ++i) t.push_back(lo + (hi - lo) * i / n);
    return t;
}

}  // namespace

std::string accuracy_band_svg(const std::vector<RunRecord>& runs) {
    std::size_t epochs = 1;
    for (const RunRecord& r : runs)
        for (const auto& h : r.history) epochs = std::max(epochs, h.size());
    const Frame f{1.0, std::max(2.0, static_cast<double>(epochs)), 0.0, 1.0};
    std::ostringstream o;
    open_svg(o, "Training accuracy (mean and std over folds)");
    axes(o, f, "epoch", "accuracy", ticks(f.x0, f.x1, 5), ticks(0, 1, 5));
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunRecord& r = runs[i];
        labels.push_back(r.label);
        std::vector<double> mean, sd;
        for (std::size_t e = 0; e < epochs; ++e) {
            std::vector<Metric> v;
            for (const auto& h : r.history)
                if (e < h.size()) v.push_back(h[e].train_accuracy);
            if (v.empty()) break;
            const MetricSummary s = summarize(v);
            mean.push_back(s.mean);
            sd.push_back(s.std);
        }
        std::string band, line;
        for (std::size_t e = 0; e < mean.size(); ++e)
            band += num(f.px(double(e + 1))) + "," + num(f.py(std::min(1.0, mean[e] + sd[e]))) + " ";
        for (std::size_t e = mean.size(); e-- > 0;)
            band += num(f.px(double(e + 1))) + "," + num(f.py(std::max(0.0, mean[e] - sd[e]))) + " ";
        for (std::size_t e = 0; e < mean.size(); ++e)
            line += num(f.px(double(e + 1))) + "," + num(f.py(mean[e])) + " ";
        o << "<polygon points=\"" << band << "\" fill=\"" << color(i) << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
          << "<polyline class=\"curve\" points=\"" << line << "\" fill=\"none\" stroke=\"" << color(i)
          << "\" stroke-width=\"1.5\"/>\n";
    }
    legend(o, labels);
    o << "</svg>\n";
    return o.str();
}

std::string roc_overlay_svg(const std::vector<RunRecord>& runs) {
    const Frame f{0.0, 1.0, 0.0, 1.0};
    std::ostringstream o;
    open_svg(o, "ROC (pooled held-out scores)");
    axes(o, f, "1 - specificity", "sensitivity", ticks(0, 1, 5), ticks(0, 1, 5));
    o << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(1)) << "\" y2=\""
      << num(f.py(1)) << "\" stroke=\"#999\" stroke-dasharray=\"4,4\"/>\n";
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        labels.push_back(runs[i].label + " AUC " + format_metric(runs[i].auc));
        std::string pts;
        for (const RocPoint& p : runs[i].roc) pts += num(f.px(p.fpr)) + "," + num(f.py(p.tpr)) + " ";
        o << "<polyline class=\"curve\" points=\"" << pts << "\" fill=\"none\" stroke=\"" << color(i)
          << "\" stroke-width=\"1.5\"/>\n";
    }
    legend(o, labels);
    o << "</svg>\n";
    return o.str();
}

std::string box_plot_svg(const std::vector<RunRecord>& runs) {
    // Groups on the x axis by the intensity half of the tag; colour by the spatial half.
    const std::vector<std::string> groups{"no", "int", "max"};
    const std::vector<std::string> spatial{"u", "w"};
    const Frame f{0.0, 3.0, 0.0, 1.0};
    std::ostringstream o;
    open_svg(o, "Per-fold test accuracy");
    axes(o, f, "intensity normalization", "accuracy", {}, ticks(0, 1, 5));
    for (std::size_t g = 0; g < groups.size(); ++g)
        o << "<text x=\"" << num(f.px(g + 0.5)) << "\" y=\"" << num(f.py(0) + 16) << "\" text-anchor=\"middle\">"
          << groups[g] << "</text>\n";

    // Runs sharing a group and colour are placed side by side.
    std::map<std::string, std::vector<std::size_t>> slots;
    for (std::size_t i = 0; i < runs.size(); ++i) slots[runs[i].tag.substr(0, runs[i].tag.find('_'))].push_back(i);
    for (const auto& [group, members] : slots) {
        const auto git = std::find(groups.begin(), groups.end(), group);
        if (git == groups.end()) continue;
        const double g = static_cast<double>(git - groups.begin());
        const double width = 0.8 / static_cast<double>(members.size());
        for (std::size_t k = 0; k < members.size(); ++k) {
            const RunRecord& r = runs[members[k]];
            std::vector<double> v;
            for (const MetricsReport& m : r.folds)
                if (m.acc) v.push_back(*m.acc);
            if (v.empty()) continue;
            std::sort(v.begin(), v.end());
            auto q = [&](double p) {
                const double pos = p * static_cast<double>(v.size() - 1);
                const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
                const std::size_t hi = std::min(lo + 1, v.size() - 1);
                return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
            };
            const bool warped = r.tag.size() > 1 && r.tag.back() == 'w';
            const std::string c = warped ? color(1) : color(0);
            const double x0 = g + 0.1 + width * static_cast<double>(k), x1 = x0 + width * 0.8,
                         xm = (x0 + x1) / 2;
            o << "<g class=\"box\" stroke=\"" << c << "\">\n"
              << "<title>" << escape(r.label) << "</title>\n"
              << "<line x1=\"" << num(f.px(xm)) << "\" y1=\"" << num(f.py(v.front())) << "\" x2=\"" << num(f.px(xm))
              << "\" y2=\"" << num(f.py(v.back())) << "\"/>\n"
              << "<rect x=\"" << num(f.px(x0)) << "\" y=\"" << num(f.py(q(0.75))) << "\" width=\""
              << num(f.px(x1) - f.px(x0)) << "\" height=\"" << num(f.py(q(0.25)) - f.py(q(0.75)))
              << "\" fill=\"" << c << "\" fill-opacity=\"0.3\"/>\n"
              << "<line x1=\"" << num(f.px(x0)) << "\" y1=\"" << num(f.py(q(0.5))) << "\" x2=\"" << num(f.px(x1))
              << "\" y2=\"" << num(f.py(q(0.5))) << "\" stroke-width=\"2\"/>\n</g>\n";
        }
    }
    legend(o, {"spatial u", "spatial w"});
    o << "</svg>\n";
    return o.str();
}

std::vector<fs::path> write_report(const fs::path& results, const fs::path& out) {
    const std::vector<RunRecord> runs = load_runs(results);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::vector<fs::path> written{out};
    write_csv(out, merged_table(runs));
    const fs::path stem = out.parent_path() / out.stem();
    auto emit = [&](const std::string& suffix, const std::string& svg) {
        const fs::path p = stem.string() + suffix;
        write_file_atomic(p, svg);
        written.push_back(p);
    };
    emit("_accuracy.svg", accuracy_band_svg(runs));
    emit("_roc.svg", roc_overlay_svg(runs));
    if (runs.size() > 1) emit("_box.svg", box_plot_svg(runs));
    return written;
}

}  // namespace pdnet
