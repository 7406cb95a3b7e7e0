#include "pdnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "pdnet/rng.hpp"

namespace pdnet {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw UsageError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw UsageError("confusion expects binary values");
        if (y == 1) (p == 1 ? cm.tp : cm.fn)++;
        else (p == 1 ? cm.fp : cm.tn)++;
    }
    return cm;
}

namespace {

Metric ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw UsageError("metrics of an empty confusion matrix");
    MetricsReport r;
    r.cm = cm;
    r.acc = ratio(cm.tp + cm.tn, cm.total());
    r.sens = ratio(cm.tp, cm.tp + cm.fn);
    r.spec = ratio(cm.tn, cm.tn + cm.fp);
    r.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fn + cm.fp);
    if (r.sens && r.spec) r.balanced_acc = (*r.sens + *r.spec) / 2.0;
    return r;
}

std::string format_metric(const Metric& m, int decimals) {
    if (!m || std::isnan(*m)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, *m);
    return buf;
}

RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw UsageError("roc: score/label length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) {
        if (y == 1) ++pos;
        else if (y == 0) ++neg;
        else throw UsageError("roc expects binary labels");
    }
    if (pos == 0 || neg == 0) throw DataError("roc needs at least one sample of each class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    double area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        if (!std::isfinite(t)) throw NumericError("roc: non-finite score");
        std::size_t j = i;
        for (; j < order.size() && scores[order[j]] == t; ++j) (labels[order[j]] == 1 ? tp : fp)++;
        const RocPoint prev = roc.points.back();
        RocPoint p{static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, t};
        area += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        roc.points.push_back(p);
        i = j;
    }
    roc.auc = area;
    return roc;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldAssignment::members(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] == f) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] != f) out.push_back(i);
    return out;
}

FoldAssignment stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw UsageError("stratified folds need k >= 2");
    int max_label = 0;
    for (int y : labels) {
        if (y < 0) throw UsageError("labels must be non-negative");
        max_label = std::max(max_label, y);
    }
    FoldAssignment a{k, std::vector<std::size_t>(labels.size(), 0)};
    std::size_t dealer = 0;
    for (int c = 0; c <= max_label; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        if (members.empty()) continue;
        if (members.size() < k)
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                            " samples, fewer than k=" + std::to_string(k));
        std::mt19937_64 rng(derive_seed(seed, "stratify", static_cast<std::uint64_t>(c)));
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i : members) a.fold[i] = dealer++ % k;
    }
    return a;
}

// ---------------------------------------------------------------------------

MetricSummary summarize(std::span<const Metric> values) {
    MetricSummary s;
    double sum = 0.0;
    for (const Metric& v : values)
        if (v) {
            sum += *v;
            ++s.defined;
        }
    if (s.defined == 0) return {std::nan(""), std::nan(""), 0};
    s.mean = sum / static_cast<double>(s.defined);
    double sq = 0.0;
    for (const Metric& v : values)
        if (v) sq += (*v - s.mean) * (*v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.defined));
    return s;
}

std::string format_mean_std(const MetricSummary& s, int decimals) {
    return format_metric(s.mean, decimals) + " [" + format_metric(s.std, decimals) + "]";
}

MetricsReport evaluate(const Model& model, const LabeledDataset& data, std::vector<double>* scores_out) {
    const std::vector<double> scores = predict_scores(model, data);
    std::vector<int> pred;
    for (double s : scores) pred.push_back(s > 0.5 ? kPd : kControl);
    if (scores_out) *scores_out = scores;
    return metrics(confusion(pred, data.labels));
}

CrossValidationResult cross_validate(const LabeledDataset& data, const CrossValidationConfig& config,
                                     const FoldProgress& progress) {
    const FoldAssignment folds = stratified_folds(data.labels, config.folds, config.seed);
    CrossValidationResult result;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;

    for (std::size_t f = 0; f < config.folds; ++f) {
        const std::uint64_t fold_seed = derive_seed(config.seed, "fold", f);
        const std::vector<std::size_t> train_idx = folds.complement(f);
        const std::vector<std::size_t> test_idx = folds.members(f);
        const LabeledDataset train = data.subset(train_idx);
        const LabeledDataset test = data.subset(test_idx);

        TrainConfig tc = config.train;
        tc.seed = derive_seed(fold_seed, "train");
        EpochCallback cb;
        if (progress) cb = [&](const EpochStats& s) { progress(f, s); };
        FitResult fitted;
        try {
            fitted = fit(build_model(config.arch, derive_seed(fold_seed, "init")), train, tc, cb);
        } catch (const NumericError& e) {
            throw NumericError("fold " + std::to_string(f) + ": " + e.what());
        }

        FoldResult fr;
        fr.fold = f;
        fr.metrics = evaluate(fitted.model, test, &fr.scores);
        fr.history = std::move(fitted.history);
        fr.test_indices = test_idx;
        fr.model = std::move(fitted.model);
        pooled_scores.insert(pooled_scores.end(), fr.scores.begin(), fr.scores.end());
        pooled_labels.insert(pooled_labels.end(), test.labels.begin(), test.labels.end());
        result.folds.push_back(std::move(fr));
    }

    result.pooled_roc = roc_and_auc(pooled_scores, pooled_labels);
    auto collect = [&](Metric MetricsReport::*field) {
        std::vector<Metric> v;
        for (const FoldResult& fr : result.folds) v.push_back(fr.metrics.*field);
        return summarize(v);
    };
    result.acc = collect(&MetricsReport::acc);
    result.sens = collect(&MetricsReport::sens);
    result.spec = collect(&MetricsReport::spec);
    result.f1 = collect(&MetricsReport::f1);
    result.balanced_acc = collect(&MetricsReport::balanced_acc);
    return result;
}

}  // namespace pdnet
