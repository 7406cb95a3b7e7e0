#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdnet/model.hpp"
#include "pdnet/training.hpp"

namespace pdnet {

/// Positive class is PD (label 1).
struct ConfusionMatrix {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

/// nullopt marks a 0/0 metric; it is rendered as "nan".
using Metric = std::optional<double>;

struct MetricsReport {
    ConfusionMatrix cm;
    Metric acc, sens, spec, f1, balanced_acc;
};

/// acc = (TP+TN)/total, sens = TP/(TP+FN), spec = TN/(TN+FP),
/// f1 = 2TP/(2TP+FN+FP), balanced = (sens+spec)/2.
MetricsReport metrics(const ConfusionMatrix& cm);

std::string format_metric(const Metric& m, int decimals = 3);

struct RocPoint {
    double fpr = 0.0;  // 1 - specificity
    double tpr = 0.0;  // sensitivity
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // (0,0) ... (1,1)
    double auc = 0.0;
};

/// Threshold sweep over the distinct scores (high to low); tied scores move
/// the curve in one diagonal step. AUC by the trapezoidal rule.
RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels);

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold;  // per sample

    std::vector<std::size_t> members(std::size_t f) const;
    std::vector<std::size_t> complement(std::size_t f) const;
};

/// Each class is shuffled by `seed` and dealt round-robin over the folds;
/// the dealer position carries over from one class to the next so fold
/// sizes stay within one of each other.
FoldAssignment stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;          // population standard deviation over folds
    std::size_t defined = 0;   // folds where the metric was defined
};

/// mean/std of the defined values; nan/nan when none is defined.
MetricSummary summarize(std::span<const Metric> values);

/// "0.941 [0.012]"
std::string format_mean_std(const MetricSummary& s, int decimals = 3);

struct FoldResult {
    std::size_t fold = 0;
    MetricsReport metrics;
    std::vector<EpochStats> history;
    std::vector<std::size_t> test_indices;
    std::vector<double> scores;  // P(PD) for test_indices
    Model model;
};

struct CrossValidationResult {
    std::vector<FoldResult> folds;
    RocCurve pooled_roc;
    MetricSummary acc, sens, spec, f1, balanced_acc;
};

struct CrossValidationConfig {
    ArchitectureSpec arch;
    TrainConfig train;
    std::size_t folds = 10;
    std::uint64_t seed = 0;
};

using FoldProgress = std::function<void(std::size_t fold, const EpochStats&)>;

/// Train on k-1 folds, evaluate the held-out fold in infer mode. Fold i
/// uses derive_seed(seed, "fold", i) for initialisation and training.
CrossValidationResult cross_validate(const LabeledDataset& data, const CrossValidationConfig& config,
                                     const FoldProgress& progress = {});

/// Held-out predictions of one trained model: P(PD) > 0.5 -> PD.
MetricsReport evaluate(const Model& model, const LabeledDataset& data, std::vector<double>* scores = nullptr);

}  // namespace pdnet
