#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdnet/model.hpp"

namespace pdnet {

/// Label convention used throughout: 0 = control, 1 = PD (positive class).
inline constexpr int kControl = 0;
inline constexpr int kPd = 1;

/// In-memory cohort. Volumes are rank-3 (D, H, W).
struct LabeledDataset {
    std::vector<Tensor> volumes;
    std::vector<int> labels;
    std::vector<std::string> subject_ids;
    std::string provenance = "no_u";

    std::size_t size() const { return volumes.size(); }
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// ---------------------------------------------------------------------------
// Losses

enum class LossKind { cross_entropy, logcosh };

std::string to_string(LossKind kind);
LossKind loss_from_string(const std::string& s);  // "x-e"/"cross_entropy", "lc"/"logcosh"

inline constexpr double kProbabilityFloor = 1e-12;

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;        // (N, classes), softmax folded in
    std::size_t clamped = 0;   // probabilities raised to kProbabilityFloor before log
};

/// Mean over the batch of w_y * l(p_y) where l is -log p (cross-entropy) or
/// log cosh(p - 1) (log-cosh on the true-class residual). The returned
/// gradient is with respect to the pre-softmax logits.
LossResult loss_and_grad(LossKind kind, const Tensor& probs, std::span<const int> labels,
                         std::span<const double> class_weights);

enum class ClassWeighting { inverse_frequency, proportion };

/// inverse_frequency: w_c = N / (classes * N_c); proportion: w_c = classes * N_c / N.
/// Both have mean 1.
std::vector<double> class_weights(std::span<const std::size_t> counts,
                                  ClassWeighting mode = ClassWeighting::inverse_frequency);

// ---------------------------------------------------------------------------
// Optimisation

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config);

    /// One update of every tensor in `params` by the matching gradient.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

    const OptimizerConfig& config() const { return config_; }
    long steps() const { return t_; }

private:
    OptimizerConfig config_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

struct TrainConfig {
    int epochs = 60;
    int batch_size = 64;
    LossKind loss = LossKind::cross_entropy;
    OptimizerConfig optimizer;
    ClassWeighting weighting = ClassWeighting::inverse_frequency;
    std::optional<std::vector<double>> class_weights;  // overrides `weighting`
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // full training set, infer mode, after the epoch
};

struct FitResult {
    Model model;
    std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch training. Shuffles, dropout masks and updates derive from
/// config.seed only, so identical inputs give bit-identical parameters.
FitResult fit(Model model, const LabeledDataset& train, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Per-sample probabilities of the positive class (PD) in infer mode.
std::vector<double> predict_scores(const Model& model, const LabeledDataset& data);

/// Model input (1, D, H, W) for a rank-3 volume.
Tensor as_model_input(const Tensor& volume);

}  // namespace pdnet
