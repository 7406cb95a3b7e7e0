#include "pdnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pdnet/rng.hpp"

namespace pdnet {

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.provenance = provenance;
    for (std::size_t i : indices) {
        out.volumes.push_back(volumes.at(i));
        out.labels.push_back(labels.at(i));
        out.subject_ids.push_back(i < subject_ids.size() ? subject_ids[i] : std::to_string(i));
    }
    return out;
}

std::string to_string(LossKind kind) { return kind == LossKind::cross_entropy ? "x-e" : "lc"; }

LossKind loss_from_string(const std::string& s) {
    if (s == "x-e" || s == "xe" || s == "cross_entropy" || s == "cross-entropy") return LossKind::cross_entropy;
    if (s == "lc" || s == "logcosh") return LossKind::logcosh;
    throw UsageError("unknown loss '" + s + "' (x-e, lc)");
}

LossResult loss_and_grad(LossKind kind, const Tensor& probs, std::span<const int> labels,
                         std::span<const double> class_weights) {
    const Shape& s = probs.shape();
    if (s.rank() != 2) throw UsageError("loss expects probabilities of shape (N, classes)");
    const std::size_t n = s[0], k = s[1];
    if (labels.size() != n) throw UsageError("label count does not match batch size");
    if (class_weights.size() != k) throw UsageError("one class weight per class required");

    LossResult r{0.0, Tensor(s, 0.0f), 0};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw UsageError("label out of range");
        const float* p = probs.raw() + i * k;
        float* g = r.grad_logits.raw() + i * k;
        const double w = class_weights[y];
        const double py = p[y];
        if (kind == LossKind::cross_entropy) {
            double clamped = py;
            if (clamped < kProbabilityFloor) {
                clamped = kProbabilityFloor;
                ++r.clamped;
            }
            r.loss += -w * std::log(clamped);
            for (std::size_t j = 0; j < k; ++j)
                g[j] = static_cast<float>(w * (p[j] - (static_cast<int>(j) == y ? 1.0 : 0.0)) / n);
        } else {
            const double resid = py - 1.0;
            r.loss += w * std::log(std::cosh(resid));
            // d/dz_j of log cosh(p_y - 1) = tanh(p_y - 1) * p_y * (delta_yj - p_j)
            const double outer = w * std::tanh(resid) * py;
            for (std::size_t j = 0; j < k; ++j)
                g[j] = static_cast<float>(outer * ((static_cast<int>(j) == y ? 1.0 : 0.0) - p[j]) / n);
        }
    }
    r.loss /= static_cast<double>(n);
    return r;
}

std::vector<double> class_weights(std::span<const std::size_t> counts, ClassWeighting mode) {
    if (counts.empty()) throw UsageError("class_weights needs at least one class");
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const double k = static_cast<double>(counts.size());
    std::vector<double> w;
    for (std::size_t c : counts) {
        if (c == 0) throw DataError("class_weights: a class has no samples");
        w.push_back(mode == ClassWeighting::inverse_frequency ? total / (k * c) : k * c / total);
    }
    return w;
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate >= 0.0)) throw UsageError("learning rate must be >= 0");
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw UsageError("optimizer: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!(params[i]->shape() == grads[i].shape()))
            throw UsageError("optimizer: gradient shape " + grads[i].shape().str() + " does not match parameter " +
                             params[i]->shape().str());

    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            float* p = params[i]->raw();
            const float* g = grads[i].raw();
            for (std::size_t j = 0; j < grads[i].size(); ++j) p[j] = static_cast<float>(p[j] - lr * g[j]);
        }
        ++t_;
        return;
    }

    if (m_.empty()) {
        for (Tensor* p : params) {
            m_.emplace_back(p->shape(), 0.0f);
            v_.emplace_back(p->shape(), 0.0f);
        }
    }
    if (m_.size() != params.size()) throw UsageError("optimizer state belongs to a different model");
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i]->raw();
        float* m = m_[i].raw();
        float* v = v_[i].raw();
        const float* g = grads[i].raw();
        for (std::size_t j = 0; j < grads[i].size(); ++j) {
            m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g[j]);
            v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] = static_cast<float>(p[j] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
        }
    }
}

// ---------------------------------------------------------------------------

void validate(const TrainConfig& config) {
    if (config.epochs < 1) throw UsageError("epochs must be >= 1");
    if (config.batch_size < 1) throw UsageError("batch size must be >= 1");
    if (!(config.optimizer.learning_rate >= 0.0)) throw UsageError("learning rate must be >= 0");
    if (config.class_weights)
        for (double w : *config.class_weights)
            if (!(w > 0.0)) throw UsageError("class weights must be positive");
}

Tensor as_model_input(const Tensor& volume) {
    const Shape& s = volume.shape();
    if (s.rank() != 3) throw UsageError("volume must be rank 3 (D,H,W), got " + s.str());
    return volume.reshaped(Shape{1, s[0], s[1], s[2]});
}

std::vector<double> predict_scores(const Model& model, const LabeledDataset& data) {
    std::vector<double> scores;
    scores.reserve(data.size());
    for (const Tensor& v : data.volumes) {
        const Trace t = trace_forward(model, as_model_input(v), Mode::infer, 0);
        scores.push_back(t.probs[kPd]);
    }
    return scores;
}

namespace {

double accuracy(const Model& model, const LabeledDataset& data) {
    const std::vector<double> scores = predict_scores(model, data);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) hit += ((scores[i] > 0.5) ? kPd : kControl) == data.labels[i];
    return static_cast<double>(hit) / static_cast<double>(scores.size());
}

}  // namespace

FitResult fit(Model model, const LabeledDataset& train, const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    if (train.size() == 0) throw DataError("training set is empty");
    if (train.labels.size() != train.size()) throw DataError("training set labels do not match volumes");

    const std::size_t classes = model.spec.classes;
    std::vector<double> weights;
    if (config.class_weights) {
        weights = *config.class_weights;
        if (weights.size() != classes) throw UsageError("one class weight per class required");
    } else {
        std::vector<std::size_t> counts(classes, 0);
        for (int y : train.labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DataError("label out of range");
            ++counts[y];
        }
        weights = class_weights(counts, config.weighting);
    }

    FitResult result{std::move(model), {}};
    Optimizer opt(config.optimizer);
    std::vector<Tensor*> params = parameters(result.model);
    std::vector<Tensor> grads;
    for (Tensor* p : params) grads.emplace_back(p->shape(), 0.0f);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t n = std::min(batch, order.size() - start);
            for (Tensor& g : grads) std::fill(g.data().begin(), g.data().end(), 0.0f);

            double batch_loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t idx = order[start + b];
                const std::uint64_t sample_seed =
                    derive_seed(derive_seed(config.seed, "epoch", epoch), "sample", start + b);
                const Trace trace = trace_forward(result.model, as_model_input(train.volumes[idx]), Mode::train,
                                                  sample_seed);
                const int label = train.labels[idx];
                const LossResult lr = loss_and_grad(config.loss, trace.probs.reshaped(Shape{1, classes}),
                                                    std::span<const int>(&label, 1), weights);
                batch_loss += lr.loss;
                const Backprop bp = backward(result.model, trace, lr.grad_logits);
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    float* dst = grads[p].raw();
                    const float* src = bp.params[p].raw();
                    for (std::size_t j = 0; j < grads[p].size(); ++j) dst[j] += src[j];
                }
            }
            const float inv_n = 1.0f / static_cast<float>(n);
            for (Tensor& g : grads)
                for (float& v : g.data()) v *= inv_n;
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1));
            opt.step(params, grads);
            loss_sum += batch_loss;
        }

        EpochStats stats{epoch + 1, loss_sum / static_cast<double>(order.size()), accuracy(result.model, train)};
        for (const Tensor* p : params) require_finite(*p, "model parameters after update");
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

}  // namespace pdnet
