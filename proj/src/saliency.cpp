#include "pdnet/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "pdnet/training.hpp"

namespace pdnet {

Tensor input_gradient(const Model& model, const Tensor& volume, std::span<const double> logit_weights) {
    if (logit_weights.size() != model.spec.classes) throw UsageError("one logit weight per class required");
    const Trace trace = trace_forward(model, as_model_input(volume), Mode::infer, 0);
    Tensor seed(Shape{model.spec.classes}, 0.0f);
    for (std::size_t j = 0; j < logit_weights.size(); ++j) seed[j] = static_cast<float>(logit_weights[j]);
    Tensor g = backward(model, trace, seed, true).input.reshaped(volume.shape());
    if (!g.all_finite()) throw NumericError("non-finite saliency gradient");
    return g;
}

Tensor saliency_map(const Model& model, const Tensor& volume, int target_class) {
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= model.spec.classes)
        throw UsageError("target class must be 0 or 1");
    std::vector<double> w(model.spec.classes, 0.0);
    w[target_class] = 1.0;
    Tensor g = input_gradient(model, volume, w);
    for (float& v : g.data()) v = std::abs(v);
    return g;
}

Tensor saliency_projection(const Tensor& map) {
    const Shape& s = map.shape();
    if (s.rank() != 3) throw UsageError("saliency projection expects a (D,H,W) map");
    Tensor out(Shape{s[1], s[2]}, 0.0f);
    const std::size_t plane = s[1] * s[2];
    std::copy(map.raw(), map.raw() + plane, out.raw());
    for (std::size_t z = 1; z < s[0]; ++z)
        for (std::size_t i = 0; i < plane; ++i) out[i] = std::max(out[i], map[z * plane + i]);
    return out;
}

std::string encode_pgm(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.rank() != 2) throw UsageError("PGM export expects a rank-2 image");
    const double hi = tensor_reduce(image, Reduction::max);
    std::string out = "P5\n" + std::to_string(s[1]) + " " + std::to_string(s[0]) + "\n255\n";
    for (float v : image.data()) {
        const double scaled = hi > 0 ? std::clamp(v / hi, 0.0, 1.0) * 255.0 : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
    }
    return out;
}

}  // namespace pdnet
