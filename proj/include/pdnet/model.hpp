#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pdnet/layers.hpp"

namespace pdnet {

enum class LayerKind { conv, maxpool, dense, dropout };
enum class Family { relu, selu };

struct LayerDesc {
    LayerKind kind = LayerKind::conv;
    std::size_t filters = 0;  // conv
    std::size_t kernel = 0;   // conv
    std::size_t stride = 1;   // conv
    std::size_t padding = 0;  // conv
    std::size_t block = 0;    // maxpool
    std::size_t units = 0;    // dense
    DropoutSpec dropout;      // dropout
    Activation activation = Activation::linear;

    static LayerDesc conv(std::size_t filters, std::size_t kernel, std::size_t padding,
                          Activation act, std::size_t stride = 1);
    static LayerDesc pool(std::size_t block);
    static LayerDesc dense(std::size_t units, Activation act);
    static LayerDesc drop(DropoutKind kind, double p);
};

/// Layer stack plus the volume shape it consumes. The final layer is always
/// a dense layer with `classes` units and softmax activation.
struct ArchitectureSpec {
    std::string name;  // lenet53d, alexnet3d or custom
    Family family = Family::relu;
    std::vector<LayerDesc> layers;
    std::array<std::size_t, 3> input_shape{57, 69, 57};  // (D, H, W)
    std::size_t classes = 2;

    /// "alexnet3d" or "alexnet3d-selu".
    std::string full_name() const;
};

/// 2 conv (5^3) + 2 max-pool + 1 hidden dense. Widths are multiplied by
/// `width_scale` and rounded.
ArchitectureSpec lenet53d(Family family, std::array<std::size_t, 3> input_shape = {57, 69, 57},
                          double width_scale = 1.0);

/// 5 conv + 3 max-pool + 2 hidden dense with dropout on each hidden dense.
ArchitectureSpec alexnet3d(Family family, std::array<std::size_t, 3> input_shape = {57, 69, 57},
                           double width_scale = 1.0);

/// Accepts "lenet53d", "alexnet3d" and their "-selu" suffixed variants.
ArchitectureSpec architecture_by_name(const std::string& name,
                                      std::array<std::size_t, 3> input_shape, double width_scale = 1.0);

/// Activation shape after every layer (index 0 is the input). Throws
/// UsageError if any layer would produce an empty tensor or if the named
/// architecture's layer counts are wrong.
std::vector<Shape> propagate_shapes(const ArchitectureSpec& spec);

std::string spec_to_text(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_text(const std::string& text);

using Layer = std::variant<Conv3D, MaxPool3D, Dense, DropoutSpec>;

struct Model {
    ArchitectureSpec spec;
    std::vector<Layer> layers;
    std::uint64_t seed = 0;
};

/// He-normal weights (variance 2/fan_in) for the ReLU family, LeCun-normal
/// (1/fan_in) for SELU; zero biases.
Model build_model(const ArchitectureSpec& spec, std::uint64_t seed);

/// Weights then bias for every parameterised layer, in layer order.
std::vector<Tensor*> parameters(Model& model);
std::vector<const Tensor*> parameters(const Model& model);

std::size_t count_params(const Model& model);

/// Closed-form parameter count from the spec alone.
std::size_t count_params(const ArchitectureSpec& spec);

/// Everything the backward pass needs from one forward pass of one sample.
struct Trace {
    struct Cache {
        Tensor input;
        Tensor preact;       // conv / dense
        ArgmaxMap argmax;    // maxpool
        Tensor drop_scale;   // dropout (empty: identity)
        std::vector<float> cols;  // conv patch matrix, kept for train-mode traces
    };
    std::vector<Cache> layers;
    Tensor logits;
    Tensor probs;
};

/// `sample` is (1, D, H, W). Dropout masks are seeded per layer from `seed`.
Trace trace_forward(const Model& model, const Tensor& sample, Mode mode, std::uint64_t seed);

struct Backprop {
    std::vector<Tensor> params;  // aligned with parameters(model)
    Tensor input;                // empty unless requested
};

Backprop backward(const Model& model, const Trace& trace, const Tensor& grad_logits,
                  bool need_input_grad = false);

/// batch (N, 1, D, H, W) -> class probabilities (N, classes).
Tensor forward(const Model& model, const Tensor& batch, Mode mode, std::uint64_t seed);

/// The n-th (1, D, H, W) sample of a batch.
Tensor batch_item(const Tensor& batch, std::size_t n);

}  // namespace pdnet
