#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pdnet/tensor.hpp"

namespace pdnet {

enum class Activation { linear, relu, selu, softmax };

// SELU constants for the (0, 1) fixed point, at the precision usually quoted.
inline constexpr float kSeluAlpha = 1.6733f;
inline constexpr float kSeluLambda = 1.0507f;

enum class Mode { train, infer };

/// Gradients of one parameterised layer. `input` is empty when the caller
/// asked not to propagate to the layer input.
struct LayerGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

// ---------------------------------------------------------------------------
// 3D convolution

/// Filters of shape (K, C, P, P, P), one bias per filter.
///
/// The forward pass is a true convolution: the kernel is flipped along all
/// three spatial axes before being slid over the input, so
///   out[k](z,y,x) = sum_{c,u,v,w} W[k,c](P-1-u, P-1-v, P-1-w) * in[c](z*s+u-pad, ...)
/// followed by the bias and the activation.
struct Conv3D {
    Tensor weights;
    Tensor bias;
    std::array<std::size_t, 3> stride{1, 1, 1};   // (d, h, w)
    std::array<std::size_t, 3> padding{0, 0, 0};  // zero padding per side
    Activation activation = Activation::linear;

    std::size_t filters() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[1]; }
    std::size_t kernel() const { return weights.shape()[2]; }

    /// Throws UsageError on channel mismatch or an empty output.
    Shape output_shape(const Shape& input) const;
};

/// Validates the layer itself (cubic kernel, bias length, strides >= 1).
void validate(const Conv3D& layer);

/// Pre-activation W*V + b. When `keep_cols` is given the (C*P^3, out voxels)
/// patch matrix is left there for a later backward pass.
Tensor conv3d_linear(const Conv3D& layer, const Tensor& input, std::vector<float>* keep_cols = nullptr);
Tensor conv3d_forward(const Conv3D& layer, const Tensor& input);

/// `grad_out` is taken with respect to the activated output; the
/// pre-activation is recomputed when the activation is not linear.
LayerGrads conv3d_backward(const Conv3D& layer, const Tensor& input, const Tensor& grad_out);

/// Backward through the affine part only, given the pre-activation gradient.
LayerGrads conv3d_backward_linear(const Conv3D& layer, const Tensor& input,
                                  const Tensor& grad_preact, bool need_input_grad = true,
                                  const std::vector<float>* cached_cols = nullptr);

// ---------------------------------------------------------------------------
// 3D max pooling

/// Cubic M x M x M window with stride M. Trailing voxels that do not fill a
/// whole block are dropped.
struct MaxPool3D {
    std::size_t block = 2;

    Shape output_shape(const Shape& input) const;
};

/// Winning flat input index for every output voxel.
struct ArgmaxMap {
    Shape input_shape;
    Shape output_shape;
    std::vector<std::uint32_t> index;
};

struct PoolResult {
    Tensor output;
    ArgmaxMap argmax;
};

/// Ties resolve to the first index in (d, h, w) scan order.
PoolResult maxpool3d_forward(const MaxPool3D& layer, const Tensor& input);
Tensor maxpool3d_backward(const ArgmaxMap& argmax, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Fully connected

/// weights (out, in); any input whose element count equals `in` is
/// accepted and treated as a flat vector.
struct Dense {
    Tensor weights;
    Tensor bias;
    Activation activation = Activation::linear;

    std::size_t units() const { return weights.shape()[0]; }
    std::size_t fan_in() const { return weights.shape()[1]; }
};

void validate(const Dense& layer);

Tensor dense_linear(const Dense& layer, const Tensor& input);
Tensor dense_forward(const Dense& layer, const Tensor& input);
LayerGrads dense_backward(const Dense& layer, const Tensor& input, const Tensor& grad_out);
LayerGrads dense_backward_linear(const Dense& layer, const Tensor& input, const Tensor& grad_preact,
                                 bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Activations

/// softmax accepts rank-1 input only and subtracts the max logit first.
Tensor activation_forward(Activation kind, const Tensor& z);

/// `z` is the pre-activation. Softmax has no standalone backward: it is
/// fused with the loss (see training.hpp) and requesting it throws.
Tensor activation_backward(Activation kind, const Tensor& z, const Tensor& grad_out);

float relu(float z);
float selu(float z);

// ---------------------------------------------------------------------------
// Dropout

enum class DropoutKind { standard, alpha };

struct DropoutSpec {
    DropoutKind kind = DropoutKind::standard;
    double p = 0.0;  // drop probability, [0, 1)
};

void validate(const DropoutSpec& spec);

/// Output together with d(output)/d(input) per element (empty when the
/// layer is the identity, i.e. infer mode or p == 0).
struct DropoutResult {
    Tensor output;
    Tensor grad_scale;
};

/// Standard: inverted dropout, survivors scaled by 1/(1-p).
/// Alpha: dropped units set to -lambda*alpha, then y = a*x + b restores
/// zero mean / unit variance for unit-gaussian inputs.
DropoutResult dropout_forward(const DropoutSpec& spec, const Tensor& input, Mode mode,
                              std::uint64_t seed);
Tensor dropout_apply(const DropoutSpec& spec, const Tensor& input, Mode mode, std::uint64_t seed);

/// The (a, b) affine correction used by alpha dropout for drop rate p.
std::array<double, 2> alpha_dropout_affine(double p);

}  // namespace pdnet
