#include "pdnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace pdnet {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

struct ConvGeometry {
    std::size_t channels, depth, height, width;
    std::size_t kernel;
    std::size_t out_d, out_h, out_w;
    std::array<std::size_t, 3> stride, pad;

    std::size_t patch() const { return channels * kernel * kernel * kernel; }
    std::size_t out_count() const { return out_d * out_h * out_w; }
};

ConvGeometry geometry(const Conv3D& layer, const Shape& input) {
    Shape out = layer.output_shape(input);
    return ConvGeometry{input[0], input[1], input[2], input[3], layer.kernel(),
                        out[1],   out[2],   out[3],   layer.stride, layer.padding};
}

// Valid output range [lo, hi) along one axis for kernel tap `tap` such that
// out*stride + tap - pad lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t stride,
                                                std::size_t tap, std::size_t pad,
                                                std::size_t extent) {
    const long long off = static_cast<long long>(tap) - static_cast<long long>(pad);
    const long long s = static_cast<long long>(stride);
    long long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long long hi = (static_cast<long long>(extent) - 1 - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    if (off > static_cast<long long>(extent) - 1) hi = 0;
    lo = std::min<long long>(lo, static_cast<long long>(out_extent));
    hi = std::clamp<long long>(hi, lo, static_cast<long long>(out_extent));
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Rows indexed by (c, u, v, w); columns by output voxel (z, y, x).
void im2col(const ConvGeometry& g, const float* in, float* cols) {
    const std::size_t n_out = g.out_count();
    const std::size_t P = g.kernel;
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const float* plane = in + c * g.depth * g.height * g.width;
        for (std::size_t u = 0; u < P; ++u) {
            auto [z_lo, z_hi] = valid_range(g.out_d, g.stride[0], u, g.pad[0], g.depth);
            for (std::size_t v = 0; v < P; ++v) {
                auto [y_lo, y_hi] = valid_range(g.out_h, g.stride[1], v, g.pad[1], g.height);
                for (std::size_t w = 0; w < P; ++w, ++row) {
                    auto [x_lo, x_hi] = valid_range(g.out_w, g.stride[2], w, g.pad[2], g.width);
                    float* dst = cols + row * n_out;
                    // zero only the padding margins
                    const std::size_t slab = g.out_h * g.out_w;
                    std::fill(dst, dst + z_lo * slab, 0.0f);
                    std::fill(dst + z_hi * slab, dst + n_out, 0.0f);
                    for (std::size_t z = z_lo; z < z_hi; ++z) {
                        const std::size_t iz = z * g.stride[0] + u - g.pad[0];
                        std::fill(dst + z * slab, dst + z * slab + y_lo * g.out_w, 0.0f);
                        std::fill(dst + z * slab + y_hi * g.out_w, dst + (z + 1) * slab, 0.0f);
                        for (std::size_t y = y_lo; y < y_hi; ++y) {
                            const std::size_t iy = y * g.stride[1] + v - g.pad[1];
                            const float* src = plane + (iz * g.height + iy) * g.width;
                            float* out = dst + (z * g.out_h + y) * g.out_w;
                            std::fill(out, out + x_lo, 0.0f);
                            std::fill(out + x_hi, out + g.out_w, 0.0f);
                            if (g.stride[2] == 1) {
                                if (x_hi > x_lo)
                                    std::memcpy(out + x_lo, src + x_lo + w - g.pad[2], (x_hi - x_lo) * sizeof(float));
                            } else {
                                for (std::size_t x = x_lo; x < x_hi; ++x)
                                    out[x] = src[x * g.stride[2] + w - g.pad[2]];
                            }
                        }
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const float* cols, float* in) {
    const std::size_t n_out = g.out_count();
    const std::size_t P = g.kernel;
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        float* plane = in + c * g.depth * g.height * g.width;
        for (std::size_t u = 0; u < P; ++u) {
            auto [z_lo, z_hi] = valid_range(g.out_d, g.stride[0], u, g.pad[0], g.depth);
            for (std::size_t v = 0; v < P; ++v) {
                auto [y_lo, y_hi] = valid_range(g.out_h, g.stride[1], v, g.pad[1], g.height);
                for (std::size_t w = 0; w < P; ++w, ++row) {
                    auto [x_lo, x_hi] = valid_range(g.out_w, g.stride[2], w, g.pad[2], g.width);
                    const float* src_row = cols + row * n_out;
                    for (std::size_t z = z_lo; z < z_hi; ++z) {
                        const std::size_t iz = z * g.stride[0] + u - g.pad[0];
                        for (std::size_t y = y_lo; y < y_hi; ++y) {
                            const std::size_t iy = y * g.stride[1] + v - g.pad[1];
                            float* dst = plane + (iz * g.height + iy) * g.width;
                            const float* src = src_row + (z * g.out_h + y) * g.out_w;
                            for (std::size_t x = x_lo; x < x_hi; ++x)
                                dst[x * g.stride[2] + w - g.pad[2]] += src[x];
                        }
                    }
                }
            }
        }
    }
}

// (K, C*P^3) matrix of spatially flipped filters.
RowMat flipped_filters(const Conv3D& layer) {
    const std::size_t K = layer.filters(), C = layer.in_channels(), P = layer.kernel();
    const std::size_t cube = P * P * P;
    RowMat m(K, C * cube);
    const float* w = layer.weights.raw();
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < C; ++c) {
            const float* src = w + (k * C + c) * cube;
            float* dst = m.data() + k * C * cube + c * cube;
            for (std::size_t i = 0; i < cube; ++i) dst[i] = src[cube - 1 - i];
        }
    return m;
}

std::vector<float>& scratch() {
    thread_local std::vector<float> buf;
    return buf;
}

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) throw UsageError(std::string(what) + ": expected shape " + a.str() + ", got " + b.str());
}

}  // namespace

// ---------------------------------------------------------------------------

void validate(const Conv3D& layer) {
    const Shape& ws = layer.weights.shape();
    if (ws.rank() != 5) throw UsageError("conv3d weights must be rank 5 (K,C,P,Q,R)");
    if (ws[2] != ws[3] || ws[3] != ws[4]) throw UsageError("conv3d kernels must be cubic");
    if (layer.bias.shape().rank() != 1 || layer.bias.size() != ws[0])
        throw UsageError("conv3d bias length must equal the filter count");
    for (std::size_t s : layer.stride)
        if (s == 0) throw UsageError("conv3d stride must be >= 1");
    if (layer.activation == Activation::softmax)
        throw UsageError("softmax is only valid on the output dense layer");
}

Shape Conv3D::output_shape(const Shape& input) const {
    validate(*this);
    if (input.rank() != 4) throw UsageError("conv3d input must be (C,D,H,W), got " + input.str());
    if (input[0] != in_channels())
        throw UsageError("conv3d expects " + std::to_string(in_channels()) + " channels, got " +
                         std::to_string(input[0]));
    std::vector<std::size_t> dims{filters()};
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t padded = input[a + 1] + 2 * padding[a];
        if (padded < kernel())
            throw UsageError("conv3d kernel " + std::to_string(kernel()) +
                             " larger than padded input " + input.str());
        dims.push_back((padded - kernel()) / stride[a] + 1);
    }
    return Shape(std::move(dims));
}

Tensor conv3d_linear(const Conv3D& layer, const Tensor& input, std::vector<float>* keep_cols) {
    const ConvGeometry g = geometry(layer, input.shape());
    const std::size_t K = layer.filters(), L = g.out_count(), R = g.patch();

    auto& cols = keep_cols ? *keep_cols : scratch();
    cols.resize(R * L);
    im2col(g, input.raw(), cols.data());

    Tensor out(Shape{K, g.out_d, g.out_h, g.out_w}, 0.0f);
    RowMap o(out.raw(), K, L);
    o.noalias() = flipped_filters(layer) * ConstRowMap(cols.data(), R, L);
    for (std::size_t k = 0; k < K; ++k) o.row(k).array() += layer.bias[k];
    return out;
}

Tensor conv3d_forward(const Conv3D& layer, const Tensor& input) {
    Tensor out = activation_forward(layer.activation, conv3d_linear(layer, input));
    require_finite(out, "conv3d_forward");
    return out;
}

LayerGrads conv3d_backward_linear(const Conv3D& layer, const Tensor& input, const Tensor& grad_preact,
                                  bool need_input_grad, const std::vector<float>* cached_cols) {
    const ConvGeometry g = geometry(layer, input.shape());
    const std::size_t K = layer.filters(), L = g.out_count(), R = g.patch();
    require_same(Shape{K, g.out_d, g.out_h, g.out_w}, grad_preact.shape(), "conv3d_backward grad_out");

    const float* colp = nullptr;
    if (cached_cols) {
        if (cached_cols->size() != R * L) throw UsageError("conv3d_backward: cached columns have the wrong size");
        colp = cached_cols->data();
    } else {
        auto& cols = scratch();
        cols.resize(R * L);
        im2col(g, input.raw(), cols.data());
        colp = cols.data();
    }
    ConstRowMap colm(colp, R, L);
    ConstRowMap grad(grad_preact.raw(), K, L);

    LayerGrads out;
    RowMat gw = grad * colm.transpose();
    out.weights = Tensor(layer.weights.shape(), 0.0f);
    const std::size_t cube = g.kernel * g.kernel * g.kernel;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < g.channels; ++c) {
            const float* src = gw.data() + k * R + c * cube;
            float* dst = out.weights.raw() + (k * g.channels + c) * cube;
            for (std::size_t i = 0; i < cube; ++i) dst[i] = src[cube - 1 - i];
        }

    out.bias = Tensor(Shape{K}, 0.0f);
    // plain loop: Eigen's vectorised sum depends on buffer alignment
    for (std::size_t k = 0; k < K; ++k) {
        const float* row = grad_preact.raw() + k * L;
        double acc = 0.0;
        for (std::size_t i = 0; i < L; ++i) acc += row[i];
        out.bias[k] = static_cast<float>(acc);
    }

    if (need_input_grad) {
        RowMat gcols = flipped_filters(layer).transpose() * grad;
        out.input = Tensor(input.shape(), 0.0f);
        col2im(g, gcols.data(), out.input.raw());
    }
    return out;
}

LayerGrads conv3d_backward(const Conv3D& layer, const Tensor& input, const Tensor& grad_out) {
    if (layer.activation == Activation::linear)
        return conv3d_backward_linear(layer, input, grad_out);
    const Tensor z = conv3d_linear(layer, input);
    return conv3d_backward_linear(layer, input, activation_backward(layer.activation, z, grad_out));
}

// ---------------------------------------------------------------------------

Shape MaxPool3D::output_shape(const Shape& input) const {
    if (block == 0) throw UsageError("max-pool block must be >= 1");
    if (input.rank() != 4) throw UsageError("max-pool input must be (C,D,H,W), got " + input.str());
    for (std::size_t a = 1; a < 4; ++a)
        if (input[a] < block)
            throw UsageError("max-pool block " + std::to_string(block) + " larger than input " +
                             input.str());
    return Shape{input[0], input[1] / block, input[2] / block, input[3] / block};
}

PoolResult maxpool3d_forward(const MaxPool3D& layer, const Tensor& input) {
    const Shape os = layer.output_shape(input.shape());
    const Shape& is = input.shape();
    const std::size_t M = layer.block;
    const std::size_t D = is[1], H = is[2], W = is[3];
    const std::size_t Do = os[1], Ho = os[2], Wo = os[3];

    PoolResult r{Tensor(os, 0.0f), ArgmaxMap{is, os, std::vector<std::uint32_t>(os.count())}};
    const float* in = input.raw();
    std::size_t o = 0;
    for (std::size_t c = 0; c < is[0]; ++c)
        for (std::size_t z = 0; z < Do; ++z)
            for (std::size_t y = 0; y < Ho; ++y)
                for (std::size_t x = 0; x < Wo; ++x, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::size_t best_i = 0;
                    bool first = true;
                    for (std::size_t dz = 0; dz < M; ++dz)
                        for (std::size_t dy = 0; dy < M; ++dy) {
                            const std::size_t row = ((c * D + z * M + dz) * H + y * M + dy) * W + x * M;
                            for (std::size_t dx = 0; dx < M; ++dx) {
                                const float v = in[row + dx];
                                if (first || v > best) {
                                    best = v;
                                    best_i = row + dx;
                                    first = false;
                                }
                            }
                        }
                    r.output[o] = best;
                    r.argmax.index[o] = static_cast<std::uint32_t>(best_i);
                }
    return r;
}

Tensor maxpool3d_backward(const ArgmaxMap& argmax, const Tensor& grad_out) {
    if (!(grad_out.shape() == argmax.output_shape) || argmax.index.size() != grad_out.size())
        throw UsageError("max-pool backward: argmax map of shape " + argmax.output_shape.str() +
                         " does not match gradient " + grad_out.shape().str());
    Tensor grad_in(argmax.input_shape, 0.0f);
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax.index[i]] += grad_out[i];
    return grad_in;
}

// ---------------------------------------------------------------------------

void validate(const Dense& layer) {
    if (layer.weights.shape().rank() != 2) throw UsageError("dense weights must be (out, in)");
    if (layer.bias.shape().rank() != 1 || layer.bias.size() != layer.units())
        throw UsageError("dense bias length must equal the unit count");
}

Tensor dense_linear(const Dense& layer, const Tensor& input) {
    validate(layer);
    if (input.size() != layer.fan_in())
        throw UsageError("dense layer expects " + std::to_string(layer.fan_in()) + " inputs, got " +
                         std::to_string(input.size()));
    Tensor out = layer.bias;
    VecMap(out.raw(), out.size()).noalias() +=
        ConstRowMap(layer.weights.raw(), layer.units(), layer.fan_in()) *
        ConstVecMap(input.raw(), input.size());
    return out;
}

Tensor dense_forward(const Dense& layer, const Tensor& input) {
    Tensor out = activation_forward(layer.activation, dense_linear(layer, input));
    require_finite(out, "dense_forward");
    return out;
}

LayerGrads dense_backward_linear(const Dense& layer, const Tensor& input, const Tensor& grad_preact,
                                 bool need_input_grad) {
    validate(layer);
    if (input.size() != layer.fan_in() || grad_preact.size() != layer.units())
        throw UsageError("dense_backward: input/gradient length mismatch");
    ConstVecMap x(input.raw(), input.size());
    ConstVecMap g(grad_preact.raw(), grad_preact.size());
    LayerGrads out;
    out.weights = Tensor(layer.weights.shape(), 0.0f);
    RowMap(out.weights.raw(), layer.units(), layer.fan_in()).noalias() = g * x.transpose();
    out.bias = grad_preact.reshaped(Shape{layer.units()});
    if (need_input_grad) {
        out.input = Tensor(input.shape(), 0.0f);
        VecMap(out.input.raw(), input.size()).noalias() =
            ConstRowMap(layer.weights.raw(), layer.units(), layer.fan_in()).transpose() * g;
    }
    return out;
}

LayerGrads dense_backward(const Dense& layer, const Tensor& input, const Tensor& grad_out) {
    if (layer.activation == Activation::linear) return dense_backward_linear(layer, input, grad_out);
    const Tensor z = dense_linear(layer, input);
    return dense_backward_linear(layer, input, activation_backward(layer.activation, z, grad_out));
}

// ---------------------------------------------------------------------------

float relu(float z) { return z > 0.0f ? z : 0.0f; }

float selu(float z) {
    return z >= 0.0f ? kSeluLambda * z : kSeluLambda * (kSeluAlpha * std::exp(z) - kSeluAlpha);
}

Tensor activation_forward(Activation kind, const Tensor& z) {
    Tensor out = z;
    auto v = out.data();
    switch (kind) {
    case Activation::linear:
        break;
    case Activation::relu:
        for (float& x : v) x = relu(x);
        break;
    case Activation::selu:
        for (float& x : v) x = selu(x);
        break;
    case Activation::softmax: {
        if (z.shape().rank() != 1) throw UsageError("softmax expects a vector, got " + z.shape().str());
        const float m = *std::max_element(v.begin(), v.end());
        double total = 0.0;
        for (float& x : v) {
            x = std::exp(x - m);
            total += x;
        }
        for (float& x : v) x = static_cast<float>(x / total);
        break;
    }
    }
    return out;
}

Tensor activation_backward(Activation kind, const Tensor& z, const Tensor& grad_out) {
    require_same(z.shape(), grad_out.shape(), "activation_backward");
    Tensor g = grad_out;
    auto gv = g.data();
    auto zv = z.data();
    switch (kind) {
    case Activation::linear:
        break;
    case Activation::relu:
        for (std::size_t i = 0; i < gv.size(); ++i)
            if (!(zv[i] > 0.0f)) gv[i] = 0.0f;
        break;
    case Activation::selu:
        for (std::size_t i = 0; i < gv.size(); ++i)
            gv[i] *= zv[i] >= 0.0f ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(zv[i]);
        break;
    case Activation::softmax:
        throw UsageError("softmax backward is fused with the loss; no standalone path");
    }
    return g;
}

// ---------------------------------------------------------------------------

void validate(const DropoutSpec& spec) {
    if (!(spec.p >= 0.0 && spec.p < 1.0))
        throw UsageError("dropout probability must lie in [0, 1), got " + std::to_string(spec.p));
}

std::array<double, 2> alpha_dropout_affine(double p) {
    const double sat = -static_cast<double>(kSeluLambda) * kSeluAlpha;
    const double q = 1.0 - p;
    const double a = 1.0 / std::sqrt(q + sat * sat * p * q);
    return {a, -a * p * sat};
}

DropoutResult dropout_forward(const DropoutSpec& spec, const Tensor& input, Mode mode,
                              std::uint64_t seed) {
    validate(spec);
    if (mode == Mode::infer || spec.p == 0.0) return {input, Tensor()};

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    DropoutResult r{Tensor(input.shape(), 0.0f), Tensor(input.shape(), 0.0f)};
    if (spec.kind == DropoutKind::standard) {
        const float keep_scale = static_cast<float>(1.0 / (1.0 - spec.p));
        for (std::size_t i = 0; i < input.size(); ++i) {
            const bool keep = unif(rng) >= spec.p;
            r.grad_scale[i] = keep ? keep_scale : 0.0f;
            r.output[i] = input[i] * r.grad_scale[i];
        }
    } else {
        const auto [a, b] = alpha_dropout_affine(spec.p);
        const double sat = -static_cast<double>(kSeluLambda) * kSeluAlpha;
        for (std::size_t i = 0; i < input.size(); ++i) {
            const bool keep = unif(rng) >= spec.p;
            const double x = keep ? input[i] : sat;
            r.output[i] = static_cast<float>(a * x + b);
            r.grad_scale[i] = keep ? static_cast<float>(a) : 0.0f;
        }
    }
    return r;
}

Tensor dropout_apply(const DropoutSpec& spec, const Tensor& input, Mode mode, std::uint64_t seed) {
    return dropout_forward(spec, input, mode, seed).output;
}

}  // namespace pdnet
