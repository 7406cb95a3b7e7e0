// Independent reference implementations used by the unit tests and the
// acceptance suite. Everything here is deliberately naive.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pdnet/layers.hpp"
#include "pdnet/model.hpp"
#include "pdnet/training.hpp"

namespace oracle {

using pdnet::Shape;
using pdnet::Tensor;

inline Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(s, 0.0f);
    for (float& v : t.data()) v = static_cast<float>(u(rng));
    return t;
}

// Direct seven-loop convolution with the kernel flip written out, double
// accumulation, zero outside the input. Linear (no activation).
inline std::vector<double> conv3d(const pdnet::Conv3D& L, const Tensor& in) {
    const std::size_t K = L.weights.shape()[0], C = L.weights.shape()[1], P = L.weights.shape()[2];
    const long D = static_cast<long>(in.shape()[1]), H = static_cast<long>(in.shape()[2]),
               W = static_cast<long>(in.shape()[3]);
    const long s0 = static_cast<long>(L.stride[0]), s1 = static_cast<long>(L.stride[1]),
               s2 = static_cast<long>(L.stride[2]);
    const long p0 = static_cast<long>(L.padding[0]), p1 = static_cast<long>(L.padding[1]),
               p2 = static_cast<long>(L.padding[2]);
    const long Pl = static_cast<long>(P);
    const long OD = (D + 2 * p0 - Pl) / s0 + 1, OH = (H + 2 * p1 - Pl) / s1 + 1, OW = (W + 2 * p2 - Pl) / s2 + 1;
    auto w_at = [&](std::size_t k, std::size_t c, long a, long b, long d) {
        return static_cast<double>(L.weights[(((k * C + c) * P + a) * P + b) * P + d]);
    };
    auto in_at = [&](std::size_t c, long z, long y, long x) {
        if (z < 0 || y < 0 || x < 0 || z >= D || y >= H || x >= W) return 0.0;
        return static_cast<double>(in[((c * D + z) * H + y) * W + x]);
    };
    std::vector<double> out;
    for (std::size_t k = 0; k < K; ++k)
        for (long z = 0; z < OD; ++z)
            for (long y = 0; y < OH; ++y)
                for (long x = 0; x < OW; ++x) {
                    double acc = L.bias[k];
                    for (std::size_t c = 0; c < C; ++c)
                        for (long u = 0; u < Pl; ++u)
                            for (long v = 0; v < Pl; ++v)
                                for (long w = 0; w < Pl; ++w)
                                    acc += w_at(k, c, Pl - 1 - u, Pl - 1 - v, Pl - 1 - w) *
                                           in_at(c, z * s0 + u - p0, y * s1 + v - p1, x * s2 + w - p2);
                    out.push_back(acc);
                }
    return out;
}

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline std::vector<double> as_doubles(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Central differences of `f` with respect to every element of `x`.
inline std::vector<double> numeric_gradient(Tensor& x, const std::function<double()>& f, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float keep = x[i];
        x[i] = static_cast<float>(keep + h);
        const double up = f();
        x[i] = static_cast<float>(keep - h);
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Projection <r, t> in double, the scalar probe used for layer checks.
inline double dot(const std::vector<double>& r, const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += r[i] * static_cast<double>(t[i]);
    return s;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> r(n);
    for (double& v : r) v = g(rng);
    return r;
}

// Fraction of (PD, control) pairs ranked correctly, ties counted one half.
inline double mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j)
            if (labels[i] == 1 && labels[j] == 0) {
                ++pairs;
                if (scores[i] > scores[j]) good += 1.0;
                else if (scores[i] == scores[j]) good += 0.5;
            }
    return good / static_cast<double>(pairs);
}

// Mean of the k largest values found by full sort.
inline double top_mean_sorted(std::vector<float> v, std::size_t k) {
    std::sort(v.begin(), v.end(), std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += v[i];
    return s / static_cast<double>(k);
}

// Tiny model for end-to-end checks: conv(2 x 3^3, selu) - pool 2 - dense 2 softmax on 6^3 input.
inline pdnet::ArchitectureSpec tiny_spec(pdnet::Activation conv_act = pdnet::Activation::selu) {
    pdnet::ArchitectureSpec s;
    s.name = "tiny";
    s.input_shape = {6, 6, 6};
    s.layers = {pdnet::LayerDesc::conv(2, 3, 0, conv_act), pdnet::LayerDesc::pool(2),
                pdnet::LayerDesc::dense(2, pdnet::Activation::softmax)};
    return s;
}

// Weighted mean loss over a batch, computed sample by sample as in training.
inline double batch_loss(const pdnet::Model& m, const std::vector<Tensor>& xs, const std::vector<int>& ys,
                         pdnet::LossKind kind, const std::vector<double>& w) {
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const pdnet::Trace t = pdnet::trace_forward(m, pdnet::as_model_input(xs[i]), pdnet::Mode::infer, 0);
        total += pdnet::loss_and_grad(kind, t.probs.reshaped(Shape{1, 2}), std::span<const int>(&ys[i], 1), w).loss;
    }
    return total / static_cast<double>(xs.size());
}

}  // namespace oracle
