#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pdnet/layers.hpp"

using namespace pdnet;

namespace {

Conv3D random_conv(std::mt19937_64& rng, std::size_t K, std::size_t C, std::size_t P, std::size_t stride,
                   std::size_t pad, Activation act = Activation::linear) {
    return Conv3D{oracle::random_tensor(Shape{K, C, P, P, P}, rng), oracle::random_tensor(Shape{K}, rng),
                  {stride, stride, stride}, {pad, pad, pad}, act};
}

}  // namespace

TEST_CASE("conv3d delta kernel and bias-only layers") {
    std::mt19937_64 rng(10);
    const Tensor in = oracle::random_tensor(Shape{1, 4, 5, 6}, rng);
    Conv3D delta{Tensor(Shape{1, 1, 1, 1, 1}, 1.0f), Tensor(Shape{1}, 0.0f)};
    CHECK(conv3d_forward(delta, in) == in);

    Conv3D bias_only{Tensor(Shape{2, 1, 3, 3, 3}, 0.0f), Tensor(Shape{2}, {2.5f, -1.0f})};
    const Tensor out = conv3d_forward(bias_only, in);
    CHECK(out.shape() == Shape{2, 2, 3, 4});
    for (std::size_t i = 0; i < 24; ++i) CHECK(out[i] == 2.5f);
    for (std::size_t i = 24; i < 48; ++i) CHECK(out[i] == -1.0f);
}

TEST_CASE("conv3d uses the flipped kernel") {
    // 3-tap kernel along x with weights (1,2,3): out(x) = 3*in(x) + 2*in(x+1) + 1*in(x+2).
    Conv3D layer{Tensor(Shape{1, 1, 3, 3, 3}, 0.0f), Tensor(Shape{1}, 0.0f)};
    // place the taps on the centre row (u = v = 1) of a 3^3 kernel
    layer.weights[(1 * 3 + 1) * 3 + 0] = 1.0f;
    layer.weights[(1 * 3 + 1) * 3 + 1] = 2.0f;
    layer.weights[(1 * 3 + 1) * 3 + 2] = 3.0f;
    Tensor in(Shape{1, 3, 3, 5}, 0.0f);
    for (std::size_t x = 0; x < 5; ++x) in[(1 * 3 + 1) * 5 + x] = static_cast<float>(x + 1);
    const Tensor out = conv3d_forward(layer, in);
    REQUIRE(out.shape() == Shape{1, 1, 1, 3});
    CHECK(out[0] == doctest::Approx(3 * 1 + 2 * 2 + 1 * 3));
    CHECK(out[1] == doctest::Approx(3 * 2 + 2 * 3 + 1 * 4));
    CHECK(out[2] == doctest::Approx(3 * 3 + 2 * 4 + 1 * 5));
}

TEST_CASE("conv3d matches the loop oracle on a 4^3 single-channel case") {
    std::mt19937_64 rng(11);
    const Conv3D layer = random_conv(rng, 1, 1, 3, 1, 0);
    const Tensor in = oracle::random_tensor(Shape{1, 4, 4, 4}, rng);
    const Tensor out = conv3d_forward(layer, in);
    const std::vector<double> ref = oracle::conv3d(layer, in);
    REQUIRE(out.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out[i] - ref[i]) <= 1e-5);
}

TEST_CASE("conv3d matches the loop oracle over strides and padding") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 40; ++trial) {
        std::uniform_int_distribution<std::size_t> ext(3, 6), ker(1, 3), st(1, 2), pd(0, 1), ch(1, 3);
        const std::size_t P = ker(rng), C = ch(rng);
        const Conv3D layer = random_conv(rng, ch(rng), C, P, st(rng), pd(rng));
        const Tensor in = oracle::random_tensor(Shape{C, ext(rng), ext(rng), ext(rng)}, rng);
        const Tensor out = conv3d_forward(layer, in);
        const std::vector<double> ref = oracle::conv3d(layer, in);
        REQUIRE(out.size() == ref.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(out[i] - ref[i]));
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("conv3d shape errors") {
    std::mt19937_64 rng(13);
    const Conv3D layer = random_conv(rng, 2, 2, 3, 1, 0);
    CHECK_THROWS_AS(conv3d_forward(layer, Tensor(Shape{1, 4, 4, 4}, 0.0f)), UsageError);
    CHECK_THROWS_AS(conv3d_forward(layer, Tensor(Shape{2, 2, 4, 4}, 0.0f)), UsageError);
    Conv3D bad = layer;
    bad.weights = Tensor(Shape{2, 2, 3, 3, 2}, 0.0f);
    CHECK_THROWS_AS(validate(bad), UsageError);
}

TEST_CASE("conv3d backward trivial cases") {
    std::mt19937_64 rng(14);
    const Conv3D layer = random_conv(rng, 2, 1, 3, 1, 1);
    const Tensor in = oracle::random_tensor(Shape{1, 4, 4, 4}, rng);
    const LayerGrads z = conv3d_backward(layer, in, Tensor(Shape{2, 4, 4, 4}, 0.0f));
    for (const Tensor* t : {&z.input, &z.weights, &z.bias})
        for (float v : t->data()) CHECK(v == 0.0f);

    Conv3D delta{Tensor(Shape{1, 1, 1, 1, 1}, 1.0f), Tensor(Shape{1}, 0.0f)};
    const Tensor g = oracle::random_tensor(Shape{1, 4, 4, 4}, rng);
    CHECK(conv3d_backward(delta, in, g).input == g);
}

TEST_CASE("conv3d backward matches finite differences") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> st(1, 2), pd(0, 1);
        Conv3D layer = random_conv(rng, 2, 2, 3, st(rng), pd(rng), Activation::selu);
        Tensor in = oracle::random_tensor(Shape{2, 5, 4, 5}, rng);
        const Tensor out = conv3d_forward(layer, in);
        const std::vector<double> r = oracle::random_vector(out.size(), rng);
        Tensor rt(out.shape(), 0.0f);
        for (std::size_t i = 0; i < r.size(); ++i) rt[i] = static_cast<float>(r[i]);
        const LayerGrads g = conv3d_backward(layer, in, rt);
        auto f = [&] { return oracle::dot(r, conv3d_forward(layer, in)); };
        CHECK(oracle::relative_error(oracle::numeric_gradient(in, f, 1e-3), oracle::as_doubles(g.input)) <= 1e-3);
        CHECK(oracle::relative_error(oracle::numeric_gradient(layer.weights, f, 1e-3), oracle::as_doubles(g.weights)) <= 1e-3);
        CHECK(oracle::relative_error(oracle::numeric_gradient(layer.bias, f, 1e-3), oracle::as_doubles(g.bias)) <= 1e-3);
    }
}

TEST_CASE("cached patch matrix gives the same gradients") {
    std::mt19937_64 rng(16);
    const Conv3D layer = random_conv(rng, 3, 2, 3, 1, 1);
    const Tensor in = oracle::random_tensor(Shape{2, 4, 5, 6}, rng);
    std::vector<float> cols;
    const Tensor z = conv3d_linear(layer, in, &cols);
    const Tensor g = oracle::random_tensor(z.shape(), rng);
    const LayerGrads a = conv3d_backward_linear(layer, in, g, true, &cols);
    const LayerGrads b = conv3d_backward_linear(layer, in, g, true);
    CHECK(a.input == b.input);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
}

TEST_CASE("maxpool forward") {
    std::mt19937_64 rng(20);
    const Tensor in = oracle::random_tensor(Shape{2, 3, 4, 5}, rng);
    CHECK(maxpool3d_forward(MaxPool3D{1}, in).output == in);
    const PoolResult c = maxpool3d_forward(MaxPool3D{2}, Tensor(Shape{1, 4, 4, 4}, 3.0f));
    for (float v : c.output.data()) CHECK(v == 3.0f);

    Tensor ramp(Shape{1, 4, 4, 4}, 0.0f);
    for (std::size_t i = 0; i < 64; ++i) ramp[i] = static_cast<float>(i);
    const PoolResult r = maxpool3d_forward(MaxPool3D{2}, ramp);
    REQUIRE(r.output.shape() == Shape{1, 2, 2, 2});
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) {
                float best = -1;
                for (std::size_t a = 0; a < 2; ++a)
                    for (std::size_t b = 0; b < 2; ++b)
                        for (std::size_t c = 0; c < 2; ++c)
                            best = std::max(best, ramp[((2 * z + a) * 4 + 2 * y + b) * 4 + 2 * x + c]);
                CHECK(r.output[(z * 2 + y) * 2 + x] == best);
            }
}

TEST_CASE("maxpool truncates remainders and breaks ties by scan order") {
    const PoolResult r = maxpool3d_forward(MaxPool3D{2}, Tensor(Shape{1, 5, 5, 3}, 1.0f));
    CHECK(r.output.shape() == Shape{1, 2, 2, 1});
    CHECK(r.argmax.index[0] == 0);
    CHECK_THROWS_AS(maxpool3d_forward(MaxPool3D{4}, Tensor(Shape{1, 3, 8, 8}, 0.0f)), UsageError);
}

TEST_CASE("maxpool backward") {
    std::mt19937_64 rng(21);
    const Tensor in = oracle::random_tensor(Shape{1, 4, 4, 4}, rng);
    const PoolResult r = maxpool3d_forward(MaxPool3D{2}, in);
    const Tensor zero_grad = maxpool3d_backward(r.argmax, Tensor(r.output.shape(), 0.0f));
    for (float v : zero_grad.data()) CHECK(v == 0.0f);
    const PoolResult id = maxpool3d_forward(MaxPool3D{1}, in);
    const Tensor g = oracle::random_tensor(in.shape(), rng);
    CHECK(maxpool3d_backward(id.argmax, g) == g);
    CHECK_THROWS_AS(maxpool3d_backward(r.argmax, Tensor(Shape{1, 3, 2, 2}, 0.0f)), UsageError);
}

TEST_CASE("maxpool backward matches finite differences away from ties") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        // distinct values 0.01 apart, so a 1e-3 step never changes a winner
        Tensor in(Shape{2, 4, 5, 4}, 0.0f);
        std::vector<float> vals(in.size());
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01f * static_cast<float>(i);
        std::shuffle(vals.begin(), vals.end(), rng);
        std::copy(vals.begin(), vals.end(), in.raw());
        const PoolResult r = maxpool3d_forward(MaxPool3D{2}, in);
        const std::vector<double> w = oracle::random_vector(r.output.size(), rng);
        Tensor wt(r.output.shape(), 0.0f);
        for (std::size_t i = 0; i < w.size(); ++i) wt[i] = static_cast<float>(w[i]);
        const Tensor g = maxpool3d_backward(r.argmax, wt);
        auto f = [&] { return oracle::dot(w, maxpool3d_forward(MaxPool3D{2}, in).output); };
        CHECK(oracle::relative_error(oracle::numeric_gradient(in, f, 1e-3), oracle::as_doubles(g)) <= 1e-3);
    }
}

TEST_CASE("dense forward") {
    Dense id{Tensor(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor(Shape{3}, 0.0f)};
    const Tensor x(Shape{3}, {0.5f, -2.0f, 4.0f});
    CHECK(dense_forward(id, x) == x);

    Dense b{Tensor(Shape{2, 3}, 0.7f), Tensor(Shape{2}, {-1.0f, 2.0f}), Activation::relu};
    const Tensor y = dense_forward(b, Tensor(Shape{3}, 0.0f));
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 2.0f);

    std::mt19937_64 rng(30);
    Dense r{oracle::random_tensor(Shape{2, 3}, rng), oracle::random_tensor(Shape{2}, rng)};
    const Tensor in = oracle::random_tensor(Shape{3}, rng);
    const Tensor out = dense_forward(r, in);
    for (std::size_t o = 0; o < 2; ++o) {
        double acc = r.bias[o];
        for (std::size_t i = 0; i < 3; ++i) acc += double(r.weights[o * 3 + i]) * in[i];
        CHECK(std::abs(out[o] - acc) <= 1e-6);
    }
    CHECK_THROWS_AS(dense_forward(r, Tensor(Shape{4}, 0.0f)), UsageError);
}

TEST_CASE("dense backward") {
    std::mt19937_64 rng(31);
    Dense id{Tensor(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor(Shape{3}, 0.0f)};
    const Tensor g = oracle::random_tensor(Shape{3}, rng);
    CHECK(dense_backward(id, oracle::random_tensor(Shape{3}, rng), g).input == g);
    const LayerGrads z = dense_backward(id, g, Tensor(Shape{3}, 0.0f));
    for (float v : z.weights.data()) CHECK(v == 0.0f);

    for (int trial = 0; trial < 10; ++trial) {
        Dense layer{oracle::random_tensor(Shape{4, 6}, rng), oracle::random_tensor(Shape{4}, rng), Activation::selu};
        Tensor in = oracle::random_tensor(Shape{6}, rng);
        const std::vector<double> r = oracle::random_vector(4, rng);
        Tensor rt(Shape{4}, 0.0f);
        for (std::size_t i = 0; i < 4; ++i) rt[i] = static_cast<float>(r[i]);
        const LayerGrads lg = dense_backward(layer, in, rt);
        auto f = [&] { return oracle::dot(r, dense_forward(layer, in)); };
        CHECK(oracle::relative_error(oracle::numeric_gradient(in, f, 1e-3), oracle::as_doubles(lg.input)) <= 1e-3);
        CHECK(oracle::relative_error(oracle::numeric_gradient(layer.weights, f, 1e-3), oracle::as_doubles(lg.weights)) <= 1e-3);
        CHECK(oracle::relative_error(oracle::numeric_gradient(layer.bias, f, 1e-3), oracle::as_doubles(lg.bias)) <= 1e-3);
    }
}

TEST_CASE("activation values") {
    CHECK(relu(-1.0f) == 0.0f);
    CHECK(relu(2.0f) == 2.0f);
    CHECK(selu(0.0f) == 0.0f);
    CHECK(selu(-50.0f) == doctest::Approx(-1.7581).epsilon(1e-4));
    CHECK(selu(1.0f) == doctest::Approx(1.0507));
    const Tensor p = activation_forward(Activation::softmax, Tensor(Shape{2}, {0.3f, 0.3f}));
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
    // large logits stay finite thanks to the max shift
    const Tensor big = activation_forward(Activation::softmax, Tensor(Shape{3}, {1000.0f, 999.0f, -1000.0f}));
    CHECK(big.all_finite());
    CHECK(big[0] + big[1] + big[2] == doctest::Approx(1.0));
    CHECK_THROWS_AS(activation_forward(Activation::softmax, Tensor(Shape{2, 2}, 0.0f)), UsageError);
}

TEST_CASE("softmax outputs lie in (0,1) and sum to one") {
    std::mt19937_64 rng(40);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor p = activation_forward(Activation::softmax, oracle::random_tensor(Shape{5}, rng, -10, 10));
        double s = 0.0;
        for (float v : p.data()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("activation backward") {
    const Tensor g(Shape{2}, {0.7f, -1.3f});
    const Tensor r = activation_backward(Activation::relu, Tensor(Shape{2}, {5.0f, -5.0f}), g);
    CHECK(r[0] == 0.7f);
    CHECK(r[1] == 0.0f);
    const Tensor s = activation_backward(Activation::selu, Tensor(Shape{1}, {1e-6f}), Tensor(Shape{1}, {2.0f}));
    CHECK(s[0] == doctest::Approx(2.0 * 1.0507));
    CHECK_THROWS_AS(activation_backward(Activation::softmax, g, g), UsageError);

    std::mt19937_64 rng(41);
    for (Activation a : {Activation::relu, Activation::selu}) {
        Tensor z = oracle::random_tensor(Shape{40}, rng, -3, 3);
        for (float& v : z.data())
            if (std::abs(v) < 0.05f) v = 0.5f;  // stay off the kink
        const std::vector<double> w = oracle::random_vector(40, rng);
        Tensor wt(Shape{40}, 0.0f);
        for (std::size_t i = 0; i < 40; ++i) wt[i] = static_cast<float>(w[i]);
        const Tensor gz = activation_backward(a, z, wt);
        auto f = [&] { return oracle::dot(w, activation_forward(a, z)); };
        CHECK(oracle::relative_error(oracle::numeric_gradient(z, f, 1e-3), oracle::as_doubles(gz)) <= 1e-3);
    }
}

TEST_CASE("SELU keeps a deep dense stack near zero mean and unit variance") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t width = 64, samples = 10000;
    std::vector<Dense> stack;
    for (int l = 0; l < 10; ++l) {
        Dense d{Tensor(Shape{width, width}, 0.0f), Tensor(Shape{width}, 0.0f), Activation::selu};
        for (float& w : d.weights.data()) w = static_cast<float>(g(rng) / std::sqrt(double(width)));
        stack.push_back(std::move(d));
    }
    double sum = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        Tensor x(Shape{width}, 0.0f);
        for (float& v : x.data()) v = static_cast<float>(g(rng));
        for (const Dense& d : stack) x = dense_forward(d, x);
        for (float v : x.data()) {
            sum += v;
            sq += double(v) * v;
        }
    }
    const double n = double(samples * width), mean = sum / n, var = sq / n - mean * mean;
    CHECK(std::abs(mean) <= 0.1);
    CHECK(var >= 0.8);
    CHECK(var <= 1.2);
}

TEST_CASE("dropout") {
    std::mt19937_64 rng(50);
    const Tensor x = oracle::random_tensor(Shape{20}, rng);
    for (Mode m : {Mode::train, Mode::infer}) CHECK(dropout_apply({DropoutKind::standard, 0.0}, x, m, 1) == x);
    CHECK(dropout_apply({DropoutKind::standard, 0.5}, x, Mode::infer, 1) == x);
    CHECK(dropout_apply({DropoutKind::alpha, 0.3}, x, Mode::infer, 1) == x);
    CHECK_THROWS_AS(validate(DropoutSpec{DropoutKind::standard, 1.0}), UsageError);
    CHECK_THROWS_AS(validate(DropoutSpec{DropoutKind::standard, -0.1}), UsageError);
    CHECK(dropout_apply({DropoutKind::standard, 0.5}, x, Mode::train, 7) ==
          dropout_apply({DropoutKind::standard, 0.5}, x, Mode::train, 7));
}

TEST_CASE("standard dropout is unbiased") {
    const std::size_t units = 16, reps = 10000;
    const Tensor ones(Shape{units}, 1.0f);
    std::vector<double> mean(units, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
        const Tensor y = dropout_apply({DropoutKind::standard, 0.5}, ones, Mode::train, r);
        for (std::size_t i = 0; i < units; ++i) mean[i] += y[i] / double(reps);
    }
    // per-unit std of the mean is 1/sqrt(reps) = 0.01, so 0.05 is 5 sigma
    for (double m : mean) CHECK(std::abs(m - 1.0) <= 0.05);
}

TEST_CASE("alpha dropout preserves zero mean and unit variance") {
    const auto [a, b] = alpha_dropout_affine(0.2);
    const double ap = -1.0507 * 1.6733, q = 0.8;
    CHECK(a == doctest::Approx(1.0 / std::sqrt(q + ap * ap * 0.2 * q)));
    CHECK(b == doctest::Approx(-a * 0.2 * ap));

    std::mt19937_64 rng(51);
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor x(Shape{200000}, 0.0f);
    for (float& v : x.data()) v = static_cast<float>(selu(static_cast<float>(g(rng))));
    const Tensor y = dropout_apply({DropoutKind::alpha, 0.2}, x, Mode::train, 3);
    const double m = tensor_reduce(y, Reduction::mean);
    double var = 0.0;
    for (float v : y.data()) var += (v - m) * (v - m);
    var /= double(y.size());
    CHECK(std::abs(m) <= 0.02);
    CHECK(std::abs(var - 1.0) <= 0.05);
}

TEST_CASE("dropout gradient is the mask scale") {
    std::mt19937_64 rng(52);
    for (DropoutKind k : {DropoutKind::standard, DropoutKind::alpha}) {
        Tensor x = oracle::random_tensor(Shape{30}, rng);
        const DropoutResult r = dropout_forward({k, 0.4}, x, Mode::train, 9);
        const std::vector<double> w = oracle::random_vector(30, rng);
        auto f = [&] { return oracle::dot(w, dropout_forward({k, 0.4}, x, Mode::train, 9).output); };
        std::vector<double> analytic(30);
        for (std::size_t i = 0; i < 30; ++i) analytic[i] = w[i] * r.grad_scale[i];
        CHECK(oracle::relative_error(oracle::numeric_gradient(x, f, 1e-2), analytic) <= 1e-3);
    }
}
