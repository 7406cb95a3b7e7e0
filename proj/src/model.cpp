#include "pdnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "pdnet/rng.hpp"

namespace pdnet {

namespace {

std::size_t scaled(std::size_t width, double scale) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(width * scale)));
}

Activation family_activation(Family f) { return f == Family::relu ? Activation::relu : Activation::selu; }

DropoutKind family_dropout(Family f) {
    return f == Family::relu ? DropoutKind::standard : DropoutKind::alpha;
}

const char* to_string(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::selu: return "selu";
    case Activation::softmax: return "softmax";
    }
    return "?";
}

Activation activation_from(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "selu") return Activation::selu;
    if (s == "softmax") return Activation::softmax;
    throw UsageError("unknown activation '" + s + "'");
}

}  // namespace

LayerDesc LayerDesc::conv(std::size_t filters, std::size_t kernel, std::size_t padding, Activation act,
                          std::size_t stride) {
    LayerDesc d;
    d.kind = LayerKind::conv;
    d.filters = filters;
    d.kernel = kernel;
    d.padding = padding;
    d.stride = stride;
    d.activation = act;
    return d;
}

LayerDesc LayerDesc::pool(std::size_t block) {
    LayerDesc d;
    d.kind = LayerKind::maxpool;
    d.block = block;
    return d;
}

LayerDesc LayerDesc::dense(std::size_t units, Activation act) {
    LayerDesc d;
    d.kind = LayerKind::dense;
    d.units = units;
    d.activation = act;
    return d;
}

LayerDesc LayerDesc::drop(DropoutKind kind, double p) {
    LayerDesc d;
    d.kind = LayerKind::dropout;
    d.dropout = {kind, p};
    return d;
}

std::string ArchitectureSpec::full_name() const {
    return family == Family::selu ? name + "-selu" : name;
}

ArchitectureSpec lenet53d(Family family, std::array<std::size_t, 3> input_shape, double width_scale) {
    const Activation act = family_activation(family);
    ArchitectureSpec s;
    s.name = "lenet53d";
    s.family = family;
    s.input_shape = input_shape;
    s.layers = {
        LayerDesc::conv(scaled(6, width_scale), 5, 0, act),
        LayerDesc::pool(2),
        LayerDesc::conv(scaled(16, width_scale), 5, 0, act),
        LayerDesc::pool(2),
        LayerDesc::dense(scaled(120, width_scale), act),
        LayerDesc::dense(2, Activation::softmax),
    };
    return s;
}

ArchitectureSpec alexnet3d(Family family, std::array<std::size_t, 3> input_shape, double width_scale) {
    const Activation act = family_activation(family);
    const DropoutKind drop = family_dropout(family);
    ArchitectureSpec s;
    s.name = "alexnet3d";
    s.family = family;
    s.input_shape = input_shape;
    s.layers = {
        LayerDesc::conv(scaled(16, width_scale), 5, 0, act),
        LayerDesc::pool(2),
        LayerDesc::conv(scaled(32, width_scale), 3, 1, act),
        LayerDesc::pool(2),
        LayerDesc::conv(scaled(48, width_scale), 3, 1, act),
        LayerDesc::conv(scaled(48, width_scale), 3, 1, act),
        LayerDesc::conv(scaled(32, width_scale), 3, 1, act),
        LayerDesc::pool(2),
        LayerDesc::dense(scaled(256, width_scale), act),
        LayerDesc::drop(drop, 0.5),
        LayerDesc::dense(scaled(64, width_scale), act),
        LayerDesc::drop(drop, 0.5),
        LayerDesc::dense(2, Activation::softmax),
    };
    return s;
}

ArchitectureSpec architecture_by_name(const std::string& name, std::array<std::size_t, 3> input_shape,
                                      double width_scale) {
    if (!(width_scale > 0.0)) throw UsageError("width scale must be positive");
    if (name == "lenet53d") return lenet53d(Family::relu, input_shape, width_scale);
    if (name == "lenet53d-selu") return lenet53d(Family::selu, input_shape, width_scale);
    if (name == "alexnet3d") return alexnet3d(Family::relu, input_shape, width_scale);
    if (name == "alexnet3d-selu") return alexnet3d(Family::selu, input_shape, width_scale);
    throw UsageError("unknown model '" + name + "' (lenet53d, alexnet3d, *-selu)");
}

std::vector<Shape> propagate_shapes(const ArchitectureSpec& spec) {
    if (spec.layers.empty()) throw UsageError("architecture has no layers");
    const LayerDesc& last = spec.layers.back();
    if (last.kind != LayerKind::dense || last.units != spec.classes || last.activation != Activation::softmax)
        throw UsageError("architecture must end with a softmax dense layer of " +
                         std::to_string(spec.classes) + " units");

    std::size_t n_conv = 0, n_pool = 0, n_dense = 0;
    std::vector<Shape> shapes{Shape{1, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]}};
    bool flat = false;
    for (const LayerDesc& d : spec.layers) {
        const Shape& in = shapes.back();
        switch (d.kind) {
        case LayerKind::conv: {
            if (flat) throw UsageError("conv layer after a dense layer");
            if (d.filters == 0 || d.kernel == 0) throw UsageError("conv layer needs filters and kernel");
            Conv3D probe{Tensor(Shape{d.filters, in[0], d.kernel, d.kernel, d.kernel}, 0.0f),
                         Tensor(Shape{d.filters}, 0.0f),
                         {d.stride, d.stride, d.stride},
                         {d.padding, d.padding, d.padding},
                         d.activation};
            shapes.push_back(probe.output_shape(in));
            ++n_conv;
            break;
        }
        case LayerKind::maxpool:
            if (flat) throw UsageError("max-pool layer after a dense layer");
            shapes.push_back(MaxPool3D{d.block}.output_shape(in));
            ++n_pool;
            break;
        case LayerKind::dense:
            if (d.units == 0) throw UsageError("dense layer needs at least one unit");
            shapes.push_back(Shape{d.units});
            flat = true;
            ++n_dense;
            break;
        case LayerKind::dropout:
            validate(d.dropout);
            shapes.push_back(in);
            break;
        }
    }

    const std::size_t hidden_dense = n_dense - 1;
    if (spec.name == "lenet53d" && (n_conv != 2 || n_pool != 2 || hidden_dense != 1))
        throw UsageError("lenet53d requires 2 conv, 2 max-pool and 1 hidden dense layer");
    if (spec.name == "alexnet3d" && (n_conv != 5 || n_pool != 3 || hidden_dense != 2))
        throw UsageError("alexnet3d requires 5 conv, 3 max-pool and 2 hidden dense layers");
    return shapes;
}

std::string spec_to_text(const ArchitectureSpec& spec) {
    std::ostringstream os;
    os << "name " << spec.name << '\n';
    os << "family " << (spec.family == Family::relu ? "relu" : "selu") << '\n';
    os << "input " << spec.input_shape[0] << ' ' << spec.input_shape[1] << ' ' << spec.input_shape[2] << '\n';
    os << "classes " << spec.classes << '\n';
    os.precision(17);
    for (const LayerDesc& d : spec.layers) {
        switch (d.kind) {
        case LayerKind::conv:
            os << "conv " << d.filters << ' ' << d.kernel << ' ' << d.stride << ' ' << d.padding << ' '
               << to_string(d.activation) << '\n';
            break;
        case LayerKind::maxpool:
            os << "maxpool " << d.block << '\n';
            break;
        case LayerKind::dense:
            os << "dense " << d.units << ' ' << to_string(d.activation) << '\n';
            break;
        case LayerKind::dropout:
            os << "dropout " << (d.dropout.kind == DropoutKind::standard ? "standard" : "alpha") << ' '
               << d.dropout.p << '\n';
            break;
        }
    }
    return os.str();
}

ArchitectureSpec spec_from_text(const std::string& text) {
    ArchitectureSpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        std::string act;
        if (key == "name") {
            ls >> spec.name;
        } else if (key == "family") {
            std::string f;
            ls >> f;
            if (f != "relu" && f != "selu") throw DataError("bad architecture family '" + f + "'");
            spec.family = f == "relu" ? Family::relu : Family::selu;
        } else if (key == "input") {
            ls >> spec.input_shape[0] >> spec.input_shape[1] >> spec.input_shape[2];
        } else if (key == "classes") {
            ls >> spec.classes;
        } else if (key == "conv") {
            LayerDesc d;
            d.kind = LayerKind::conv;
            ls >> d.filters >> d.kernel >> d.stride >> d.padding >> act;
            d.activation = activation_from(act);
            spec.layers.push_back(d);
        } else if (key == "maxpool") {
            LayerDesc d;
            d.kind = LayerKind::maxpool;
            ls >> d.block;
            spec.layers.push_back(d);
        } else if (key == "dense") {
            LayerDesc d;
            d.kind = LayerKind::dense;
            ls >> d.units >> act;
            d.activation = activation_from(act);
            spec.layers.push_back(d);
        } else if (key == "dropout") {
            std::string kind;
            double p = 0;
            ls >> kind >> p;
            if (kind != "standard" && kind != "alpha") throw DataError("bad dropout kind '" + kind + "'");
            spec.layers.push_back(LayerDesc::drop(kind == "standard" ? DropoutKind::standard : DropoutKind::alpha, p));
        } else {
            throw DataError("unknown architecture line '" + line + "'");
        }
        if (ls.fail()) throw DataError("malformed architecture line '" + line + "'");
    }
    propagate_shapes(spec);
    return spec;
}

// ---------------------------------------------------------------------------

Model build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
    const std::vector<Shape> shapes = propagate_shapes(spec);
    Model model{spec, {}, seed};
    const double gain = spec.family == Family::relu ? 2.0 : 1.0;
    std::mt19937_64 rng(seed);

    auto gaussian = [&](const Shape& shape, std::size_t fan_in) {
        std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(gain / fan_in)));
        Tensor t(shape, 0.0f);
        for (float& v : t.data()) v = dist(rng);
        return t;
    };

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& d = spec.layers[i];
        const Shape& in = shapes[i];
        switch (d.kind) {
        case LayerKind::conv: {
            const std::size_t fan_in = in[0] * d.kernel * d.kernel * d.kernel;
            model.layers.emplace_back(Conv3D{gaussian(Shape{d.filters, in[0], d.kernel, d.kernel, d.kernel}, fan_in),
                                             Tensor(Shape{d.filters}, 0.0f),
                                             {d.stride, d.stride, d.stride},
                                             {d.padding, d.padding, d.padding},
                                             d.activation});
            break;
        }
        case LayerKind::maxpool:
            model.layers.emplace_back(MaxPool3D{d.block});
            break;
        case LayerKind::dense:
            model.layers.emplace_back(Dense{gaussian(Shape{d.units, in.count()}, in.count()),
                                            Tensor(Shape{d.units}, 0.0f), d.activation});
            break;
        case LayerKind::dropout:
            model.layers.emplace_back(d.dropout);
            break;
        }
    }
    return model;
}

std::vector<Tensor*> parameters(Model& model) {
    std::vector<Tensor*> out;
    for (Layer& layer : model.layers) {
        if (auto* c = std::get_if<Conv3D>(&layer)) {
            out.push_back(&c->weights);
            out.push_back(&c->bias);
        } else if (auto* d = std::get_if<Dense>(&layer)) {
            out.push_back(&d->weights);
            out.push_back(&d->bias);
        }
    }
    return out;
}

std::vector<const Tensor*> parameters(const Model& model) {
    std::vector<const Tensor*> out;
    for (Tensor* t : parameters(const_cast<Model&>(model))) out.push_back(t);
    return out;
}

std::size_t count_params(const Model& model) {
    std::size_t n = 0;
    for (const Tensor* t : parameters(model)) n += t->size();
    return n;
}

std::size_t count_params(const ArchitectureSpec& spec) {
    const std::vector<Shape> shapes = propagate_shapes(spec);
    std::size_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& d = spec.layers[i];
        if (d.kind == LayerKind::conv)
            n += d.filters * shapes[i][0] * d.kernel * d.kernel * d.kernel + d.filters;
        else if (d.kind == LayerKind::dense)
            n += d.units * shapes[i].count() + d.units;
    }
    return n;
}

// ---------------------------------------------------------------------------

Trace trace_forward(const Model& model, const Tensor& sample, Mode mode, std::uint64_t seed) {
    const auto& is = model.spec.input_shape;
    if (!(sample.shape() == Shape{1, is[0], is[1], is[2]}))
        throw UsageError("model expects input (1," + std::to_string(is[0]) + ',' + std::to_string(is[1]) +
                         ',' + std::to_string(is[2]) + "), got " + sample.shape().str());

    Trace trace;
    trace.layers.resize(model.layers.size());
    Tensor x = sample;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        Trace::Cache& cache = trace.layers[i];
        cache.input = x;
        const Layer& layer = model.layers[i];
        if (const auto* c = std::get_if<Conv3D>(&layer)) {
            cache.preact = conv3d_linear(*c, x, mode == Mode::train ? &cache.cols : nullptr);
            x = activation_forward(c->activation, cache.preact);
        } else if (const auto* p = std::get_if<MaxPool3D>(&layer)) {
            PoolResult r = maxpool3d_forward(*p, x);
            cache.argmax = std::move(r.argmax);
            x = std::move(r.output);
        } else if (const auto* d = std::get_if<Dense>(&layer)) {
            cache.preact = dense_linear(*d, x);
            x = activation_forward(d->activation, cache.preact);
        } else {
            DropoutResult r = dropout_forward(std::get<DropoutSpec>(layer), x, mode, derive_seed(seed, "dropout", i));
            cache.drop_scale = std::move(r.grad_scale);
            x = std::move(r.output);
        }
    }
    trace.logits = trace.layers.back().preact;
    trace.probs = std::move(x);
    require_finite(trace.logits, "model forward");
    return trace;
}

Backprop backward(const Model& model, const Trace& trace, const Tensor& grad_logits, bool need_input_grad) {
    if (trace.layers.size() != model.layers.size())
        throw UsageError("trace does not belong to this model");
    if (grad_logits.size() != trace.logits.size()) throw UsageError("logit gradient has the wrong length");

    std::vector<Tensor> grads;  // collected output-to-input, reversed at the end
    Tensor g = grad_logits.reshaped(trace.logits.shape());
    bool at_output = true;
    for (std::size_t i = model.layers.size(); i-- > 0;) {
        const Layer& layer = model.layers[i];
        const Trace::Cache& cache = trace.layers[i];
        const bool want_input = need_input_grad || i > 0;
        if (const auto* c = std::get_if<Conv3D>(&layer)) {
            Tensor gz = activation_backward(c->activation, cache.preact, g);
            LayerGrads lg = conv3d_backward_linear(*c, cache.input, gz, want_input,
                                                   cache.cols.empty() ? nullptr : &cache.cols);
            grads.push_back(std::move(lg.bias));
            grads.push_back(std::move(lg.weights));
            g = std::move(lg.input);
        } else if (std::get_if<MaxPool3D>(&layer)) {
            g = maxpool3d_backward(cache.argmax, g);
        } else if (const auto* d = std::get_if<Dense>(&layer)) {
            // The softmax of the output layer is fused into the loss gradient.
            Tensor gz = at_output ? g : activation_backward(d->activation, cache.preact, g);
            LayerGrads lg = dense_backward_linear(*d, cache.input, gz, want_input);
            grads.push_back(std::move(lg.bias));
            grads.push_back(std::move(lg.weights));
            g = want_input ? std::move(lg.input).reshaped(cache.input.shape()) : Tensor();
        } else if (cache.drop_scale.size() != 0) {
            for (std::size_t k = 0; k < g.size(); ++k) g[k] *= cache.drop_scale[k];
        }
        at_output = false;
    }
    std::reverse(grads.begin(), grads.end());
    Backprop out{std::move(grads), Tensor()};
    if (need_input_grad) out.input = std::move(g);
    return out;
}

Tensor batch_item(const Tensor& batch, std::size_t n) {
    const Shape& bs = batch.shape();
    if (bs.rank() != 5) throw UsageError("batch must be (N,C,D,H,W), got " + bs.str());
    if (n >= bs[0]) throw UsageError("batch index out of range");
    const std::size_t per = batch.size() / bs[0];
    auto src = batch.data().subspan(n * per, per);
    return Tensor(Shape{bs[1], bs[2], bs[3], bs[4]}, std::vector<float>(src.begin(), src.end()));
}

Tensor forward(const Model& model, const Tensor& batch, Mode mode, std::uint64_t seed) {
    const std::size_t n = batch.shape().rank() == 5 ? batch.shape()[0] : 0;
    if (n == 0) throw UsageError("batch must be (N,1,D,H,W), got " + batch.shape().str());
    const std::size_t classes = model.spec.classes;
    Tensor out(Shape{n, classes}, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        Trace t = trace_forward(model, batch_item(batch, i), mode, derive_seed(seed, "sample", i));
        std::copy(t.probs.data().begin(), t.probs.data().end(), out.raw() + i * classes);
    }
    return out;
}

}  // namespace pdnet
