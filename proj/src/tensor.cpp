#include "pdnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pdnet {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
    if (dims.empty() || dims.size() > Shape::kMaxRank) {
        throw UsageError("shape rank must be between 1 and 5, got " +
                         std::to_string(dims.size()));
    }
    for (std::size_t d : dims) {
        if (d == 0) throw UsageError("shape extents must be >= 1");
    }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::count() const {
    if (dims_.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t d : dims_) n *= d;
    return n;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) os << ',';
        os << dims_[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_.count(), fill) {
    if (shape_.rank() == 0) throw UsageError("tensor requires a non-empty shape");
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.rank() == 0) throw UsageError("tensor requires a non-empty shape");
    if (data_.size() != shape_.count()) {
        throw UsageError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    if (shape.count() != data_.size()) {
        throw UsageError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor tensor_create(const Shape& shape, float fill) { return Tensor(shape, fill); }

Tensor tensor_map(const Tensor& t, const std::function<float(float)>& f) {
    Tensor out = t;
    for (float& v : out.data()) {
        v = f(v);
        if (!std::isfinite(v)) throw NumericError("tensor_map produced a non-finite value");
    }
    return out;
}

double tensor_reduce(const Tensor& t, Reduction kind) {
    if (t.size() == 0) throw UsageError("cannot reduce an empty tensor");
    auto values = t.data();
    switch (kind) {
    case Reduction::sum:
    case Reduction::mean: {
        double acc = 0.0;
        for (float v : values) acc += v;
        return kind == Reduction::sum ? acc : acc / static_cast<double>(values.size());
    }
    case Reduction::max:
        return *std::max_element(values.begin(), values.end());
    }
    return 0.0;
}

void require_finite(const Tensor& t, const char* where) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite value in ") + where);
}

}  // namespace pdnet
