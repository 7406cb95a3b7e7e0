#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pdnet/errors.hpp"

namespace pdnet {

/// Ordered extents of a dense array, rank 1 to 5.
///
/// Activations use the channel-major layout (C, D, H, W); a batch adds a
/// leading N. Volumes are rank-3 (D, H, W) with W, the x axis, fastest.
class Shape {
public:
    static constexpr std::size_t kMaxRank = 5;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    std::size_t count() const;
    const std::vector<std::size_t>& dims() const { return dims_; }

    /// e.g. "(1,24,28,24)"
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
};

/// Row-major float32 array; the last axis is the fastest.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, float fill);
    Tensor(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<float> data() & { return data_; }
    std::span<const float> data() const& { return data_; }
    std::span<const float> data() && = delete;  // would dangle
    float* raw() { return data_.data(); }
    const float* raw() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    /// Same data, new shape of identical element count.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

enum class Reduction { sum, mean, max };

Tensor tensor_create(const Shape& shape, float fill);

/// Elementwise f; throws NumericError if f yields NaN/Inf.
Tensor tensor_map(const Tensor& t, const std::function<float(float)>& f);

/// Accumulates in double.
double tensor_reduce(const Tensor& t, Reduction kind);

/// Throws NumericError naming `where` if any element is NaN/Inf.
void require_finite(const Tensor& t, const char* where);

}  // namespace pdnet
