// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_TENSOR_HPP
#define WATERFLOW_TENSOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "waterflow/error.hpp"

namespace wf {

// Extents of a dense array, outermost first. Rank 1..4; rank-4 layout is
// batch, channel, row, column.
class Shape {
public:
    static constexpr std::size_t max_rank = 4;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
    explicit Shape(const std::vector<std::size_t>& dims) {
        if (dims.empty() || dims.size() > max_rank) {
            throw ShapeError("rank must be 1..4, got " + std::to_string(dims.size()));
        }
        for (std::size_t d : dims) {
            if (d == 0) {
                throw ShapeError("extents must be positive");
            }
        }
        rank_ = dims.size();
        std::copy(dims.begin(), dims.end(), dims_.begin());
    }

    std::size_t rank() const noexcept { return rank_; }
    std::size_t operator[](std::size_t i) const { return dims_.at(i); }
    std::size_t back(std::size_t i = 0) const { return dims_.at(rank_ - 1 - i); }

    std::size_t numel() const noexcept {
        if (rank_ == 0) {
            return 0;
        }
        std::size_t n = 1;
        for (std::size_t i = 0; i < rank_; ++i) {
            n *= dims_[i];
        }
        return n;
    }

    std::vector<std::size_t> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }

    friend bool operator==(const Shape& a, const Shape& b) noexcept {
        if (a.rank_ != b.rank_) {
            return false;
        }
        for (std::size_t i = 0; i < a.rank_; ++i) {
            if (a.dims_[i] != b.dims_[i]) {
                return false;
            }
        }
        return true;
    }

    std::string str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < rank_; ++i) {
            os << (i ? "x" : "") << dims_[i];
        }
        os << ']';
        return os.str();
    }

private:
    std::array<std::size_t, max_rank> dims_{};
    std::size_t rank_ = 0;
};

template <typename T>
concept Real = std::is_same_v<T, float> || std::is_same_v<T, double>;

// Dense, row-major array of 32- or 64-bit floats. Value semantics.
template <Real T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(const Shape& shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
    Tensor(const Shape& shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.numel()) {
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match dims " + shape_.str());
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.rank(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // Element access for rank-3 (c, y, x) and rank-4 (n, c, y, x) tensors.
    T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[offset3(c, y, x)]; }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const { return data_[offset3(c, y, x)]; }
    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[offset4(n, c, y, x)]; }
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[offset4(n, c, y, x)];
    }

    Tensor reshaped(const Shape& shape) const {
        if (shape.numel() != size()) {
            throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
        }
        return Tensor(shape, data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <Real U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::size_t offset3(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return (c * shape_[1] + y) * shape_[2] + x;
    }
    std::size_t offset4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }

    Shape shape_;
    std::vector<T> data_;
};

// Rank-4 view helpers: a rank-3 CHW tensor is treated as a batch of one.
struct Nchw {
    std::size_t n, c, h, w;
};

inline Nchw as_nchw(const Shape& s) {
    switch (s.rank()) {
    case 4:
        return {s[0], s[1], s[2], s[3]};
    case 3:
        return {1, s[0], s[1], s[2]};
    case 2:
        return {1, 1, s[0], s[1]};
    default:
        throw ShapeError("expected an image-like tensor, got " + s.str());
    }
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw ShapeError(std::string(what) + ": " + a.str() + " vs " + b.str());
    }
}

// Uniform per-channel plane count helper for CHW tensors.
template <Real T>
std::span<const T> plane(const Tensor<T>& t, std::size_t c) {
    const std::size_t hw = t.dim(t.rank() - 1) * t.dim(t.rank() - 2);
    return t.data().subspan(c * hw, hw);
}

template <Real T>
std::span<T> plane(Tensor<T>& t, std::size_t c) {
    const std::size_t hw = t.dim(t.rank() - 1) * t.dim(t.rank() - 2);
    return t.data().subspan(c * hw, hw);
}

} // namespace wf

#endif
