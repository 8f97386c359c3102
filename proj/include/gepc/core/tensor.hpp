#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gepc/core/error.hpp"

namespace gepc {

// Working precision. Gradient checks and the acceptance suite need 64-bit;
// define GEPC_REAL_FLOAT for a faster 32-bit build.
#ifdef GEPC_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense row-major tensor of `real`.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, real fill = real{0})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(real v) { return Tensor({}, std::vector<real>{v}); }
    static Tensor from(Shape shape, std::initializer_list<real> values) {
        return Tensor(std::move(shape), std::vector<real>(values));
    }
    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    real* data() noexcept { return data_.data(); }
    const real* data() const noexcept { return data_.data(); }
    std::span<real> span() noexcept { return data_; }
    std::span<const real> span() const noexcept { return data_; }
    std::vector<real>& vec() noexcept { return data_; }
    const std::vector<real>& vec() const noexcept { return data_; }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    real at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    real& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    real at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    real& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    real at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    real item() const {
        if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape s) const {
        if (shape_size(s) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    void fill(real v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(real{0}); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
    }

    real sum() const { return std::accumulate(data_.begin(), data_.end(), real{0}); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator*=(real s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

    void require_same_shape(const Tensor& o, const char* op) const {
        if (o.shape_ != shape_)
            throw ShapeError(std::string(op) + ": shape " + shape_str(shape_) + " vs " +
                             shape_str(o.shape_));
    }

private:
    Shape shape_;
    std::vector<real> data_;
};

/// Largest absolute elementwise difference. Shapes must agree.
inline real max_abs_diff(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "max_abs_diff");
    real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace gepc
