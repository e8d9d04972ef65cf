#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pathonet/errors.hpp"

namespace pathonet {

/// Dense row-major tensor. Image-like data uses (N, C, H, W) order.
/// The flat buffer is the serialization layout; all ops index it directly
/// or view it through Eigen maps.
template <typename S = float>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(checked_numel(shape_)), S(0));
    }

    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor full(std::vector<int> shape, S value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<S> data) {
        if (checked_numel(shape) != static_cast<std::int64_t>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& storage() { return data_; }
    const std::vector<S>& storage() const { return data_; }

    S& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    S operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    S& at2(int i, int j) {
        return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * shape_[1] + j)];
    }
    S at2(int i, int j) const {
        return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * shape_[1] + j)];
    }

    S& at4(int n, int c, int h, int w) { return data_[static_cast<std::size_t>(index4(n, c, h, w))]; }
    S at4(int n, int c, int h, int w) const { return data_[static_cast<std::size_t>(index4(n, c, h, w))]; }

    std::int64_t index4(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(std::vector<int> shape) const {
        if (checked_numel(shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename T>
    Tensor<T> cast() const {
        std::vector<T> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return Tensor<T>::from_data(shape_, std::move(out));
    }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const { return shape_str(shape_); }

    static std::string shape_str(const std::vector<int>& shape) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }

    static std::int64_t checked_numel(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int e : shape) {
            if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
            n *= e;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<S> data_;
};

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major matrix view over a tensor's flat buffer.
template <typename S>
Eigen::Map<MatrixRM<S>> as_matrix(Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
    return Eigen::Map<MatrixRM<S>>(t.data(), rows, cols);
}

template <typename S>
Eigen::Map<const MatrixRM<S>> as_matrix(const Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
    return Eigen::Map<const MatrixRM<S>>(t.data(), rows, cols);
}

} // namespace pathonet
