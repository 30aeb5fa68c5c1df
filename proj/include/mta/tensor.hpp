#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mta/errors.hpp"

namespace mta {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
// models here need; rank is whatever the shape vector says.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count_(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count_(shape_) != data_.size())
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> v) {
        const std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    std::size_t numel() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : numel(); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : 1; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    // this += s * other
    void add_scaled(const Tensor& other, double s) {
        if (other.numel() != numel())
            throw DimensionError("add_scaled shape mismatch: " + shape_string() + " vs " +
                                 other.shape_string());
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    }

    void scale(double s) {
        for (double& v : data_) v *= s;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count_(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

} // namespace mta
