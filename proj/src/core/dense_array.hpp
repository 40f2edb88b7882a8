#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace oal {

// Row-major dense array of 64-bit floats. Rank 0 is a scalar holding one
// element. Shapes are immutable after construction; product(shape) always
// equals data size.
class DenseArray {
public:
    DenseArray() = default;

    static DenseArray zeros(std::vector<std::size_t> shape) {
        DenseArray a;
        a.shape_ = std::move(shape);
        a.data_.assign(product(a.shape_), 0.0);
        return a;
    }

    static DenseArray scalar(double v) {
        DenseArray a;
        a.data_.assign(1, v);
        return a;
    }

    static DenseArray from(std::vector<std::size_t> shape, std::vector<double> data) {
        if (product(shape) != data.size()) {
            fail(ErrorKind::invalid_argument,
                 "DenseArray: shape/data size mismatch (" + shape_str(shape) + " vs " +
                     std::to_string(data.size()) + " values)");
        }
        DenseArray a;
        a.shape_ = std::move(shape);
        a.data_ = std::move(data);
        return a;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // Default-constructed arrays hold no data; used as a "not set" sentinel.
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }

    std::string shape_str() const { return shape_str(shape_); }

    static std::string shape_str(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return "scalar";
        std::string s;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s;
    }

    static std::size_t product(const std::vector<std::size_t>& shape) {
        std::size_t p = 1;
        for (std::size_t e : shape) p *= e;
        return p;
    }

private:
    std::vector<std::size_t> shape_;  // empty = rank 0 scalar
    std::vector<double> data_{};
};

}  // namespace oal
