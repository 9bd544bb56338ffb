#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "xlner/error.hpp"

namespace xlner {

/// Dense row-major 64-bit float array with an explicit shape.
/// Rank 1 and 2 are what the library actually uses.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    /// Row/column accessors for rank-2 tensors; throw on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    void fill(double v);

    bool operator==(const Tensor&) const = default;
};

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

inline Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape))
        throw invalid_input("Tensor: data length does not match shape");
}

inline Tensor Tensor::zeros(std::vector<std::size_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(shape_size(t.shape), 0.0);
    return t;
}

inline std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw invalid_input("Tensor: rows() requires rank 2");
    return shape[0];
}

inline std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw invalid_input("Tensor: cols() requires rank 2");
    return shape[1];
}

inline bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

} // namespace xlner
