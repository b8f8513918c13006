#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pqvae/errors.hpp"

namespace pqvae {

// Dense row-major array of doubles. Shapes are kept as a plain dimension
// list; only rank-1 and rank-2 views are needed in practice.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)),
          data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>()),
               fill) {}

    static Tensor row_major(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor vector_of(std::initializer_list<double> values) {
        Tensor t({values.size()});
        std::size_t i = 0;
        for (double v : values) t.data[i++] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }

    std::size_t cols() const {
        if (shape.size() < 2) return shape.size() == 1 ? shape[0] : 0;
        return shape[1];
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    const double* row(std::size_t r) const { return data.data() + r * shape[1]; }
    double* row(std::size_t r) { return data.data() + r * shape[1]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    require(a.same_shape(b), errc::shape,
            std::string(where) + ": tensor shapes differ");
}

// Mean of squared element differences.
inline double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    require(a.size() > 0, errc::shape, "mse: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace pqvae
