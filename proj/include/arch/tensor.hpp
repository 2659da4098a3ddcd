#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace arch {

// Dense float64 array with a row-major shape.
struct Tensor {
    std::vector<double> data;
    std::vector<std::size_t> shape;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shp)
        : data(numel_of(shp), 0.0), shape(std::move(shp)) {}

    Tensor(std::vector<double> values, std::vector<std::size_t> shp)
        : data(std::move(values)), shape(std::move(shp)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shp) {
        return std::accumulate(shp.begin(), shp.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    // Single scalar value; valid only for one-element tensors.
    double scalar() const {
        if (data.size() != 1)
            throw std::logic_error("Tensor::scalar on non-scalar tensor");
        return data[0];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& v) {
    return std::sqrt(dot(v, v));
}

inline std::string shape_str(const std::vector<std::size_t>& shp) {
    std::string s = "(";
    for (std::size_t i = 0; i < shp.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shp[i]);
    }
    return s + ")";
}

}  // namespace arch
