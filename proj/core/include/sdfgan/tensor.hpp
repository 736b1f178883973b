#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdfgan {

// Dense row-major array of 64-bit floats. Rank and extents are dynamic;
// operations that need a specific rank check it at the call site.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (num_elements(shape) != data.size())
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::size_t num_elements(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int e : s) {
            if (e < 0) throw std::invalid_argument("Tensor: negative extent");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        std::size_t n = num_elements(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor full(std::vector<int> s, double v) {
        std::size_t n = num_elements(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    // Rank-2 accessors.
    int rows() const { return shape.at(0); }
    int cols() const { return shape.at(1); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace sdfgan
