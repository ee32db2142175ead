#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace adviris::nn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major real tensor.  The value currency of the whole pipeline:
// images, codes, activations, weights, gradients.
struct Tensor {
    Shape shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<std::size_t>(shape_numel(shape)), 0.0) {
        for (int d : shape)
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
    }
    Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<std::int64_t>(v.size()) != shape_numel(shape))
            throw std::invalid_argument("Tensor: value count " + std::to_string(v.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    // 4-D accessors for [N,C,H,W] network tensors
    double& at4(int n, int c, int h, int w) {
        return v[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    const double& at4(int n, int c, int h, int w) const {
        return v[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    double& at2(int r, int c) { return v[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape[1] + c)]; }
    const double& at2(int r, int c) const { return v[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape[1] + c)]; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    static Tensor full(Shape s, double value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace adviris::nn
