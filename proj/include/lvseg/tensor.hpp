#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lvseg {

// Dense row-major double tensor. All network math runs in double: at desk
// scale, determinism and finite-difference fidelity matter more than speed.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // [N, C, H, W] indexing
    std::size_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    double& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    double at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data[((n * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

std::string shape_string(const Tensor& t);
void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what);

}  // namespace lvseg
