#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tidegraph::ndiff {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1, scalars 1x1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("tensor: negative shape");
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double value) {
        Tensor t(r, c);
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static Tensor scalar(double value) { return full(1, 1, value); }
    static Tensor from_rows(const std::vector<std::vector<double>>& rows_in);

    int numel() const { return rows * cols; }
    bool empty() const { return numel() == 0; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double item() const {
        if (numel() != 1) throw std::logic_error("tensor: item() on non-scalar");
        return v[0];
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    void add_(const Tensor& o);           // this += o
    void scale_(double c);                // this *= c
    bool all_finite() const;
    double max_abs() const;
};

// c = a * b, naive triple loop in i-k-j order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace tidegraph::ndiff
