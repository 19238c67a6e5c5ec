#include "tidegraph/tensor.hpp"

#include <cmath>

namespace tidegraph::ndiff {

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) return Tensor(0, 0);
    Tensor t(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
    for (int r = 0; r < t.rows; ++r) {
        if (static_cast<int>(rows_in[r].size()) != t.cols)
            throw std::invalid_argument("tensor: ragged rows");
        for (int c = 0; c < t.cols; ++c) t.at(r, c) = rows_in[r][c];
    }
    return t;
}

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("tensor add_: shape mismatch");
    for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
}

void Tensor::scale_(double c) {
    for (double& x : v) x *= c;
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: " + a.shape_str() + " * " + b.shape_str());
    Tensor c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[static_cast<size_t>(i) * a.cols];
        double* crow = &c.v[static_cast<size_t>(i) * c.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.v[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace tidegraph::ndiff
