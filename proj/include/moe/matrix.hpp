#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moe {

// Dense row-major matrix of doubles. Everything in this library is small
// (at most a few hundred rows), so there is no need for a BLAS backend.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dimension");
    }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    std::span<double> row(int i) {
        return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
    }
    std::span<const double> row(int i) const {
        return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t.at(j, i) = at(i, j);
        return t;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// y = m * v
inline std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
    if (static_cast<int>(v.size()) != m.cols) throw std::invalid_argument("matvec: size mismatch");
    std::vector<double> y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        auto r = m.row(i);
        for (int j = 0; j < m.cols; ++j) s += r[j] * v[j];
        y[i] = s;
    }
    return y;
}

// y = m^T * v
inline std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> v) {
    if (static_cast<int>(v.size()) != m.rows) throw std::invalid_argument("matvec_transposed: size mismatch");
    std::vector<double> y(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        const double vi = v[i];
        for (int j = 0; j < m.cols; ++j) y[j] += r[j] * vi;
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace moe
