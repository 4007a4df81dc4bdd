#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "statmap/errors.hpp"

namespace statmap {

/// Dense row-major matrix of 64-bit floats. The single numeric substrate
/// for every estimator in the library; no external linear algebra.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows*cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

using Vector = std::vector<double>;

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sum(const Vector& a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s;
}

inline double mean(const Vector& a) { return sum(a) / static_cast<double>(a.size()); }

/// Population variance (divides by n).
inline double variance(const Vector& a) {
    const double m = mean(a);
    double s = 0.0;
    for (double v : a) s += (v - m) * (v - m);
    return s / static_cast<double>(a.size());
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeMismatch("multiply: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* crow = &c.data[i * c.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Vector multiply(const Matrix& a, const Vector& x) {
    if (a.cols != x.size()) throw ShapeMismatch("multiply: matrix-vector dimensions differ");
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        const double* row = &a.data[i * a.cols];
        for (std::size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

/// x^t A for a column-vector x given as Vector; returns A^t x.
inline Vector multiply_transposed(const Matrix& a, const Vector& x) {
    if (a.rows != x.size()) throw ShapeMismatch("multiply_transposed: dimensions differ");
    Vector y(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = &a.data[i * a.cols];
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += row[j] * xi;
    }
    return y;
}

inline double trace(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows && i < a.cols; ++i) s += a(i, i);
    return s;
}

inline Matrix outer(const Vector& a, const Vector& b) {
    Matrix m(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
    return m;
}

namespace detail {
inline void require_symmetric(const Matrix& a, double tol) {
    if (a.rows != a.cols) throw ShapeMismatch("cholesky: matrix not square");
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * std::max(1.0, std::abs(a(i, j))))
                throw ShapeMismatch("cholesky: matrix not symmetric");
}
}  // namespace detail

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Factor once, solve many; solves are const and safe to share across threads.
class Cholesky {
  public:
    explicit Cholesky(const Matrix& a, bool check_symmetry = true) : l_(a.rows, a.cols) {
        if (check_symmetry) detail::require_symmetric(a, 1e-10);
        const std::size_t n = a.rows;
        double max_diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
        const double pivot_floor = 1e-12 * std::max(max_diag, 1e-300);
        for (std::size_t j = 0; j < n; ++j) {
            double d = a(j, j);
            for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
            if (!(d > pivot_floor))
                throw NotPositiveDefinite("cholesky: pivot " + std::to_string(d) +
                                          " at column " + std::to_string(j));
            const double ljj = std::sqrt(d);
            l_(j, j) = ljj;
            for (std::size_t i = j + 1; i < n; ++i) {
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                l_(i, j) = s / ljj;
            }
        }
    }

    std::size_t size() const { return l_.rows; }
    const Matrix& factor() const { return l_; }

    /// Solve A x = b.
    Vector solve(const Vector& b) const {
        const std::size_t n = l_.rows;
        if (b.size() != n) throw ShapeMismatch("cholesky solve: rhs length");
        Vector x(b);
        for (std::size_t i = 0; i < n; ++i) {  // L z = b
            double s = x[i];
            for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * x[k];
            x[i] = s / l_(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {  // L^t x = z
            double s = x[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * x[k];
            x[ii] = s / l_(ii, ii);
        }
        return x;
    }

    /// Solve A X = B column by column.
    Matrix solve(const Matrix& b) const {
        const std::size_t n = l_.rows;
        if (b.rows != n) throw ShapeMismatch("cholesky solve: rhs rows");
        Matrix x(b.rows, b.cols);
        Vector col(n);
        for (std::size_t j = 0; j < b.cols; ++j) {
            for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
            Vector sol = solve(col);
            for (std::size_t i = 0; i < n; ++i) x(i, j) = sol[i];
        }
        return x;
    }

    /// log det A = 2 sum log diag(L)
    double log_det() const {
        double s = 0.0;
        for (std::size_t i = 0; i < l_.rows; ++i) s += std::log(l_(i, i));
        return 2.0 * s;
    }

  private:
    Matrix l_;
};

/// Solve the SPD system A X = B via Cholesky.
inline Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
    return Cholesky(a).solve(b);
}

inline Vector cholesky_solve(const Matrix& a, const Vector& b) {
    return Cholesky(a).solve(b);
}

/// Explicit inverse through Cholesky; intended for small matrices.
inline Matrix inverse_spd(const Matrix& a) {
    return Cholesky(a).solve(Matrix::identity(a.rows));
}

/// Centering projector P = I - 11^t/n: symmetric, idempotent, annihilates constants.
inline Matrix centering_matrix(std::size_t n) {
    if (n < 2) throw InvalidSize("centering_matrix: n must be >= 2");
    Matrix p(n, n, -1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) p(i, i) += 1.0;
    return p;
}

}  // namespace statmap
