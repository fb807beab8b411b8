#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace htce {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. All numeric kernels in the library go
/// through this type; the heavy products below delegate to Eigen.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        Matrix m(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("from_rows: ragged initializer");
            std::size_t j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    static Matrix column(const std::vector<double>& v) {
        Matrix m(v.size(), 1);
        for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite()) throw NumericError(std::string("non-finite values in ") + what);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {
using EMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline CEMap map(const Matrix& m) {
    return CEMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
inline EMap map(Matrix& m) {
    return EMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
}  // namespace detail

/// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix c(a.rows(), b.cols());
    detail::map(c).noalias() = detail::map(a) * detail::map(b);
    return c;
}

/// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    detail::map(c).noalias() = detail::map(a).transpose() * detail::map(b);
    return c;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: col counts differ");
    Matrix c(a.rows(), b.rows());
    detail::map(c).noalias() = detail::map(a) * detail::map(b).transpose();
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// dst += scale * src
inline void add_scaled(Matrix& dst, const Matrix& src, double scale = 1.0) {
    if (!dst.same_shape(src)) throw ShapeError("add_scaled: shape mismatch");
    const double* s = src.data();
    double* d = dst.data();
    for (std::size_t k = 0; k < dst.size(); ++k) d[k] += scale * s[k];
}

inline double frobenius_sq(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.raw()) acc += v * v;
    return acc;
}

/// [a | b]
inline Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("hcat: row counts differ");
    Matrix c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
    }
    return c;
}

inline Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.cols()) throw ShapeError("slice_cols: out of range");
    Matrix s(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) s(i, j) = m(i, begin + j);
    return s;
}

inline Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix s(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m.rows()) throw ShapeError("take_rows: index out of range");
        for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = m(idx[i], j);
    }
    return s;
}

/// dst[idx[i], :] += src[i, :]
inline void scatter_add_rows(Matrix& dst, const Matrix& src, const std::vector<std::size_t>& idx) {
    if (src.rows() != idx.size() || src.cols() != dst.cols())
        throw ShapeError("scatter_add_rows: shape mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst(idx[i], j) += src(i, j);
}

}  // namespace htce
