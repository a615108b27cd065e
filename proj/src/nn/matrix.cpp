#include "raregan/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "raregan/errors.hpp"

namespace raregan {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.begin()->size();
    Matrix out(n, m);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m) throw DimensionMismatch("Matrix::from_rows: ragged rows");
        std::copy(row.begin(), row.end(), out.row(r++).begin());
    }
    return out;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    Matrix out(1, values.size());
    std::copy(values.begin(), values.end(), out.data().begin());
    return out;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.rows() == 0) return bottom;
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols()) throw DimensionMismatch("vstack: column counts differ");
    Matrix out(top.rows() + bottom.rows(), top.cols());
    std::copy(top.data().begin(), top.data().end(), out.data().begin());
    std::copy(bottom.data().begin(), bottom.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(top.size()));
    return out;
}

Matrix row_slice(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.rows()) throw DimensionMismatch("row_slice: range out of bounds");
    Matrix out(count, m.cols());
    const auto first = m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols());
    std::copy(first, first + static_cast<std::ptrdiff_t>(count * m.cols()), out.data().begin());
    return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionMismatch("hstack: row counts differ");
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

}  // namespace raregan
