#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <boost/align/aligned_allocator.hpp>

namespace raregan {

// Dense row-major matrix of doubles. A batch of vectors is stored one sample
// per row. Zero-row matrices are allowed and represent empty batches.
// Storage is 64-byte aligned so vectorized kernels take the same path for
// every buffer and results do not depend on where the allocator put it.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    void fill(double value);
    bool all_finite() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double, boost::alignment::aligned_allocator<double, 64>> data_;
};

// Stacks the rows of `top` above the rows of `bottom`.
Matrix vstack(const Matrix& top, const Matrix& bottom);

// Rows [begin, begin + count) of `m`.
Matrix row_slice(const Matrix& m, std::size_t begin, std::size_t count);

// Concatenates columns: result row i = a.row(i) ++ b.row(i).
Matrix hstack(const Matrix& a, const Matrix& b);

}  // namespace raregan
