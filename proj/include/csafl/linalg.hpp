#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace csafl {

// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    bool is_symmetric(double tol = 0.0) const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    DenseMatrix vectors;         // column k pairs with values[k]
    int sweeps = 0;
};

// Cyclic Jacobi rotations. Stops once the off-diagonal Frobenius norm falls
// below `threshold` times the matrix norm, or after `max_sweeps` sweeps.
EigenDecomposition jacobi_eigen(const DenseMatrix& symmetric, double threshold = 1e-12, int max_sweeps = 100);

}  // namespace csafl
