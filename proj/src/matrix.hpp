#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "value.hpp"

namespace kfarm {

// Dense rectangular real matrix, row-major.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0)
            throw Error(Errc::bad_value, "matrix dimensions must be positive");
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

// Eigenvalues in canonical order: descending modulus, ties broken by
// descending real part then descending imaginary part. Conjugate pairs
// end up adjacent with the positive-imaginary member first.
struct Spectrum {
    std::vector<std::complex<double>> eigenvalues;
};

// A[i][j] = diag on the diagonal, off everywhere else.
Matrix build_fill(std::int64_t n, double diag, double off);

// Constant diagonal / superdiagonal / subdiagonal, zero elsewhere.
Matrix build_tridiag(std::int64_t n, double diag, double upper, double lower);

Matrix matmul(const Matrix& a, const Matrix& b);

// Eigenvalues of a square matrix: Householder reduction to upper Hessenberg
// followed by shifted QR with deflation. Throws if the iteration cap
// (100 * n) is exhausted before the last eigenvalue deflates.
Spectrum eigenvalues(const Matrix& a);

Value matrix_to_value(const Matrix& m);
Matrix matrix_from_value(const Value& v);

// Real eigenvalues become plain reals; complex ones become {re, im} pairs.
Value spectrum_to_value(const Spectrum& s);

} // namespace kfarm
