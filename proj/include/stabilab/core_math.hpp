#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stabilab {

using RealVector = std::vector<double>;

// Dense d x d matrix, row-major.
class SquareMatrix {
public:
    explicit SquareMatrix(std::size_t dim);
    SquareMatrix(std::size_t dim, std::vector<double> entries);

    static SquareMatrix identity(std::size_t dim);
    static SquareMatrix diagonal(std::span<const double> diag);

    std::size_t dim() const { return dim_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    const std::vector<double>& entries() const { return data_; }

    bool is_finite() const;
    // |m_ij - m_ji| <= tol * max(1, |m_ij|) for every pair.
    bool is_symmetric(double tol = 1e-12) const;

    SquareMatrix transpose() const;
    SquareMatrix& operator+=(const SquareMatrix& other);
    SquareMatrix& operator-=(const SquareMatrix& other);
    SquareMatrix& operator*=(double s);

    // Adds s * v v^T.
    void add_outer(std::span<const double> v, double s = 1.0);

private:
    std::size_t dim_;
    std::vector<double> data_;
};

SquareMatrix operator+(SquareMatrix a, const SquareMatrix& b);
SquareMatrix operator-(SquareMatrix a, const SquareMatrix& b);
SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b);
SquareMatrix operator*(double s, SquareMatrix a);

RealVector mat_vec(const SquareMatrix& m, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
bool all_finite(std::span<const double> v);

// Cholesky factor L (lower triangular, A = L L^T) of a symmetric positive
// definite matrix. Throws std::domain_error if A is not numerically PD.
class Cholesky {
public:
    explicit Cholesky(const SquareMatrix& a);

    std::size_t dim() const { return l_.dim(); }
    RealVector solve(std::span<const double> b) const;
    // Estimated 2-norm condition number from the factor diagonal.
    double condition_estimate() const;

private:
    SquareMatrix l_;
};

// LU with partial pivoting. Throws std::domain_error when a pivot falls below
// 1e-13 times the largest absolute entry (numerically singular).
class LuDecomposition {
public:
    explicit LuDecomposition(const SquareMatrix& a);

    RealVector solve(std::span<const double> b) const;
    SquareMatrix inverse() const;

private:
    SquareMatrix lu_;
    std::vector<std::size_t> perm_;
};

SquareMatrix inverse(const SquareMatrix& a);

/// Solves (S + lambda I) v = b for symmetric PSD S and lambda > 0.
///
/// The residual satisfies ||(S + lambda I) v - b|| <= 1e-10 max(1, ||b||);
/// one step of iterative refinement is applied after the Cholesky solve.
/// Throws std::invalid_argument on dimension mismatch, non-finite input,
/// lambda <= 0 or an asymmetric S, and std::domain_error when S + lambda I
/// is not positive definite (S not PSD).
RealVector solve_regularized(const SquareMatrix& s, double lambda, std::span<const double> b);

/// Largest singular value by power iteration on M^T M.
///
/// Starts from the normalised all-ones vector and stops after successive
/// estimates agree to 1e-12 (relative) or the iteration cap is reached. A
/// second fixed start vector guards against an all-ones start that is
/// orthogonal to the leading singular vector; the larger estimate wins.
double operator_norm(const SquareMatrix& m);

/// Operator norm of the difference between both sides of
///   A^{-1} - (A+B)^{-1} = A^{-1} B A^{-1} (I + B A^{-1})^{-1}.
/// Throws std::domain_error if A, A+B or I + B A^{-1} is singular.
double harville_residual(const SquareMatrix& a, const SquareMatrix& b);

}  // namespace stabilab
