#include "stabilab/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stabilab {

SquareMatrix::SquareMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {
    if (dim == 0) throw std::invalid_argument("SquareMatrix: dim must be >= 1");
}

SquareMatrix::SquareMatrix(std::size_t dim, std::vector<double> entries)
    : dim_(dim), data_(std::move(entries)) {
    if (dim == 0) throw std::invalid_argument("SquareMatrix: dim must be >= 1");
    if (data_.size() != dim * dim) {
        throw std::invalid_argument("SquareMatrix: expected " + std::to_string(dim * dim) +
                                    " entries, got " + std::to_string(data_.size()));
    }
}

SquareMatrix SquareMatrix::identity(std::size_t dim) {
    SquareMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
}

SquareMatrix SquareMatrix::diagonal(std::span<const double> diag) {
    SquareMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

bool SquareMatrix::is_finite() const { return all_finite(data_); }

bool SquareMatrix::is_symmetric(double tol) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = i + 1; j < dim_; ++j) {
            const double a = (*this)(i, j);
            const double b = (*this)(j, i);
            if (std::abs(a - b) > tol * std::max(1.0, std::abs(a))) return false;
        }
    }
    return true;
}

SquareMatrix SquareMatrix::transpose() const {
    SquareMatrix t(dim_);
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

SquareMatrix& SquareMatrix::operator+=(const SquareMatrix& other) {
    if (other.dim_ != dim_) throw std::invalid_argument("SquareMatrix: dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

SquareMatrix& SquareMatrix::operator-=(const SquareMatrix& other) {
    if (other.dim_ != dim_) throw std::invalid_argument("SquareMatrix: dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

SquareMatrix& SquareMatrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

void SquareMatrix::add_outer(std::span<const double> v, double s) {
    if (v.size() != dim_) throw std::invalid_argument("add_outer: dimension mismatch");
    for (std::size_t i = 0; i < dim_; ++i) {
        const double vi = s * v[i];
        for (std::size_t j = 0; j < dim_; ++j) data_[i * dim_ + j] += vi * v[j];
    }
}

SquareMatrix operator+(SquareMatrix a, const SquareMatrix& b) { return a += b; }
SquareMatrix operator-(SquareMatrix a, const SquareMatrix& b) { return a -= b; }
SquareMatrix operator*(double s, SquareMatrix a) { return a *= s; }

SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("matrix product: dimension mismatch");
    const std::size_t d = a.dim();
    SquareMatrix c(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < d; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

RealVector mat_vec(const SquareMatrix& m, std::span<const double> v) {
    if (v.size() != m.dim()) throw std::invalid_argument("mat_vec: dimension mismatch");
    RealVector out(m.dim());
    for (std::size_t i = 0; i < m.dim(); ++i) out[i] = dot(m.row(i), v);
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) {
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double s = 0.0;
    for (double x : v) s += (x / scale) * (x / scale);
    return scale * std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------

Cholesky::Cholesky(const SquareMatrix& a) : l_(a.dim()) {
    const std::size_t d = a.dim();
    for (std::size_t j = 0; j < d; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
        if (!(diag > 0.0)) throw std::domain_error("Cholesky: matrix is not positive definite");
        const double ljj = std::sqrt(diag);
        l_(j, j) = ljj;
        for (std::size_t i = j + 1; i < d; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
            l_(i, j) = s / ljj;
        }
    }
}

RealVector Cholesky::solve(std::span<const double> b) const {
    const std::size_t d = l_.dim();
    if (b.size() != d) throw std::invalid_argument("Cholesky::solve: dimension mismatch");
    RealVector y(b.begin(), b.end());
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < i; ++k) y[i] -= l_(i, k) * y[k];
        y[i] /= l_(i, i);
    }
    for (std::size_t i = d; i-- > 0;) {
        for (std::size_t k = i + 1; k < d; ++k) y[i] -= l_(k, i) * y[k];
        y[i] /= l_(i, i);
    }
    return y;
}

double Cholesky::condition_estimate() const {
    double lo = l_(0, 0);
    double hi = l_(0, 0);
    for (std::size_t i = 1; i < l_.dim(); ++i) {
        lo = std::min(lo, l_(i, i));
        hi = std::max(hi, l_(i, i));
    }
    return (hi / lo) * (hi / lo);
}

// ---------------------------------------------------------------------------

LuDecomposition::LuDecomposition(const SquareMatrix& a) : lu_(a), perm_(a.dim()) {
    if (!a.is_finite()) throw std::invalid_argument("LU: non-finite entries");
    const std::size_t d = a.dim();
    double scale = 0.0;
    for (double x : a.entries()) scale = std::max(scale, std::abs(x));
    const double tiny = 1e-13 * scale;
    for (std::size_t i = 0; i < d; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < d; ++i)
            if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
        if (!(std::abs(lu_(p, k)) > tiny)) throw std::domain_error("LU: matrix is singular");
        if (p != k) {
            for (std::size_t j = 0; j < d; ++j) std::swap(lu_(k, j), lu_(p, j));
            std::swap(perm_[k], perm_[p]);
        }
        for (std::size_t i = k + 1; i < d; ++i) {
            const double f = lu_(i, k) / lu_(k, k);
            lu_(i, k) = f;
            for (std::size_t j = k + 1; j < d; ++j) lu_(i, j) -= f * lu_(k, j);
        }
    }
}

RealVector LuDecomposition::solve(std::span<const double> b) const {
    const std::size_t d = lu_.dim();
    if (b.size() != d) throw std::invalid_argument("LU::solve: dimension mismatch");
    RealVector x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < i; ++k) x[i] -= lu_(i, k) * x[k];
    for (std::size_t i = d; i-- > 0;) {
        for (std::size_t k = i + 1; k < d; ++k) x[i] -= lu_(i, k) * x[k];
        x[i] /= lu_(i, i);
    }
    return x;
}

SquareMatrix LuDecomposition::inverse() const {
    const std::size_t d = lu_.dim();
    SquareMatrix inv(d);
    RealVector e(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        e.assign(d, 0.0);
        e[j] = 1.0;
        const RealVector col = solve(e);
        for (std::size_t i = 0; i < d; ++i) inv(i, j) = col[i];
    }
    return inv;
}

SquareMatrix inverse(const SquareMatrix& a) { return LuDecomposition(a).inverse(); }

// ---------------------------------------------------------------------------

RealVector solve_regularized(const SquareMatrix& s, double lambda, std::span<const double> b) {
    if (b.size() != s.dim()) throw std::invalid_argument("solve_regularized: dimension mismatch");
    if (!s.is_finite() || !all_finite(b)) throw std::invalid_argument("solve_regularized: non-finite input");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("solve_regularized: lambda must be positive and finite");
    if (!s.is_symmetric()) throw std::invalid_argument("solve_regularized: matrix is not symmetric");

    SquareMatrix a = s;
    for (std::size_t i = 0; i < a.dim(); ++i) a(i, i) += lambda;
    const Cholesky chol(a);
    RealVector v = chol.solve(b);

    // one refinement step
    RealVector r = mat_vec(a, v);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const RealVector dv = chol.solve(r);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += dv[i];
    return v;
}

namespace {

double power_iteration(const SquareMatrix& mtm, RealVector v) {
    constexpr int kMaxIter = 5000;
    constexpr int kMinIter = 200;
    double nv = norm2(v);
    for (double& x : v) x /= nv;
    double prev = -1.0;
    double est = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
        RealVector w = mat_vec(mtm, v);
        est = dot(v, w);  // Rayleigh quotient of M^T M
        const double nw = norm2(w);
        if (nw == 0.0) return 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / nw;
        if (it >= kMinIter && std::abs(est - prev) <= 1e-12 * std::abs(est)) break;
        prev = est;
    }
    return std::sqrt(std::max(est, 0.0));
}

}  // namespace

double operator_norm(const SquareMatrix& m) {
    if (!m.is_finite()) throw std::invalid_argument("operator_norm: non-finite entries");
    const SquareMatrix mtm = m.transpose() * m;
    const std::size_t d = m.dim();
    const double ones = power_iteration(mtm, RealVector(d, 1.0));
    RealVector alt(d);
    for (std::size_t i = 0; i < d; ++i) alt[i] = (i % 2 == 0 ? 1.0 : -1.0) / static_cast<double>(i + 1);
    return std::max(ones, power_iteration(mtm, std::move(alt)));
}

double harville_residual(const SquareMatrix& a, const SquareMatrix& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("harville_residual: dimension mismatch");
    const std::size_t d = a.dim();
    const SquareMatrix a_inv = inverse(a);
    const SquareMatrix apb_inv = inverse(a + b);
    const SquareMatrix lhs = a_inv - apb_inv;
    const SquareMatrix inner = inverse(SquareMatrix::identity(d) + b * a_inv);
    const SquareMatrix rhs = a_inv * b * a_inv * inner;
    return operator_norm(lhs - rhs);
}

}  // namespace stabilab
