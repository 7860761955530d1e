#pragma once

// Dense linear-algebra primitives behind every merging formula: Gram
// products, Frobenius norms, relative-scale regularization, and symmetric
// solves. 64-bit floats throughout; the iterative re-solving in the merge
// loop amplifies roundoff, so no lower precision is offered.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "iteris/errors.hpp"
#include "iteris/matrix.hpp"

namespace iteris {

// left * right^T for two d x S matrices; symmetric PSD when left == right.
inline Matrix gram(const Matrix& left, const Matrix& right) {
    if (left.rows() != right.rows() || left.cols() != right.cols())
        throw ShapeError("gram: operands must share shape, " + left.shape_str() + " vs " +
                         right.shape_str());
    Matrix g = multiply_transposed(left, right);
    g.ensure_finite("gram product");
    return g;
}

inline double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

// g + alpha * ||g||_F * I. The ridge scales with the matrix itself, so the
// regularized system is invariant under a uniform rescaling of the features.
inline Matrix regularize_gram(const Matrix& g, double alpha) {
    if (g.rows() != g.cols())
        throw ShapeError("regularize_gram: matrix must be square, got " + g.shape_str());
    if (!(alpha >= 0.0)) throw DomainError("regularize_gram: alpha must be nonnegative");
    Matrix out = g;
    if (alpha == 0.0) return out;
    const double ridge = alpha * frobenius_norm(g);
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += ridge;
    return out;
}

namespace detail {

// In-place lower Cholesky of a symmetric matrix held in `a`.
// Returns false when a pivot falls at or below `pivot_floor`.
inline bool cholesky(Matrix& a, double pivot_floor) {
    const std::size_t n = a.rows();
    for (std::size_t k = 0; k < n; ++k) {
        double d = a(k, k);
        for (std::size_t j = 0; j < k; ++j) d -= a(k, j) * a(k, j);
        if (!(d > pivot_floor)) return false;
        const double lkk = std::sqrt(d);
        a(k, k) = lkk;
        for (std::size_t i = k + 1; i < n; ++i) {
            double v = a(i, k);
            for (std::size_t j = 0; j < k; ++j) v -= a(i, j) * a(k, j);
            a(i, k) = v / lkk;
        }
    }
    return true;
}

inline void cholesky_solve_column(const Matrix& l, std::vector<double>& x) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i];
        for (std::size_t j = 0; j < i; ++j) v -= l(i, j) * x[j];
        x[i] = v / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) v -= l(j, ii) * x[j];
        x[ii] = v / l(ii, ii);
    }
}

// Partial-pivot LU; perm records the row order. Returns false on a pivot
// at or below `pivot_floor` in magnitude.
inline bool lu_factor(Matrix& a, std::vector<std::size_t>& perm, double pivot_floor) {
    const std::size_t n = a.rows();
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(a(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (!(best > pivot_floor)) return false;
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        const double akk = a(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = a(i, k) / akk;
            a(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= m * a(k, j);
        }
    }
    return true;
}

} // namespace detail

// Solves a * x = b for symmetric a (d x d) and b (d x k).
//
// a is symmetrized as (a + a^T)/2 before factorization; asymmetry beyond
// 1e-9 relative to ||a||_F is rejected. SPD factorization is tried first,
// then pivoted LU; a pivot below 1e-12 * ||a||_F raises SingularError with
// `context` attached so callers can name the site/iteration. Iterative
// refinement brings the relative residual under 1e-8 or the solve fails.
inline Matrix solve_symmetric(const Matrix& a, const Matrix& b, const std::string& context = {}) {
    if (a.rows() != a.cols())
        throw ShapeError("solve_symmetric: coefficient matrix must be square, got " +
                         a.shape_str());
    if (a.rows() != b.rows())
        throw ShapeError("solve_symmetric: rhs rows " + b.shape_str() + " do not match " +
                         a.shape_str());

    const std::size_t n = a.rows();
    const double norm_a = frobenius_norm(a);

    double max_asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            max_asym = std::max(max_asym, std::fabs(a(i, j) - a(j, i)));
    if (max_asym > 1e-9 * std::max(1.0, norm_a))
        throw DomainError("solve_symmetric: matrix asymmetric beyond tolerance (" +
                          std::to_string(max_asym) + ")");

    Matrix sym(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (a(i, j) + a(j, i));

    const double pivot_floor = 1e-12 * norm_a;

    Matrix fac = sym;
    bool spd = detail::cholesky(fac, pivot_floor);
    std::vector<std::size_t> perm;
    if (!spd) {
        fac = sym;
        if (!detail::lu_factor(fac, perm, pivot_floor))
            throw SingularError("solve_symmetric: matrix numerically singular (pivot below " +
                                    std::to_string(pivot_floor) + ")",
                                context);
    }

    auto apply_factor = [&](std::vector<double>& col) {
        if (spd) {
            detail::cholesky_solve_column(fac, col);
        } else {
            // forward/back substitution with the recorded permutation
            std::vector<double> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                double v = col[perm[i]];
                for (std::size_t j = 0; j < i; ++j) v -= fac(i, j) * y[j];
                y[i] = v;
            }
            for (std::size_t ii = n; ii-- > 0;) {
                double v = y[ii];
                for (std::size_t j = ii + 1; j < n; ++j) v -= fac(ii, j) * y[j];
                y[ii] = v / fac(ii, ii);
            }
            col = y;
        }
    };

    Matrix x(n, b.cols());
    std::vector<double> col(n), residual(n);
    const double norm_b = frobenius_norm(b);
    for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
        apply_factor(col);
        // refinement loop; factorizations are backward stable but the
        // residual contract is absolute, so polish until it holds
        for (int round = 0; round < 4; ++round) {
            double rmax = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = b(i, j);
                for (std::size_t k = 0; k < n; ++k) acc -= sym(i, k) * col[k];
                residual[i] = acc;
                rmax = std::max(rmax, std::fabs(acc));
            }
            if (rmax <= 1e-11 * std::max(1.0, norm_b)) break;
            std::vector<double> corr = residual;
            apply_factor(corr);
            for (std::size_t i = 0; i < n; ++i) col[i] += corr[i];
        }
        for (std::size_t i = 0; i < n; ++i) x(i, j) = col[i];
    }

    double res = 0.0;
    Matrix ax = multiply(sym, x);
    for (std::size_t i = 0; i < ax.size(); ++i) {
        const double d = ax.data()[i] - b.data()[i];
        res += d * d;
    }
    res = std::sqrt(res) / std::max(1.0, norm_b);
    if (!(res <= 1e-8))
        throw SingularError("solve_symmetric: residual " + std::to_string(res) +
                                " exceeds 1e-8; system is effectively singular",
                            context);
    x.ensure_finite("solve_symmetric");
    return x;
}

// Thin SVD a = U * diag(sigma) * V^T computed by one-sided Jacobi rotations.
// sigma is returned in descending order; U is a.rows() x k, V is a.cols() x k
// with k = min(rows, cols).
struct Svd {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

inline Svd svd(const Matrix& a) {
    const bool flip = a.rows() < a.cols();
    Matrix work = flip ? a.transposed() : a; // m >= n from here on
    const std::size_t m = work.rows(), n = work.cols();

    Matrix v = Matrix::identity(n);
    const double eps = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = work(i, p), wq = work(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = work(i, p), wq = work(i, q);
                    work(i, p) = c * wp - s * wq;
                    work(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n);
    Matrix u(m, n);
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += work(i, j) * work(i, j);
        sigma[j] = std::sqrt(norm);
        order[j] = j;
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.sigma.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = sigma[src];
        const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (std::size_t i = 0; i < m; ++i) out.u(i, j) = work(i, src) * inv;
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    }
    if (flip) std::swap(out.u, out.v);
    return out;
}

} // namespace iteris
