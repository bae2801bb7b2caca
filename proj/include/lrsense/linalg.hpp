#ifndef LRSENSE_LINALG_HPP
#define LRSENSE_LINALG_HPP

#include <cmath>
#include <limits>
#include <numbers>

#include "lrsense/common.hpp"

namespace lrsense {

inline Index sym_dim(Index n) { return n * (n + 1) / 2; }

/**
 * Scaled symmetric vectorization: upper triangle in row-major order
 * ((0,0), (0,1), ..., (0,n-1), (1,1), ...), off-diagonals scaled by sqrt(2),
 * so that svec(A).dot(svec(B)) == <A, B>_F for symmetric A, B.
 * The input is symmetrized as (M + M^T) / 2.
 */
template <typename Derived>
Vector<typename Derived::Scalar> svec(const Eigen::MatrixBase<Derived>& m)
{
    using Scalar = typename Derived::Scalar;
    require(m.rows() == m.cols(), "svec: matrix must be square");
    const Index n = m.rows();
    const Scalar root2 = std::numbers::sqrt2_v<Scalar>;
    Vector<Scalar> v(sym_dim(n));
    Index p = 0;
    for (Index j = 0; j < n; ++j) {
        v(p++) = m(j, j);
        for (Index k = j + 1; k < n; ++k)
            v(p++) = root2 * ((m(j, k) + m(k, j)) / Scalar(2));
    }
    return v;
}

/// Inverse of svec; always returns an exactly symmetric matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> smat(const Eigen::MatrixBase<Derived>& v, Index n)
{
    using Scalar = typename Derived::Scalar;
    require(v.size() == sym_dim(n), "smat: vector length does not match n(n+1)/2");
    const Scalar inv_root2 = Scalar(1) / std::numbers::sqrt2_v<Scalar>;
    Matrix<Scalar> m(n, n);
    Index p = 0;
    for (Index j = 0; j < n; ++j) {
        m(j, j) = v(p++);
        for (Index k = j + 1; k < n; ++k) {
            const Scalar value = v(p++) * inv_root2;
            m(j, k) = value;
            m(k, j) = value;
        }
    }
    return m;
}

template <typename Scalar>
struct SymmetricEigen {
    Vector<Scalar> values; // descending
    Matrix<Scalar> vectors;
};

template <typename Derived>
SymmetricEigen<typename Derived::Scalar> eigen_descending(const Eigen::MatrixBase<Derived>& s)
{
    using Scalar = typename Derived::Scalar;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(s.derived());
    if (solver.info() != Eigen::Success)
        throw NumericalError("symmetric eigendecomposition failed");
    return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

struct PowerOptions {
    double tol = 1e-10;
    int max_iters = 1000;
    Index dense_fallback_dim = 64;
};

struct SpectralNormResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = true;
    bool dense = false;
};

/**
 * Spectral norm of a symmetric matrix. Small matrices use a dense eigensolve;
 * larger ones run power iteration from the normalized all-ones vector and stop
 * when the norm estimate changes by less than tol (relative).
 */
template <typename Derived>
SpectralNormResult spectral_norm_symmetric(const Eigen::MatrixBase<Derived>& e,
                                           const PowerOptions& options = {})
{
    using Scalar = typename Derived::Scalar;
    const Index n = e.rows();
    SpectralNormResult result;
    if (n == 0)
        return result;
    if (n <= options.dense_fallback_dim) {
        Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(e.derived(), Eigen::EigenvaluesOnly);
        result.value = static_cast<double>(solver.eigenvalues().cwiseAbs().maxCoeff());
        result.dense = true;
        return result;
    }
    Vector<Scalar> v = Vector<Scalar>::Constant(n, Scalar(1) / std::sqrt(Scalar(n)));
    double previous = 0.0;
    result.converged = false;
    for (int it = 1; it <= options.max_iters; ++it) {
        Vector<Scalar> w = e * v;
        const double estimate = static_cast<double>(w.norm());
        result.iterations = it;
        result.value = estimate;
        if (estimate == 0.0) {
            result.converged = true;
            break;
        }
        v = w / Scalar(estimate);
        if (std::abs(estimate - previous) <= options.tol * estimate) {
            result.converged = true;
            break;
        }
        previous = estimate;
    }
    return result;
}

/// Largest singular value of a (small) general matrix; 0 for empty input.
template <typename Derived>
double operator_norm(const Eigen::MatrixBase<Derived>& a)
{
    if (a.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Matrix<typename Derived::Scalar>> svd(a.derived());
    return static_cast<double>(svd.singularValues()(0));
}

template <typename Derived>
double min_singular_value(const Eigen::MatrixBase<Derived>& a)
{
    if (a.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Matrix<typename Derived::Scalar>> svd(a.derived());
    return static_cast<double>(svd.singularValues().tail(1)(0));
}

/// Flips each column so that its largest-magnitude entry is positive.
template <typename Derived>
void fix_column_signs(Eigen::MatrixBase<Derived>& v)
{
    for (Index j = 0; j < v.cols(); ++j) {
        Index at = 0;
        v.col(j).cwiseAbs().maxCoeff(&at);
        if (v(at, j) < 0)
            v.col(j) = -v.col(j);
    }
}

/**
 * Orthonormal completion of an orthonormal frame u (n x k): returns C (n x (n-k))
 * with [u | C] orthogonal. Deterministic: Householder QR of [u | I_n].
 */
template <typename Derived>
Matrix<typename Derived::Scalar> orthonormal_complement(const Eigen::MatrixBase<Derived>& u,
                                                       double tol = 1e-10)
{
    using Scalar = typename Derived::Scalar;
    const Index n = u.rows();
    const Index k = u.cols();
    require(k <= n, "orthonormal_complement: more columns than rows");
    const Matrix<Scalar> gram = u.transpose() * u;
    const double defect = static_cast<double>((gram - Matrix<Scalar>::Identity(k, k)).cwiseAbs().maxCoeff());
    require(k == 0 || defect <= tol, "orthonormal_complement: input frame is not orthonormal (rank-deficient?)");
    if (k == n)
        return Matrix<Scalar>(n, 0);
    Matrix<Scalar> stacked(n, k + n);
    stacked << u, Matrix<Scalar>::Identity(n, n);
    Eigen::HouseholderQR<Matrix<Scalar>> qr(stacked);
    const Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(n, n);
    return q.rightCols(n - k);
}

/// Q factor of a thin QR with R's diagonal made non-negative.
template <typename Derived>
Matrix<typename Derived::Scalar> orthonormal_frame(const Eigen::MatrixBase<Derived>& g)
{
    using Scalar = typename Derived::Scalar;
    const Index n = g.rows();
    const Index k = g.cols();
    Eigen::HouseholderQR<Matrix<Scalar>> qr(g.derived());
    Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(n, k);
    const Matrix<Scalar>& packed = qr.matrixQR();
    for (Index j = 0; j < k; ++j)
        if (packed(j, j) < 0)
            q.col(j) = -q.col(j);
    return q;
}

} // namespace lrsense

#endif // LRSENSE_LINALG_HPP
