#ifndef LRSENSE_DIAGNOSTICS_HPP
#define LRSENSE_DIAGNOSTICS_HPP

#include <algorithm>
#include <limits>

#include "lrsense/linalg.hpp"
#include "lrsense/problem.hpp"
#include "lrsense/sensing.hpp"

namespace lrsense {

/**
 * Split of an iterate X (n x r, r >= r*) against the planted subspace:
 *
 *   X = U* S~ V^T + U*perp N~ V^T + U*perp O~ Vperp^T
 *
 * with S = U*^T X = U_s Sigma_s V_full^T (right singular vectors sorted by
 * descending singular value, each sign-fixed so its largest-magnitude entry is
 * positive), V the first r* columns, Vperp the deterministic completion of V,
 * S~ = S V, N~ = N V, O~ = N Vperp where N = U*perp^T X.
 */
template <typename Scalar>
struct IterateDecomposition {
    Matrix<Scalar> s_tilde;  // r* x r*
    Matrix<Scalar> n_tilde;  // (n - r*) x r*
    Matrix<Scalar> o_tilde;  // (n - r*) x (r - r*)
    Matrix<Scalar> v;        // r x r*
    Matrix<Scalar> v_perp;   // r x (r - r*)
};

template <typename DX, typename DU, typename DP>
IterateDecomposition<typename DX::Scalar> decompose_iterate(const Eigen::MatrixBase<DX>& x,
                                                            const Eigen::MatrixBase<DU>& u_star,
                                                            const Eigen::MatrixBase<DP>& u_perp)
{
    using Scalar = typename DX::Scalar;
    const Index r = x.cols();
    const Index r_star = u_star.cols();
    require(x.rows() == u_star.rows(), "decompose_iterate: row mismatch between iterate and U*");
    require(u_perp.rows() == u_star.rows() && u_perp.cols() == u_star.rows() - r_star,
            "decompose_iterate: U*perp has the wrong shape");
    require(r >= r_star, "decompose_iterate: factor rank r must be at least r*");

    const Matrix<Scalar> s = u_star.transpose() * x;
    const Matrix<Scalar> nn = u_perp.transpose() * x;
    Eigen::JacobiSVD<Matrix<Scalar>> svd(s, Eigen::ComputeFullV);
    Matrix<Scalar> v_full = svd.matrixV();
    Matrix<Scalar> v = v_full.leftCols(r_star);
    fix_column_signs(v);

    IterateDecomposition<Scalar> dec;
    dec.v_perp = orthonormal_complement(v, 1e-8);
    dec.v = std::move(v);
    dec.s_tilde = s * dec.v;
    dec.n_tilde = nn * dec.v;
    dec.o_tilde = nn * dec.v_perp;
    return dec;
}

template <typename DX>
IterateDecomposition<typename DX::Scalar> decompose_iterate(const Eigen::MatrixBase<DX>& x, const GroundTruth& gt)
{
    const MatrixXd u_perp = orthonormal_complement(gt.u_star());
    return decompose_iterate(x, gt.u_star().cast<typename DX::Scalar>(),
                             u_perp.cast<typename DX::Scalar>());
}

/// U* S~ V^T + U*perp N~ V^T + U*perp O~ Vperp^T.
template <typename Scalar, typename DU, typename DP>
Matrix<Scalar> reassemble(const IterateDecomposition<Scalar>& dec, const Eigen::MatrixBase<DU>& u_star,
                          const Eigen::MatrixBase<DP>& u_perp)
{
    Matrix<Scalar> x = u_star * dec.s_tilde * dec.v.transpose() + u_perp * dec.n_tilde * dec.v.transpose();
    if (dec.o_tilde.cols() > 0)
        x += u_perp * dec.o_tilde * dec.v_perp.transpose();
    return x;
}

struct PhaseMetrics {
    double sigma_min_scaled = 0.0; // sigma_min((Sigma*^2 + lambda I)^{-1/2} S~)
    double misalign = 0.0;         // ||N~ S~^{-1} Sigma*||, +inf when S~ is singular
    bool misalign_singular = false;
    double gamma_norm = 0.0;       // ||Sigma*^{-1} (S~ S~^T - Sigma*^2) Sigma*^{-1}||
    double overparam_norm = 0.0;   // ||O~||
    double signal_norm = 0.0;      // ||S~||
};

template <typename Scalar>
PhaseMetrics phase_metrics(const IterateDecomposition<Scalar>& dec, const GroundTruth& gt, double lambda)
{
    require(lambda >= 0.0, "phase_metrics: lambda must be non-negative");
    const Vector<Scalar> sigma = gt.sigma_star().cast<Scalar>();
    const Vector<Scalar> sigma_sq = sigma.array().square();
    const Matrix<Scalar>& s = dec.s_tilde;

    PhaseMetrics out;
    const Vector<Scalar> row_scale = (sigma_sq.array() + Scalar(lambda)).rsqrt();
    out.sigma_min_scaled = min_singular_value(Matrix<Scalar>(row_scale.asDiagonal() * s));

    Eigen::JacobiSVD<Matrix<Scalar>> svd(s);
    const auto& sv = svd.singularValues();
    out.signal_norm = sv.size() ? static_cast<double>(sv(0)) : 0.0;
    const double smallest = sv.size() ? static_cast<double>(sv(sv.size() - 1)) : 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    const double scale = std::max(out.signal_norm, operator_norm(dec.n_tilde));
    if (smallest <= eps * static_cast<double>(s.rows()) * scale || out.signal_norm == 0.0) {
        out.misalign_singular = true;
        out.misalign = std::numeric_limits<double>::infinity();
    } else {
        // N~ S~^{-1} Sigma* = (S~^{-T} N~^T)^T Sigma*
        const Matrix<Scalar> solved = s.transpose().partialPivLu().solve(dec.n_tilde.transpose());
        out.misalign = operator_norm(Matrix<Scalar>(solved.transpose() * sigma.asDiagonal()));
    }

    const Vector<Scalar> inv_sigma = sigma.cwiseInverse();
    const Matrix<Scalar> gram = s * s.transpose();
    const Matrix<Scalar> gamma =
        inv_sigma.asDiagonal() * (gram - Matrix<Scalar>(sigma_sq.asDiagonal())) * inv_sigma.asDiagonal();
    out.gamma_norm = operator_norm(gamma);
    out.overparam_norm = operator_norm(dec.o_tilde);
    return out;
}

struct ReconstructionError {
    double rel_fro = 0.0; // ||XX^T - M*||_F / ||M*||
    double rel_op = 0.0;  // ||XX^T - M*|| / ||M*||
};

/// Errors relative to the spectral norm of M*; ||M*|| is computed here.
ReconstructionError reconstruction_error(const MatrixXd& x, const MatrixXd& m_star, const PowerOptions& options = {});
ReconstructionError reconstruction_error(const MatrixXd& x, const GroundTruth& gt, const PowerOptions& options = {});
ReconstructionError reconstruction_error(const MatrixXd& x, const ApproxTruth& truth, const PowerOptions& options = {});

/// Same, with ||M*|| supplied by the caller.
ReconstructionError reconstruction_error(const MatrixXd& x, const MatrixXd& m_star, double m_star_norm,
                                         const PowerOptions& options = {});

struct DeltaNorm {
    double value = 0.0;
    int iterations = 0;
    double tol = 0.0;
    bool converged = true;
};

inline constexpr Index kDeltaNormMaxDim = 2000;

/// ||(I - A^*A)(XX^T - M*)|| via power iteration on the symmetric residual.
DeltaNorm delta_norm(const SensingOperator& op, const MatrixXd& x, const MatrixXd& m_star,
                     const PowerOptions& options = {});
DeltaNorm delta_norm(const SensingOperator& op, const MatrixXd& x, const GroundTruth& gt,
                     const PowerOptions& options = {});

} // namespace lrsense

#endif // LRSENSE_DIAGNOSTICS_HPP
