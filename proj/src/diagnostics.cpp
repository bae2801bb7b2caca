#include "lrsense/diagnostics.hpp"

namespace lrsense {

ReconstructionError reconstruction_error(const MatrixXd& x, const MatrixXd& m_star, double m_star_norm,
                                         const PowerOptions& options)
{
    require(x.rows() == m_star.rows(), "reconstruction_error: dimension mismatch");
    require(m_star_norm > 0.0, "reconstruction_error: ||M*|| must be positive");
    MatrixXd residual = x * x.transpose() - m_star;
    residual = 0.5 * (residual + residual.transpose()).eval();
    return {residual.norm() / m_star_norm, spectral_norm_symmetric(residual, options).value / m_star_norm};
}

ReconstructionError reconstruction_error(const MatrixXd& x, const MatrixXd& m_star, const PowerOptions& options)
{
    return reconstruction_error(x, m_star, spectral_norm_symmetric(m_star, options).value, options);
}

ReconstructionError reconstruction_error(const MatrixXd& x, const GroundTruth& gt, const PowerOptions& options)
{
    return reconstruction_error(x, dense_m_star(gt), gt.x_norm() * gt.x_norm(), options);
}

ReconstructionError reconstruction_error(const MatrixXd& x, const ApproxTruth& truth, const PowerOptions& options)
{
    // The tail never exceeds sigma_min^2, so the top eigenvalue is the planted one.
    const double top = truth.base.x_norm() * truth.base.x_norm();
    return reconstruction_error(x, dense_m_star(truth), top, options);
}

DeltaNorm delta_norm(const SensingOperator& op, const MatrixXd& x, const MatrixXd& m_star, const PowerOptions& options)
{
    require(op.n() <= kDeltaNormMaxDim, "delta_norm: n exceeds the dense residual limit of 2000");
    require(x.rows() == op.n() && m_star.rows() == op.n(), "delta_norm: dimension mismatch");
    const MatrixXd residual = x * x.transpose() - m_star;
    const MatrixXd sym = 0.5 * (residual + residual.transpose());
    const MatrixXd e = sym - op.normal(sym);
    const SpectralNormResult norm = spectral_norm_symmetric(e, options);
    return {norm.value, norm.iterations, options.tol, norm.converged};
}

DeltaNorm delta_norm(const SensingOperator& op, const MatrixXd& x, const GroundTruth& gt, const PowerOptions& options)
{
    return delta_norm(op, x, dense_m_star(gt), options);
}

} // namespace lrsense
