#ifndef LRSENSE_PROBLEM_HPP
#define LRSENSE_PROBLEM_HPP

#include <cstdint>

#include "lrsense/common.hpp"

namespace lrsense {

enum class SpectrumSpacing { linear, geometric };

/**
 * Planted PSD ground truth M* = X* X*^T with X* = U* diag(sigma*).
 *
 * sigma* holds the singular values of X* (so M* has eigenvalues sigma*^2),
 * sorted non-increasing and strictly positive; U* is an orthonormal frame.
 * Immutable after construction.
 */
class GroundTruth {
public:
    /// Validates orthonormality (1e-12 per entry) and the ordering of sigma_star.
    GroundTruth(MatrixXd u_star, VectorXd sigma_star, std::uint64_t seed = 0);

    Index n() const { return u_star_.rows(); }
    Index r_star() const { return u_star_.cols(); }
    const MatrixXd& u_star() const { return u_star_; }
    const VectorXd& sigma_star() const { return sigma_star_; }
    std::uint64_t seed() const { return seed_; }

    double condition_number() const { return sigma_star_(0) / sigma_star_(r_star() - 1); }
    double sigma_min() const { return sigma_star_(r_star() - 1); }
    /// ||X*|| (spectral); ||M*|| is its square.
    double x_norm() const { return sigma_star_(0); }

    MatrixXd x_star() const { return u_star_ * sigma_star_.asDiagonal(); }

private:
    MatrixXd u_star_;
    VectorXd sigma_star_;
    std::uint64_t seed_;
};

/// Rank-r_star part plus a decaying PSD tail orthogonal to it.
struct ApproxTruth {
    GroundTruth base;
    VectorXd tail_spectrum; // eigenvalues of the residual, length n - r_star
    MatrixXd tail_basis;    // n x (n - r_star), completes base.u_star()
};

struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/**
 * Random orthonormal U* (QR of an i.i.d. Gaussian n x r_star draw, R diagonal
 * made positive) and sigma* spaced from 1 down to 1/kappa.
 */
GroundTruth make_ground_truth(Index n, Index r_star, double kappa, std::uint64_t seed,
                              SpectrumSpacing spacing = SpectrumSpacing::linear);

/// U* diag(sigma*^2) U*^T, exactly symmetric.
MatrixXd dense_m_star(const GroundTruth& gt);

/// Tail eigenvalues sigma_min^2 * tail_decay^k for k = 1 .. n - r_star.
ApproxTruth make_approx_truth(Index n, Index r_star, double kappa, double tail_decay, std::uint64_t seed,
                              SpectrumSpacing spacing = SpectrumSpacing::linear);

/// M_r + M_r' as a dense symmetric matrix.
MatrixXd dense_m_star(const ApproxTruth& truth);
MatrixXd dense_tail(const ApproxTruth& truth);

} // namespace lrsense

#endif // LRSENSE_PROBLEM_HPP
