#include "lrsense/problem.hpp"

#include <cmath>

#include "lrsense/linalg.hpp"
#include "lrsense/rng.hpp"

namespace lrsense {

namespace {

// Stream indices under the ground-truth seed.
constexpr std::uint64_t kFrameStream = 0;

VectorXd spaced_spectrum(Index r_star, double kappa, SpectrumSpacing spacing)
{
    VectorXd sigma(r_star);
    if (r_star == 1) {
        sigma(0) = 1.0;
        return sigma;
    }
    for (Index i = 0; i < r_star; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(r_star - 1);
        sigma(i) = spacing == SpectrumSpacing::linear ? 1.0 - (1.0 - 1.0 / kappa) * frac : std::pow(kappa, -frac);
    }
    sigma(0) = 1.0;
    sigma(r_star - 1) = 1.0 / kappa;
    return sigma;
}

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

} // namespace

GroundTruth::GroundTruth(MatrixXd u_star, VectorXd sigma_star, std::uint64_t seed)
    : u_star_(std::move(u_star)), sigma_star_(std::move(sigma_star)), seed_(seed)
{
    require(u_star_.rows() > 0, "ground truth: n must be positive");
    require(u_star_.cols() >= 1 && u_star_.cols() <= u_star_.rows(), "ground truth: need 1 <= r_star <= n");
    require(sigma_star_.size() == u_star_.cols(), "ground truth: sigma_star length must equal r_star");
    const MatrixXd gram = u_star_.transpose() * u_star_;
    const double defect = (gram - MatrixXd::Identity(r_star(), r_star())).cwiseAbs().maxCoeff();
    require(defect <= 1e-12, "ground truth: u_star is not orthonormal");
    require(sigma_star_(r_star() - 1) > 0.0, "ground truth: singular values must be positive");
    for (Index i = 1; i < r_star(); ++i)
        require(sigma_star_(i - 1) >= sigma_star_(i), "ground truth: singular values must be non-increasing");
}

GroundTruth make_ground_truth(Index n, Index r_star, double kappa, std::uint64_t seed, SpectrumSpacing spacing)
{
    require(n > 0, "make_ground_truth: n must be positive");
    require(r_star >= 1 && r_star <= n, "make_ground_truth: need 1 <= r_star <= n");
    require(std::isfinite(kappa) && kappa >= 1.0, "make_ground_truth: kappa must be >= 1");
    CounterRng rng(derive_seed(seed, kFrameStream));
    const MatrixXd u = orthonormal_frame(rng.gaussian_matrix(n, r_star));
    return GroundTruth(u, spaced_spectrum(r_star, kappa, spacing), seed);
}

MatrixXd dense_m_star(const GroundTruth& gt)
{
    const MatrixXd& u = gt.u_star();
    return symmetrized(u * gt.sigma_star().array().square().matrix().asDiagonal() * u.transpose());
}

ApproxTruth make_approx_truth(Index n, Index r_star, double kappa, double tail_decay, std::uint64_t seed,
                              SpectrumSpacing spacing)
{
    require(tail_decay > 0.0 && tail_decay < 1.0, "make_approx_truth: tail_decay must lie in (0, 1)");
    GroundTruth base = make_ground_truth(n, r_star, kappa, seed, spacing);
    const double floor = base.sigma_min() * base.sigma_min();
    VectorXd tail(n - r_star);
    double level = floor;
    for (Index k = 0; k < tail.size(); ++k) {
        level *= tail_decay;
        tail(k) = level;
    }
    MatrixXd basis = orthonormal_complement(base.u_star());
    return ApproxTruth{std::move(base), std::move(tail), std::move(basis)};
}

MatrixXd dense_tail(const ApproxTruth& truth)
{
    const MatrixXd& b = truth.tail_basis;
    return symmetrized(b * truth.tail_spectrum.asDiagonal() * b.transpose());
}

MatrixXd dense_m_star(const ApproxTruth& truth) { return dense_m_star(truth.base) + dense_tail(truth); }

} // namespace lrsense
