#ifndef LRSENSE_SOLVER_HPP
#define LRSENSE_SOLVER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrsense/diagnostics.hpp"
#include "lrsense/linalg.hpp"
#include "lrsense/problem.hpp"
#include "lrsense/sensing.hpp"

namespace lrsense {

enum class Algorithm { scaled_gd_lambda, gd, scaled_gd, prec_gd };
enum class InitKind { small_random, spectral, explicit_matrix };
enum class StopReason { target_reached, patience, max_iters, diverged };

std::string to_string(Algorithm algorithm);
std::string to_string(InitKind init);
std::string to_string(StopReason reason);
/// Accepts snake_case or kebab-case names.
Algorithm parse_algorithm(const std::string& text);
InitKind parse_init(const std::string& text);
StopReason parse_stop_reason(const std::string& text);

// ---------------------------------------------------------------------------
// Update rules. All are right-preconditioned gradient steps on the factor;
// the r x r system is solved with a Cholesky factorization, never inverted.

/**
 * x - eta * grad * (x^T x + lambda I)^{-1}. With lambda = 0 this is ScaledGD
 * and throws NumericalError when x^T x is singular.
 */
template <typename DX, typename DG>
Matrix<typename DX::Scalar> step_scaled_gd_lambda(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& grad,
                                                  typename DX::Scalar eta, typename DX::Scalar lambda)
{
    using Scalar = typename DX::Scalar;
    require(x.rows() == grad.rows() && x.cols() == grad.cols(), "step: gradient shape does not match the iterate");
    require(lambda >= Scalar(0), "step: lambda must be non-negative");
    const Index r = x.cols();
    Matrix<Scalar> precond = x.transpose() * x;
    precond.diagonal().array() += lambda;
    Eigen::LLT<Matrix<Scalar>> llt(precond);
    const bool singular = llt.info() != Eigen::Success ||
                          (lambda == Scalar(0) && (r == 0 || llt.rcond() < std::numeric_limits<Scalar>::epsilon()));
    if (singular)
        throw NumericalError("preconditioner singular; use lambda > 0");
    // grad * P^{-1} = (P^{-1} grad^T)^T since P is symmetric.
    const Matrix<Scalar> direction = llt.solve(grad.transpose()).transpose();
    return x - eta * direction;
}

template <typename DX, typename DG>
Matrix<typename DX::Scalar> step_gd(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& grad,
                                    typename DX::Scalar eta)
{
    require(x.rows() == grad.rows() && x.cols() == grad.cols(), "step: gradient shape does not match the iterate");
    return x - eta * grad;
}

template <typename DX, typename DG>
Matrix<typename DX::Scalar> step_scaled_gd(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& grad,
                                           typename DX::Scalar eta)
{
    return step_scaled_gd_lambda(x, grad, eta, typename DX::Scalar(0));
}

/// Damping follows the loss: lambda_t = sqrt(f(x)).
template <typename DX, typename DG>
Matrix<typename DX::Scalar> step_prec_gd(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& grad,
                                         typename DX::Scalar eta, typename DX::Scalar current_loss)
{
    require(current_loss >= 0, "step_prec_gd: loss must be non-negative");
    return step_scaled_gd_lambda(x, grad, eta, std::sqrt(current_loss));
}

// ---------------------------------------------------------------------------
// Objective.

/// f(X) = 1/4 ||A(X X^T) - y||^2.
double loss(const SensingOperator& op, const VectorXd& y, const MatrixXd& x);

/// (A^*A(X X^T) - A^*(y)) X.
MatrixXd gradient(const SensingOperator& op, const VectorXd& y, const MatrixXd& x);

// ---------------------------------------------------------------------------
// Initialization and damping.

/// alpha * G with G_ij ~ N(0, 1/n) drawn from CounterRng(derive_seed(seed, 0)).
MatrixXd random_init(Index n, Index r, double alpha, std::uint64_t seed);

/// Top-r eigenpairs of A^*(y), negative eigenvalues clipped to zero.
MatrixXd spectral_init(const SensingOperator& op, const VectorXd& y, Index r);

struct DampingEstimate {
    double lambda_hat = 0.0;
    Index rank_guess = 0;
    double c_frac = 0.0;
    VectorXd spectrum_used; // top rank_guess eigenvalues of A^*(y)
};

// Fraction of lambda_{rank_guess}(A^*(y)) used by the auto damping estimate.
inline constexpr double kDefaultDampingFraction = 0.25;

/// lambda_hat = c_frac * max(lambda_{rank_guess}(A^*(y)), 1e-12 * lambda_1).
DampingEstimate estimate_damping(const SensingOperator& op, const VectorXd& y, Index rank_guess,
                                 double c_frac = kDefaultDampingFraction);

// ---------------------------------------------------------------------------
// Run loop.

struct StoppingRule {
    std::optional<double> target_rel_err; // needs an oracle
    std::optional<int> patience;
    double improve_tol = 1e-3;
};

struct SolverConfig {
    Algorithm algorithm = Algorithm::scaled_gd_lambda;
    Index r = 1;
    double eta = 0.3;
    double lambda = 0.0; // scaled_gd_lambda only
    double alpha = 1e-3;
    InitKind init = InitKind::small_random;
    std::optional<MatrixXd> x0; // InitKind::explicit_matrix
    int max_iters = 1000;
    StoppingRule stop;
    std::uint64_t seed_init = 0;
    int record_every = 1;
    bool diagnostics = false;  // phase metrics per record, needs an oracle with a GroundTruth
    bool checkpoints = false;  // keep X at every record
    double divergence_factor = 1e6;
};

void validate(const SolverConfig& config, Index n);

/// Known truth used for error reporting and the oracle stopping rule.
struct Oracle {
    MatrixXd m_star;
    double m_star_norm = 1.0;             // spectral
    std::optional<GroundTruth> planted;   // rank-r* part, for phase metrics

    static Oracle from(const GroundTruth& gt);
    static Oracle from(const ApproxTruth& truth);
};

struct IterateState {
    MatrixXd x;
    int t = 0;
    double loss = 0.0;
    std::chrono::nanoseconds elapsed{0};
};

struct TrajectoryRecord {
    int t = 0;
    double loss = 0.0;
    std::optional<double> rel_err_fro;
    std::optional<double> rel_err_op;
    std::optional<PhaseMetrics> phase;
    double elapsed_ms = 0.0;
};

struct Checkpoint {
    int t = 0;
    double elapsed_ms = 0.0;
    double loss = 0.0;
    double lambda = 0.0; // damping the step applies at this iterate
    MatrixXd x;
};

struct Trajectory {
    std::vector<TrajectoryRecord> records; // every record_every iterations, plus the final one
    StopReason stop_reason = StopReason::max_iters;
    IterateState final_state;
    std::optional<int> iters_to_target;
    double lambda = 0.0; // damping used by the step (0 for gd/scaled_gd, last lambda_t for prec_gd)
    std::vector<Checkpoint> checkpoints;
    std::string divergence_message;
};

/// Initial iterate per config.init.
MatrixXd initial_iterate(const SensingOperator& op, const VectorXd& y, const SolverConfig& config);

/**
 * Iterates the selected update from the configured initialization. Stop rules
 * are checked at every t in order target, patience, max_iters. Throws
 * NumericalError if the loss blows past divergence_factor times its initial
 * value (or stops being finite).
 */
Trajectory run(const SensingOperator& op, const VectorXd& y, const SolverConfig& config,
               const std::optional<Oracle>& oracle = std::nullopt);

enum class LockstepPolicy {
    independent,     // each run stops on its own rules
    first_to_target, // once any run hits the target, the others stop at that iteration
};

/**
 * Runs several configurations on one operator in lockstep, sharing each pass
 * over the sensing rows. Every member's trajectory is bit-identical to a solo
 * run() of the same config (first_to_target only truncates). Divergence does not
 * throw here: the member stops with StopReason::diverged.
 */
std::vector<Trajectory> run_many(const SensingOperator& op, const VectorXd& y, const std::vector<SolverConfig>& configs,
                                 const std::optional<Oracle>& oracle = std::nullopt,
                                 LockstepPolicy policy = LockstepPolicy::independent);

} // namespace lrsense

#endif // LRSENSE_SOLVER_HPP
