#ifndef LRSENSE_SENSING_HPP
#define LRSENSE_SENSING_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lrsense/common.hpp"
#include "lrsense/problem.hpp"

namespace lrsense {

enum class SensingKind { gaussian_dense, gaussian_streamed, identity, explicit_dense };
enum class Backend { dense, streamed };

std::string to_string(SensingKind kind);
std::string to_string(Backend backend);
Backend parse_backend(const std::string& text);

inline constexpr std::size_t kDefaultMemoryCapBytes = std::size_t{2} << 30;

/// Width of the deterministic reduction (rows are always summed in fixed
/// chunks combined by a fixed tree, so results do not depend on this).
void set_thread_count(int threads);
int thread_count();

/**
 * Linear map from symmetric n x n matrices to R^m, y_i = <A_i, M>.
 *
 * Every A_i is held (or regenerated) as its scaled symmetric vectorization
 * a_i = svec(A_i), so y_i = a_i . svec(M) and A^*(y) = smat(sum_i y_i a_i).
 *
 * Gaussian rows: a_i is d = n(n+1)/2 standard normals divided by sqrt(m),
 * drawn in svec order from CounterRng(derive_seed(seed, i)). That is diagonal
 * entries of A_i ~ N(0, 1/m) and off-diagonal entries ~ N(0, 1/(2m)). The dense
 * backend stores exactly these rows; the streamed backend regenerates them.
 *
 * The identity operator maps M to svec(M) (m = d).
 *
 * Copies share storage; the object is immutable.
 */
class SensingOperator {
public:
    static SensingOperator gaussian(Index n, Index m, std::uint64_t seed, Backend backend = Backend::dense,
                                    std::size_t memory_cap_bytes = kDefaultMemoryCapBytes);
    static SensingOperator identity(Index n);
    /// Hand-built operator from symmetric matrices A_1..A_m.
    static SensingOperator from_matrices(std::span<const MatrixXd> matrices);

    SensingKind kind() const { return kind_; }
    Index n() const { return n_; }
    Index m() const { return m_; }
    Index dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }

    /// svec(A_i).
    VectorXd row(Index i) const;
    /// A_i as a dense symmetric matrix.
    MatrixXd sensing_matrix(Index i) const { return smat(row(i)); }

    VectorXd forward(const MatrixXd& m) const;
    MatrixXd adjoint(const VectorXd& y) const;
    /// A^*A(M) in one pass over the rows.
    MatrixXd normal(const MatrixXd& m) const;

    /// Forward and adjoint in svec coordinates.
    VectorXd forward_svec(const VectorXd& v) const;
    VectorXd adjoint_svec(const VectorXd& y) const;

    struct Residual {
        double loss = 0.0;   // 1/4 ||A(M) - y||^2
        VectorXd adjoint;    // svec(A^*(A(M) - y))
    };

    /**
     * For each svec input v_j: r_j = A v_j - y, loss_j = |r_j|^2 / 4 and
     * svec(A^*(r_j)). One pass over the rows serves every input, and input j's
     * arithmetic is independent of how many inputs share the pass.
     */
    std::vector<Residual> residuals(std::span<const VectorXd> inputs, const VectorXd& y) const;

    MatrixXd smat(const VectorXd& v) const;

private:
    SensingOperator() = default;

    // Contiguous rows [begin, end); streamed rows are generated into buffer.
    const double* chunk_rows(Index begin, Index end, std::vector<double>& buffer) const;

    template <typename RowVisitor>
    void visit_chunk(Index begin, Index end, RowVisitor&& visitor) const;

    SensingKind kind_ = SensingKind::identity;
    Index n_ = 0;
    Index m_ = 0;
    Index dim_ = 0;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const std::vector<double>> rows_; // row-major m x dim
};

struct Measurements {
    VectorXd y;
    double sigma = 0.0;
    std::uint64_t seed_noise = 0;
};

/// y = A(M*) + xi with xi_i ~ N(0, sigma^2) from CounterRng(derive_seed(seed_noise, 0)).
Measurements measure(const SensingOperator& op, const MatrixXd& m_star, const NoiseModel& noise);
Measurements measure(const SensingOperator& op, const GroundTruth& truth, const NoiseModel& noise);
Measurements measure(const SensingOperator& op, const ApproxTruth& truth, const NoiseModel& noise);

/**
 * Sampled rank-r isometry check. delta_hat = max(1 - min_ratio, max_ratio - 1)
 * over the trials, a lower bound on the true constant (values >= 1 mean the
 * map is not an isometry at this rank at all).
 */
struct RipEstimate {
    Index rank = 0;
    int trials = 0;
    double delta_hat = 0.0;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
};

RipEstimate estimate_rip_constant(const SensingOperator& op, Index rank, int trials, std::uint64_t seed);

} // namespace lrsense

#endif // LRSENSE_SENSING_HPP
