#include "lrsense/sensing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "lrsense/linalg.hpp"
#include "lrsense/rng.hpp"

namespace lrsense {

namespace {

constexpr Index kChunkRows = 128;
std::atomic<int> g_threads{1};

Index chunk_count(Index m) { return (m + kChunkRows - 1) / kChunkRows; }

template <typename Fn>
void for_each_chunk(Index chunks, Fn&& fn)
{
    const int threads = static_cast<int>(std::min<Index>(g_threads.load(), chunks));
    if (threads <= 1) {
        for (Index c = 0; c < chunks; ++c)
            fn(c);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (Index c = next.fetch_add(1); c < chunks; c = next.fetch_add(1))
                fn(c);
        });
}

// Pairwise combine in a fixed order: partials[0] ends up holding the total.
template <typename T>
void tree_reduce(std::vector<T>& partials)
{
    const std::size_t size = partials.size();
    for (std::size_t stride = 1; stride < size; stride *= 2)
        for (std::size_t i = 0; i + stride < size; i += 2 * stride)
            partials[i] += partials[i + stride];
}

void fill_gaussian_row(std::uint64_t seed, Index i, Index m, double* out, Index dim)
{
    CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (Index k = 0; k < dim; ++k)
        out[k] = rng.gaussian() * scale;
}

using ConstRow = Eigen::Map<const VectorXd>;

// Residual kernel over a block of R consecutive rows (row-major, stride dim).
// Dot products accumulate in L fixed lanes over fixed-width tiles, so each
// input's arithmetic is the same whatever the number of inputs in the pass.
constexpr int kLanes = 8;
constexpr Index kTile = 512;

template <int R>
void residual_block(const double* __restrict a, Index dim, std::span<const VectorXd> inputs, const double* y,
                    double* lanes, double* res, MatrixXd& adjoint, VectorXd& loss)
{
    const Index k = static_cast<Index>(inputs.size());
    const Index body = dim - dim % kLanes;
    std::fill(lanes, lanes + k * R * kLanes, 0.0);
    for (Index p0 = 0; p0 < body; p0 += kTile) {
        const Index p1 = std::min(p0 + kTile, body);
        for (Index j = 0; j < k; ++j) {
            double s[R][kLanes];
            std::copy_n(lanes + j * R * kLanes, R * kLanes, &s[0][0]);
            const double* v = inputs[static_cast<std::size_t>(j)].data();
            for (Index p = p0; p < p1; p += kLanes)
                for (int r = 0; r < R; ++r)
                    for (int l = 0; l < kLanes; ++l)
                        s[r][l] += a[r * dim + p + l] * v[p + l];
            std::copy_n(&s[0][0], R * kLanes, lanes + j * R * kLanes);
        }
    }
    for (Index j = 0; j < k; ++j) {
        const double* v = inputs[static_cast<std::size_t>(j)].data();
        for (int r = 0; r < R; ++r) {
            double t = 0.0;
            for (int l = 0; l < kLanes; ++l)
                t += lanes[(j * R + r) * kLanes + l];
            for (Index q = body; q < dim; ++q)
                t += a[r * dim + q] * v[q];
            const double e = t - y[r];
            res[j * R + r] = e;
            loss(j) += e * e;
        }
    }
    for (Index p0 = 0; p0 < dim; p0 += kTile) {
        const Index p1 = std::min(p0 + kTile, dim);
        for (Index j = 0; j < k; ++j) {
            double* acc = adjoint.col(j).data();
            double e[R];
            std::copy_n(res + j * R, R, e);
            for (Index q = p0; q < p1; ++q) {
                double t = acc[q];
                for (int r = 0; r < R; ++r)
                    t += e[r] * a[r * dim + q];
                acc[q] = t;
            }
        }
    }
}

} // namespace

void set_thread_count(int threads)
{
    require(threads >= 1, "thread count must be at least 1");
    g_threads.store(threads);
}

int thread_count() { return g_threads.load(); }

std::string to_string(SensingKind kind)
{
    switch (kind) {
    case SensingKind::gaussian_dense: return "gaussian_dense";
    case SensingKind::gaussian_streamed: return "gaussian_streamed";
    case SensingKind::identity: return "identity";
    case SensingKind::explicit_dense: return "explicit_dense";
    }
    return "unknown";
}

std::string to_string(Backend backend) { return backend == Backend::dense ? "dense" : "streamed"; }

Backend parse_backend(const std::string& text)
{
    if (text == "dense")
        return Backend::dense;
    if (text == "streamed")
        return Backend::streamed;
    throw ValidationError("unknown backend '" + text + "' (expected dense or streamed)");
}

SensingOperator SensingOperator::gaussian(Index n, Index m, std::uint64_t seed, Backend backend,
                                          std::size_t memory_cap_bytes)
{
    require(n >= 1, "gaussian operator: n must be positive");
    require(m >= 1, "gaussian operator: m must be at least 1");
    SensingOperator op;
    op.n_ = n;
    op.m_ = m;
    op.dim_ = sym_dim(n);
    op.seed_ = seed;
    if (backend == Backend::streamed) {
        op.kind_ = SensingKind::gaussian_streamed;
        return op;
    }
    const double bytes = static_cast<double>(m) * static_cast<double>(op.dim_) * sizeof(double);
    if (bytes > static_cast<double>(memory_cap_bytes))
        throw ValidationError("dense gaussian operator needs " + std::to_string(bytes / (1 << 20)) +
                              " MiB, above the cap of " + std::to_string(memory_cap_bytes >> 20) +
                              " MiB; use the streamed backend or raise the cap");
    op.kind_ = SensingKind::gaussian_dense;
    auto rows = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * op.dim_));
    const Index dim = op.dim_;
    for_each_chunk(chunk_count(m), [&](Index c) {
        const Index end = std::min(m, (c + 1) * kChunkRows);
        for (Index i = c * kChunkRows; i < end; ++i)
            fill_gaussian_row(seed, i, m, rows->data() + i * dim, dim);
    });
    op.rows_ = std::move(rows);
    return op;
}

SensingOperator SensingOperator::identity(Index n)
{
    require(n >= 1, "identity operator: n must be positive");
    SensingOperator op;
    op.kind_ = SensingKind::identity;
    op.n_ = n;
    op.dim_ = sym_dim(n);
    op.m_ = op.dim_;
    return op;
}

SensingOperator SensingOperator::from_matrices(std::span<const MatrixXd> matrices)
{
    require(!matrices.empty(), "from_matrices: need at least one matrix");
    const Index n = matrices.front().rows();
    SensingOperator op;
    op.kind_ = SensingKind::explicit_dense;
    op.n_ = n;
    op.m_ = static_cast<Index>(matrices.size());
    op.dim_ = sym_dim(n);
    auto rows = std::make_shared<std::vector<double>>(static_cast<std::size_t>(op.m_ * op.dim_));
    for (Index i = 0; i < op.m_; ++i) {
        const MatrixXd& a = matrices[static_cast<std::size_t>(i)];
        require(a.rows() == n && a.cols() == n, "from_matrices: all matrices must be n x n");
        require((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0, "from_matrices: sensing matrices must be symmetric");
        Eigen::Map<VectorXd>(rows->data() + i * op.dim_, op.dim_) = svec(a);
    }
    op.rows_ = std::move(rows);
    return op;
}

const double* SensingOperator::chunk_rows(Index begin, Index end, std::vector<double>& buffer) const
{
    if (kind_ != SensingKind::gaussian_streamed)
        return rows_->data() + begin * dim_;
    buffer.resize(static_cast<std::size_t>((end - begin) * dim_));
    for (Index i = begin; i < end; ++i)
        fill_gaussian_row(seed_, i, m_, buffer.data() + (i - begin) * dim_, dim_);
    return buffer.data();
}

template <typename RowVisitor>
void SensingOperator::visit_chunk(Index begin, Index end, RowVisitor&& visitor) const
{
    if (kind_ == SensingKind::gaussian_streamed) {
        std::vector<double> buffer(static_cast<std::size_t>(dim_));
        for (Index i = begin; i < end; ++i) {
            fill_gaussian_row(seed_, i, m_, buffer.data(), dim_);
            visitor(i, ConstRow(buffer.data(), dim_));
        }
        return;
    }
    for (Index i = begin; i < end; ++i)
        visitor(i, ConstRow(rows_->data() + i * dim_, dim_));
}

VectorXd SensingOperator::row(Index i) const
{
    require(i >= 0 && i < m_, "row index out of range");
    if (kind_ == SensingKind::identity) {
        VectorXd e = VectorXd::Zero(dim_);
        e(i) = 1.0;
        return e;
    }
    VectorXd out(dim_);
    visit_chunk(i, i + 1, [&](Index, const ConstRow& a) { out = a; });
    return out;
}

MatrixXd SensingOperator::smat(const VectorXd& v) const { return lrsense::smat(v, n_); }

VectorXd SensingOperator::forward_svec(const VectorXd& v) const
{
    require(v.size() == dim_, "forward: dimension mismatch");
    if (kind_ == SensingKind::identity)
        return v;
    VectorXd y(m_);
    for_each_chunk(chunk_count(m_), [&](Index c) {
        visit_chunk(c * kChunkRows, std::min(m_, (c + 1) * kChunkRows),
                    [&](Index i, const ConstRow& a) { y(i) = a.dot(v); });
    });
    return y;
}

VectorXd SensingOperator::adjoint_svec(const VectorXd& y) const
{
    require(y.size() == m_, "adjoint: dimension mismatch");
    if (kind_ == SensingKind::identity)
        return y;
    const Index chunks = chunk_count(m_);
    std::vector<VectorXd> partials(static_cast<std::size_t>(chunks));
    for_each_chunk(chunks, [&](Index c) {
        VectorXd acc = VectorXd::Zero(dim_);
        visit_chunk(c * kChunkRows, std::min(m_, (c + 1) * kChunkRows),
                    [&](Index i, const ConstRow& a) { acc.noalias() += y(i) * a; });
        partials[static_cast<std::size_t>(c)] = std::move(acc);
    });
    tree_reduce(partials);
    return std::move(partials.front());
}

VectorXd SensingOperator::forward(const MatrixXd& m) const
{
    require(m.rows() == n_ && m.cols() == n_, "forward: expected an n x n matrix");
    return forward_svec(svec(m));
}

MatrixXd SensingOperator::adjoint(const VectorXd& y) const { return smat(adjoint_svec(y)); }

MatrixXd SensingOperator::normal(const MatrixXd& m) const
{
    require(m.rows() == n_ && m.cols() == n_, "normal: expected an n x n matrix");
    if (kind_ == SensingKind::identity)
        return 0.5 * (m + m.transpose());
    const VectorXd v = svec(m);
    const Index chunks = chunk_count(m_);
    std::vector<VectorXd> partials(static_cast<std::size_t>(chunks));
    for_each_chunk(chunks, [&](Index c) {
        VectorXd acc = VectorXd::Zero(dim_);
        visit_chunk(c * kChunkRows, std::min(m_, (c + 1) * kChunkRows),
                    [&](Index, const ConstRow& a) { acc.noalias() += a.dot(v) * a; });
        partials[static_cast<std::size_t>(c)] = std::move(acc);
    });
    tree_reduce(partials);
    return smat(partials.front());
}

std::vector<SensingOperator::Residual> SensingOperator::residuals(std::span<const VectorXd> inputs,
                                                                  const VectorXd& y) const
{
    require(y.size() == m_, "residuals: measurement length mismatch");
    for (const VectorXd& v : inputs)
        require(v.size() == dim_, "residuals: dimension mismatch");
    const Index k = static_cast<Index>(inputs.size());
    std::vector<Residual> out(inputs.size());
    if (k == 0)
        return out;
    if (kind_ == SensingKind::identity) {
        for (Index j = 0; j < k; ++j) {
            VectorXd r = inputs[static_cast<std::size_t>(j)] - y;
            out[static_cast<std::size_t>(j)].loss = 0.25 * r.squaredNorm();
            out[static_cast<std::size_t>(j)].adjoint = std::move(r);
        }
        return out;
    }

    struct Partial {
        MatrixXd adjoint; // dim x k
        VectorXd loss;    // k
        Partial& operator+=(const Partial& other)
        {
            adjoint += other.adjoint;
            loss += other.loss;
            return *this;
        }
    };
    constexpr int kBlock = 8;
    const Index chunks = chunk_count(m_);
    std::vector<Partial> partials(static_cast<std::size_t>(chunks));
    for_each_chunk(chunks, [&](Index c) {
        const Index begin = c * kChunkRows;
        const Index end = std::min(m_, begin + kChunkRows);
        std::vector<double> buffer;
        const double* rows = chunk_rows(begin, end, buffer);
        Partial p{MatrixXd::Zero(dim_, k), VectorXd::Zero(k)};
        std::vector<double> lanes(static_cast<std::size_t>(k * kBlock * kLanes));
        std::vector<double> res(static_cast<std::size_t>(k * kBlock));
        Index i = begin;
        for (; i + kBlock <= end; i += kBlock)
            residual_block<kBlock>(rows + (i - begin) * dim_, dim_, inputs, y.data() + i, lanes.data(), res.data(),
                                   p.adjoint, p.loss);
        for (; i < end; ++i)
            residual_block<1>(rows + (i - begin) * dim_, dim_, inputs, y.data() + i, lanes.data(), res.data(),
                              p.adjoint, p.loss);
        partials[static_cast<std::size_t>(c)] = std::move(p);
    });
    tree_reduce(partials);
    for (Index j = 0; j < k; ++j) {
        out[static_cast<std::size_t>(j)].loss = 0.25 * partials.front().loss(j);
        out[static_cast<std::size_t>(j)].adjoint = partials.front().adjoint.col(j);
    }
    return out;
}

Measurements measure(const SensingOperator& op, const MatrixXd& m_star, const NoiseModel& noise)
{
    require(noise.sigma >= 0.0 && std::isfinite(noise.sigma), "measure: noise sigma must be >= 0");
    Measurements out{op.forward(m_star), noise.sigma, noise.seed};
    if (noise.sigma > 0.0) {
        CounterRng rng(derive_seed(noise.seed, 0));
        for (Index i = 0; i < out.y.size(); ++i)
            out.y(i) += noise.sigma * rng.gaussian();
    }
    return out;
}

Measurements measure(const SensingOperator& op, const GroundTruth& truth, const NoiseModel& noise)
{
    return measure(op, dense_m_star(truth), noise);
}

Measurements measure(const SensingOperator& op, const ApproxTruth& truth, const NoiseModel& noise)
{
    return measure(op, dense_m_star(truth), noise);
}

RipEstimate estimate_rip_constant(const SensingOperator& op, Index rank, int trials, std::uint64_t seed)
{
    require(trials >= 1, "estimate_rip_constant: trials must be >= 1");
    require(rank >= 1 && rank <= op.n(), "estimate_rip_constant: need 1 <= rank <= n");
    RipEstimate est;
    est.rank = rank;
    est.trials = trials;
    est.min_ratio = std::numeric_limits<double>::infinity();
    est.max_ratio = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const MatrixXd q = orthonormal_frame(rng.gaussian_matrix(op.n(), rank));
        VectorXd lambda(rank);
        for (Index j = 0; j < rank; ++j) {
            const double sign = (rng.next_u64() & 1U) ? -1.0 : 1.0;
            lambda(j) = sign * (1.0 - rng.uniform());
        }
        lambda /= lambda.norm();
        const VectorXd v = svec(MatrixXd(q * lambda.asDiagonal() * q.transpose()));
        // ||M||_F^2 == |svec(M)|^2, which keeps the identity map exactly isometric here.
        const double ratio = op.forward_svec(v).squaredNorm() / v.squaredNorm();
        est.min_ratio = std::min(est.min_ratio, ratio);
        est.max_ratio = std::max(est.max_ratio, ratio);
    }
    est.delta_hat = std::max({1.0 - est.min_ratio, est.max_ratio - 1.0, 0.0});
    return est;
}

} // namespace lrsense
