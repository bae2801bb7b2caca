#include "lrsense/solver.hpp"

#include <algorithm>
#include <chrono>

#include "lrsense/rng.hpp"

namespace lrsense {

namespace {

std::string normalized(std::string text)
{
    std::replace(text.begin(), text.end(), '-', '_');
    return text;
}

using Clock = std::chrono::steady_clock;

double to_ms(std::chrono::nanoseconds ns) { return std::chrono::duration<double, std::milli>(ns).count(); }

struct Member {
    const SolverConfig* config = nullptr;
    MatrixXd x;
    MatrixXd gram_nn;   // x x^T at the current t
    Trajectory trajectory;
    double initial_loss = 0.0;
    double best_loss = 0.0;
    int last_improvement = 0;
    bool active = true;
};

class Lockstep {
public:
    Lockstep(const SensingOperator& op, const VectorXd& y, const std::optional<Oracle>& oracle)
        : op_(op), y_(y), oracle_(oracle)
    {
        if (oracle_ && oracle_->planted)
            u_perp_ = orthonormal_complement(oracle_->planted->u_star());
    }

    std::vector<Trajectory> run(const std::vector<SolverConfig>& configs, LockstepPolicy policy)
    {
        const auto start = Clock::now();
        std::vector<Member> members(configs.size());
        for (std::size_t j = 0; j < configs.size(); ++j) {
            validate(configs[j], op_.n());
            if (configs[j].stop.target_rel_err)
                require(oracle_.has_value(), "run: a target error needs an oracle ground truth");
            if (configs[j].diagnostics)
                require(oracle_ && oracle_->planted, "run: diagnostics need an oracle with a planted ground truth");
            members[j].config = &configs[j];
            members[j].x = initial_iterate(op_, y_, configs[j]);
        }

        for (int t = 0;; ++t) {
            std::vector<Member*> active;
            std::vector<VectorXd> inputs;
            for (Member& member : members) {
                if (!member.active)
                    continue;
                member.gram_nn = member.x * member.x.transpose();
                inputs.push_back(svec(member.gram_nn));
                active.push_back(&member);
            }
            if (active.empty())
                break;
            const std::vector<SensingOperator::Residual> residuals = op_.residuals(inputs, y_);
            const auto elapsed = Clock::now() - start;

            bool someone_hit_target = false;
            for (std::size_t j = 0; j < active.size(); ++j) {
                check(*active[j], t, residuals[j].loss, elapsed);
                if (!active[j]->active && active[j]->trajectory.stop_reason == StopReason::target_reached)
                    someone_hit_target = true;
            }
            const bool truncate = policy == LockstepPolicy::first_to_target && someone_hit_target;
            for (std::size_t j = 0; j < active.size(); ++j) {
                if (!active[j]->active)
                    continue;
                if (truncate)
                    finish(*active[j], t, residuals[j].loss, StopReason::max_iters, elapsed);
                else
                    step(*active[j], residuals[j]);
            }
        }

        std::vector<Trajectory> out;
        out.reserve(members.size());
        for (Member& member : members)
            out.push_back(std::move(member.trajectory));
        return out;
    }

private:
    double step_lambda(const Member& member, double loss) const
    {
        switch (member.config->algorithm) {
        case Algorithm::scaled_gd_lambda: return member.config->lambda;
        case Algorithm::prec_gd: return std::sqrt(std::max(loss, 0.0));
        case Algorithm::gd:
        case Algorithm::scaled_gd: return 0.0;
        }
        return 0.0;
    }

    void record(Member& member, int t, double loss, std::chrono::nanoseconds elapsed)
    {
        const SolverConfig& config = *member.config;
        TrajectoryRecord rec;
        rec.t = t;
        rec.loss = loss;
        rec.elapsed_ms = to_ms(elapsed);
        if (oracle_) {
            const ReconstructionError err = reconstruction_error(member.x, oracle_->m_star, oracle_->m_star_norm);
            rec.rel_err_fro = err.rel_fro;
            rec.rel_err_op = err.rel_op;
        }
        if (config.diagnostics) {
            const auto dec = decompose_iterate(member.x, oracle_->planted->u_star(), u_perp_);
            rec.phase = phase_metrics(dec, *oracle_->planted, step_lambda(member, loss));
        }
        member.trajectory.records.push_back(std::move(rec));
        if (config.checkpoints)
            member.trajectory.checkpoints.push_back({t, to_ms(elapsed), loss, step_lambda(member, loss), member.x});
    }

    void finish(Member& member, int t, double loss, StopReason reason, std::chrono::nanoseconds elapsed)
    {
        Trajectory& traj = member.trajectory;
        if (traj.records.empty() || traj.records.back().t != t)
            record(member, t, loss, elapsed);
        traj.stop_reason = reason;
        traj.final_state = IterateState{member.x, t, loss, elapsed};
        traj.lambda = step_lambda(member, loss);
        member.active = false;
    }

    void check(Member& member, int t, double loss, std::chrono::nanoseconds elapsed)
    {
        const SolverConfig& config = *member.config;
        Trajectory& traj = member.trajectory;
        traj.final_state.loss = loss;

        if (t == 0) {
            member.initial_loss = loss;
            member.best_loss = loss;
        }
        const bool blew_up = !std::isfinite(loss) ||
                             (member.initial_loss > 0.0 && loss > config.divergence_factor * member.initial_loss);
        if (blew_up) {
            traj.divergence_message = "loss " + std::to_string(loss) + " at iteration " + std::to_string(t) +
                                      " exceeds " + std::to_string(config.divergence_factor) +
                                      "x its initial value " + std::to_string(member.initial_loss) +
                                      "; reduce eta or alpha";
            finish(member, t, loss, StopReason::diverged, elapsed);
            return;
        }

        if (config.stop.target_rel_err) {
            const double rel = (member.gram_nn - oracle_->m_star).norm() / oracle_->m_star_norm;
            if (rel <= *config.stop.target_rel_err) {
                traj.iters_to_target = t;
                finish(member, t, loss, StopReason::target_reached, elapsed);
                return;
            }
        }
        if (loss < member.best_loss * (1.0 - config.stop.improve_tol)) {
            member.best_loss = loss;
            member.last_improvement = t;
        }
        if (config.stop.patience && t - member.last_improvement >= *config.stop.patience) {
            finish(member, t, loss, StopReason::patience, elapsed);
            return;
        }
        if (t >= config.max_iters) {
            finish(member, t, loss, StopReason::max_iters, elapsed);
            return;
        }
        if (t % config.record_every == 0)
            record(member, t, loss, elapsed);
    }

    void step(Member& member, const SensingOperator::Residual& residual)
    {
        const SolverConfig& config = *member.config;
        const MatrixXd grad = op_.smat(residual.adjoint) * member.x;
        switch (config.algorithm) {
        case Algorithm::scaled_gd_lambda: member.x = step_scaled_gd_lambda(member.x, grad, config.eta, config.lambda); break;
        case Algorithm::gd: member.x = step_gd(member.x, grad, config.eta); break;
        case Algorithm::scaled_gd: member.x = step_scaled_gd(member.x, grad, config.eta); break;
        case Algorithm::prec_gd: member.x = step_prec_gd(member.x, grad, config.eta, residual.loss); break;
        }
    }

    const SensingOperator& op_;
    const VectorXd& y_;
    const std::optional<Oracle>& oracle_;
    MatrixXd u_perp_;
};

} // namespace

std::string to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::scaled_gd_lambda: return "scaled_gd_lambda";
    case Algorithm::gd: return "gd";
    case Algorithm::scaled_gd: return "scaled_gd";
    case Algorithm::prec_gd: return "prec_gd";
    }
    return "unknown";
}

std::string to_string(InitKind init)
{
    switch (init) {
    case InitKind::small_random: return "small_random";
    case InitKind::spectral: return "spectral";
    case InitKind::explicit_matrix: return "explicit";
    }
    return "unknown";
}

std::string to_string(StopReason reason)
{
    switch (reason) {
    case StopReason::target_reached: return "target_reached";
    case StopReason::patience: return "patience";
    case StopReason::max_iters: return "max_iters";
    case StopReason::diverged: return "diverged";
    }
    return "unknown";
}

Algorithm parse_algorithm(const std::string& text)
{
    const std::string key = normalized(text);
    for (Algorithm a : {Algorithm::scaled_gd_lambda, Algorithm::gd, Algorithm::scaled_gd, Algorithm::prec_gd})
        if (to_string(a) == key)
            return a;
    throw ValidationError("unknown algorithm '" + text + "' (expected scaled-gd-lambda, gd, scaled-gd or prec-gd)");
}

InitKind parse_init(const std::string& text)
{
    const std::string key = normalized(text);
    for (InitKind k : {InitKind::small_random, InitKind::spectral, InitKind::explicit_matrix})
        if (to_string(k) == key)
            return k;
    throw ValidationError("unknown init '" + text + "' (expected small-random, spectral or explicit)");
}

StopReason parse_stop_reason(const std::string& text)
{
    for (StopReason s : {StopReason::target_reached, StopReason::patience, StopReason::max_iters, StopReason::diverged})
        if (to_string(s) == text)
            return s;
    throw ValidationError("unknown stop reason '" + text + "'");
}

double loss(const SensingOperator& op, const VectorXd& y, const MatrixXd& x)
{
    require(x.rows() == op.n(), "loss: iterate has the wrong number of rows");
    require(y.size() == op.m(), "loss: measurement length mismatch");
    return 0.25 * (op.forward(x * x.transpose()) - y).squaredNorm();
}

MatrixXd gradient(const SensingOperator& op, const VectorXd& y, const MatrixXd& x)
{
    require(x.rows() == op.n(), "gradient: iterate has the wrong number of rows");
    require(y.size() == op.m(), "gradient: measurement length mismatch");
    return (op.normal(x * x.transpose()) - op.adjoint(y)) * x;
}

MatrixXd random_init(Index n, Index r, double alpha, std::uint64_t seed)
{
    require(alpha > 0.0, "random_init: alpha must be positive");
    require(n >= 1 && r >= 1, "random_init: n and r must be positive");
    CounterRng rng(derive_seed(seed, 0));
    const MatrixXd g = rng.gaussian_matrix(n, r) / std::sqrt(static_cast<double>(n));
    return alpha * g;
}

MatrixXd spectral_init(const SensingOperator& op, const VectorXd& y, Index r)
{
    require(r >= 1 && r <= op.n(), "spectral_init: need 1 <= r <= n");
    const SymmetricEigen<double> eig = eigen_descending(op.adjoint(y));
    const VectorXd scale = eig.values.head(r).cwiseMax(0.0).cwiseSqrt();
    return eig.vectors.leftCols(r) * scale.asDiagonal();
}

DampingEstimate estimate_damping(const SensingOperator& op, const VectorXd& y, Index rank_guess, double c_frac)
{
    require(rank_guess >= 1 && rank_guess <= op.n(), "estimate_damping: need 1 <= rank_guess <= n");
    require(c_frac > 0.0, "estimate_damping: c_frac must be positive");
    const SymmetricEigen<double> eig = eigen_descending(op.adjoint(y));
    const double top = eig.values(0);
    require(top > 0.0, "estimate_damping: A^*(y) has no positive eigenvalue");
    const double floor = 1e-12 * top;
    DampingEstimate est;
    est.rank_guess = rank_guess;
    est.c_frac = c_frac;
    est.spectrum_used = eig.values.head(rank_guess);
    est.lambda_hat = c_frac * std::max(eig.values(rank_guess - 1), floor);
    return est;
}

void validate(const SolverConfig& config, Index n)
{
    require(config.r >= 1 && config.r <= n, "solver: need 1 <= r <= n");
    require(config.eta > 0.0 && std::isfinite(config.eta), "solver: eta must be positive");
    require(config.lambda >= 0.0 && std::isfinite(config.lambda), "solver: lambda must be non-negative");
    if (config.algorithm == Algorithm::scaled_gd)
        require(config.lambda == 0.0, "solver: scaled_gd is the lambda = 0 case; use scaled_gd_lambda for damping");
    require(config.max_iters >= 0, "solver: max_iters must be non-negative");
    require(config.record_every >= 1, "solver: record_every must be >= 1");
    require(config.stop.target_rel_err || config.stop.patience, "solver: enable a target or a patience stopping rule");
    if (config.stop.target_rel_err)
        require(*config.stop.target_rel_err > 0.0, "solver: target must be positive");
    if (config.stop.patience)
        require(*config.stop.patience >= 1, "solver: patience must be >= 1");
    require(config.stop.improve_tol >= 0.0 && config.stop.improve_tol < 1.0, "solver: improve_tol must be in [0, 1)");
    if (config.init == InitKind::small_random)
        require(config.alpha > 0.0, "solver: alpha must be positive");
    if (config.init == InitKind::explicit_matrix) {
        require(config.x0.has_value(), "solver: explicit init needs x0");
        require(config.x0->rows() == n && config.x0->cols() == config.r, "solver: x0 must be n x r");
    }
}

Oracle Oracle::from(const GroundTruth& gt)
{
    return Oracle{dense_m_star(gt), gt.x_norm() * gt.x_norm(), gt};
}

Oracle Oracle::from(const ApproxTruth& truth)
{
    return Oracle{dense_m_star(truth), truth.base.x_norm() * truth.base.x_norm(), truth.base};
}

MatrixXd initial_iterate(const SensingOperator& op, const VectorXd& y, const SolverConfig& config)
{
    switch (config.init) {
    case InitKind::small_random: return random_init(op.n(), config.r, config.alpha, config.seed_init);
    case InitKind::spectral: return spectral_init(op, y, config.r);
    case InitKind::explicit_matrix: return *config.x0;
    }
    return {};
}

std::vector<Trajectory> run_many(const SensingOperator& op, const VectorXd& y, const std::vector<SolverConfig>& configs,
                                 const std::optional<Oracle>& oracle, LockstepPolicy policy)
{
    require(y.size() == op.m(), "run: measurement length does not match the operator");
    return Lockstep(op, y, oracle).run(configs, policy);
}

Trajectory run(const SensingOperator& op, const VectorXd& y, const SolverConfig& config,
               const std::optional<Oracle>& oracle)
{
    std::vector<Trajectory> out = run_many(op, y, {config}, oracle);
    if (out.front().stop_reason == StopReason::diverged)
        throw NumericalError("run diverged: " + out.front().divergence_message);
    return std::move(out.front());
}

} // namespace lrsense
