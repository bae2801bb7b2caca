#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lrsense/diagnostics.hpp"
#include "lrsense/experiments.hpp"
#include "lrsense/io.hpp"
#include "lrsense/rng.hpp"
#include "lrsense/sensing.hpp"
#include "lrsense/solver.hpp"

using namespace lrsense;

namespace {

std::string g_invocation;

template <typename T>
std::string show(const T& value)
{
    if constexpr (std::is_floating_point_v<T>)
        return format_real(value);
    else if constexpr (std::is_same_v<T, std::string>)
        return value;
    else
        return std::to_string(value);
}

template <typename T>
T pick(const std::optional<T>& flag, T fallback)
{
    return flag ? *flag : fallback;
}

void write_sidecar(const std::string& output, KeyValues kv)
{
    kv.set("invocation", g_invocation);
    kv.set("format_version", std::to_string(kFormatVersion));
    write_key_values(output + ".meta", kv);
}

// ---------------------------------------------------------------------------
// Problem flags shared by gen and run.

struct ProblemFlags {
    std::optional<std::string> preset;
    std::optional<Index> n;
    std::optional<Index> r_star;
    std::optional<double> kappa;
    std::optional<std::string> spacing;
    std::optional<Index> m;
    std::optional<std::string> backend;
    std::optional<double> noise_sigma;
    std::uint64_t seed = 0;
    std::size_t memory_cap_mib = kDefaultMemoryCapBytes >> 20;

    void add(CLI::App& app)
    {
        app.add_option("--preset", preset, "Start from a named preset (" + join(preset_names()) + ")");
        app.add_option("--n", n, "Matrix dimension")->default_str("60");
        app.add_option("--r-star", r_star, "Rank of the ground truth")->default_str("3");
        app.add_option("--kappa", kappa, "Condition number of X*")->default_str("1");
        app.add_option("--spacing", spacing, "Singular value profile: linear or geometric")->default_str("linear");
        app.add_option("--m", m, "Number of measurements (0: 10 n r_star)")->default_str("0");
        app.add_option("--backend", backend, "Gaussian operator storage: dense or streamed")->default_str("dense");
        app.add_option("--noise-sigma", noise_sigma, "Measurement noise standard deviation")->default_str("0");
        app.add_option("--seed", seed, "Master seed")->capture_default_str();
        app.add_option("--memory-cap-mib", memory_cap_mib, "Largest dense operator allowed")->capture_default_str();
    }

    static std::string join(const std::vector<std::string>& names)
    {
        std::string out;
        for (const auto& name : names)
            out += (out.empty() ? "" : ", ") + name;
        return out;
    }

    ProblemSpec resolve(const ProblemSpec& base) const
    {
        ProblemSpec p = base;
        p.n = pick(n, p.n);
        p.r_star = pick(r_star, p.r_star);
        p.kappa = pick(kappa, p.kappa);
        if (spacing) {
            require(*spacing == "linear" || *spacing == "geometric", "--spacing must be linear or geometric");
            p.spacing = *spacing == "linear" ? SpectrumSpacing::linear : SpectrumSpacing::geometric;
        }
        p.m = pick(m, p.m);
        if (backend)
            p.backend = parse_backend(*backend);
        p.noise_sigma = pick(noise_sigma, p.noise_sigma);
        return p;
    }
};

Instance generate_instance(const ProblemSpec& p, std::uint64_t seed, std::size_t memory_cap)
{
    require(p.m >= 0, "--m must be >= 0");
    GroundTruth truth = make_ground_truth(p.n, p.r_star, p.kappa, derive_seed(seed, 1), p.spacing);
    Instance instance{std::move(truth), p.kappa, p.spacing, p.measurements(), derive_seed(seed, 2), p.backend,
                      NoiseModel{p.noise_sigma, derive_seed(seed, 3)}, VectorXd{}};
    const SensingOperator op = instance.make_operator(memory_cap);
    instance.y = measure(op, instance.truth, instance.noise).y;
    return instance;
}

void describe_instance(KeyValues& kv, const Instance& instance)
{
    kv.set("n", show(instance.truth.n()));
    kv.set("r_star", show(instance.truth.r_star()));
    kv.set("kappa", show(instance.kappa));
    kv.set("m", show(instance.m));
    kv.set("op_seed", show(instance.op_seed));
    kv.set("backend", to_string(instance.backend));
    kv.set("noise_sigma", show(instance.noise.sigma));
}

// ---------------------------------------------------------------------------

struct GenCommand {
    CLI::App* command = nullptr;
    ProblemFlags problem;
    std::string out;
    std::string format = "binary";

    void add(CLI::App& root)
    {
        CLI::App* cmd = root.add_subcommand("gen", "Generate a problem instance (ground truth and measurements)");
        problem.add(*cmd);
        cmd->add_option("--out", out, "Output stem; writes <out>.meta, <out>.ustar, <out>.y")->required();
        cmd->add_option("--format", format, "Matrix file format: binary or text")->capture_default_str();
        command = cmd;
    }

    void execute()
    {
        const ProblemSpec base = problem.preset ? preset(*problem.preset).problem : ProblemSpec{};
        const ProblemSpec p = problem.resolve(base);
        const Instance instance = generate_instance(p, problem.seed, problem.memory_cap_mib << 20);
        const std::string meta = write_instance(out, instance, parse_matrix_format(format));
        KeyValues kv = read_key_values(meta);
        kv.set("invocation", g_invocation);
        write_key_values(meta, kv);
        std::cout << "wrote " << meta << "\n";
    }
};

struct RunCommand {
    CLI::App* command = nullptr;
    ProblemFlags problem;
    std::optional<std::string> instance_path;
    std::optional<std::string> algorithm;
    std::optional<Index> r;
    std::optional<double> eta;
    std::optional<std::string> lambda;
    std::optional<Index> lambda_auto;
    std::optional<double> c_frac;
    std::optional<double> alpha;
    std::optional<std::string> init;
    std::optional<std::string> x0_path;
    std::optional<int> max_iters;
    std::optional<double> target;
    std::optional<int> patience;
    std::optional<double> improve_tol;
    std::optional<std::uint64_t> seed_init;
    int record_every = 1;
    bool diagnostics = false;
    std::optional<std::string> checkpoints_path;
    std::string out;
    bool no_timings = false;

    void add(CLI::App& root)
    {
        CLI::App* cmd = root.add_subcommand("run", "Run one solver and write its trajectory CSV");
        problem.add(*cmd);
        cmd->add_option("--instance", instance_path, "Instance written by gen (replaces the problem flags)");
        cmd->add_option("--algorithm", algorithm, "scaled-gd-lambda, gd, scaled-gd or prec-gd")
            ->default_str("scaled-gd-lambda");
        cmd->add_option("--r", r, "Factor rank")->default_str("5");
        cmd->add_option("--eta", eta, "Step size")->default_str("0.3");
        auto* lam = cmd->add_option("--lambda", lambda, "Damping: a number or auto:<rank_guess>")
                        ->default_str("auto:<r_star>");
        auto* lam_auto = cmd->add_option("--lambda-auto", lambda_auto, "Same as --lambda auto:<rank_guess>");
        lam->excludes(lam_auto);
        cmd->add_option("--c-frac", c_frac, "Fraction of the eigenvalue used by auto damping")
            ->default_str("0.25");
        cmd->add_option("--alpha", alpha, "Scale of the small random initialization")->default_str("1e-3");
        cmd->add_option("--init", init, "small-random, spectral or explicit")->default_str("small-random");
        cmd->add_option("--x0", x0_path, "Initial iterate matrix file (with --init explicit)");
        cmd->add_option("--max-iters", max_iters, "Iteration budget")->default_str("1000");
        cmd->add_option("--target", target, "Stop once ||XX^T - M*||_F / ||M*|| <= target")->default_str("1e-9");
        cmd->add_option("--patience", patience, "Stop after this many iterations without loss improvement")
            ->default_str("off");
        cmd->add_option("--improve-tol", improve_tol, "Relative loss decrease that counts as improvement")
            ->default_str("1e-3");
        cmd->add_option("--seed-init", seed_init, "Seed of the random initialization")->default_str("derived from --seed");
        cmd->add_option("--record-every", record_every, "Record every k-th iteration")->capture_default_str();
        cmd->add_flag("--diagnostics", diagnostics, "Add phase metrics to every record");
        cmd->add_option("--checkpoints", checkpoints_path, "Also store the iterate at every record in this file");
        cmd->add_option("--out", out, "Trajectory CSV path (sidecar: <out>.meta)")->required();
        cmd->add_flag("--no-timings", no_timings, "Leave elapsed_ms empty so the CSV is byte-reproducible");
        command = cmd;
    }

    void execute()
    {
        const SweepSpec base = problem.preset ? preset(*problem.preset) : SweepSpec{};
        Instance inst = instance_path ? read_instance(*instance_path)
                                      : generate_instance(problem.resolve(base.problem), problem.seed,
                                                          problem.memory_cap_mib << 20);
        const SensingOperator op = inst.make_operator(problem.memory_cap_mib << 20);

        SolverConfig config = base.solver;
        if (!problem.preset) {
            config.r = 5;
            config.stop.target_rel_err = 1e-9;
        }
        config.algorithm = algorithm ? parse_algorithm(*algorithm) : Algorithm::scaled_gd_lambda;
        config.r = pick(r, config.r);
        config.eta = pick(eta, config.eta);
        config.alpha = pick(alpha, config.alpha);
        config.max_iters = pick(max_iters, config.max_iters);
        if (target)
            config.stop.target_rel_err = *target;
        if (patience)
            config.stop.patience = *patience;
        config.stop.improve_tol = pick(improve_tol, config.stop.improve_tol);
        config.seed_init = seed_init ? *seed_init : derive_seed(problem.seed, 4);
        config.record_every = record_every;
        config.diagnostics = diagnostics;
        config.checkpoints = checkpoints_path.has_value();
        config.init = init ? parse_init(*init)
                           : (config.algorithm == Algorithm::prec_gd && problem.preset == "fig-r" ? InitKind::spectral
                                                                                                  : InitKind::small_random);
        if (x0_path)
            config.x0 = read_matrix(*x0_path);
        require(!x0_path || config.init == InitKind::explicit_matrix, "--x0 needs --init explicit");

        DampingRule damping = base.damping;
        damping.c_frac = pick(c_frac, damping.c_frac);
        if (lambda)
            damping = parse_damping(*lambda, damping.c_frac);
        if (lambda_auto) {
            damping = DampingRule{};
            damping.c_frac = pick(c_frac, kDefaultDampingFraction);
            damping.rank_guess = *lambda_auto;
        }
        std::string lambda_source = "fixed";
        if (config.algorithm == Algorithm::scaled_gd_lambda) {
            if (damping.fixed) {
                config.lambda = *damping.fixed;
            } else {
                const Index guess = damping.rank_guess > 0 ? damping.rank_guess : inst.truth.r_star();
                config.lambda = estimate_damping(op, inst.y, guess, damping.c_frac).lambda_hat;
                lambda_source = "auto:" + std::to_string(guess);
            }
        } else {
            config.lambda = 0.0;
            lambda_source = "n/a";
        }

        const Oracle oracle = Oracle::from(inst.truth);
        const Trajectory traj = run(op, inst.y, config, oracle);
        emit_csv(out, traj, CsvOptions{!no_timings});
        if (checkpoints_path)
            write_checkpoints(*checkpoints_path, traj.checkpoints);

        KeyValues kv;
        kv.set("command", "run");
        if (instance_path)
            kv.set("instance", *instance_path);
        else
            kv.set("seed", show(problem.seed));
        if (problem.preset)
            kv.set("preset", *problem.preset);
        describe_instance(kv, inst);
        kv.set("algorithm", to_string(config.algorithm));
        kv.set("r", show(config.r));
        kv.set("eta", show(config.eta));
        kv.set("lambda", show(config.lambda));
        kv.set("lambda_source", lambda_source);
        kv.set("alpha", show(config.alpha));
        kv.set("init", to_string(config.init));
        kv.set("seed_init", show(config.seed_init));
        kv.set("max_iters", show(config.max_iters));
        kv.set("target", config.stop.target_rel_err ? show(*config.stop.target_rel_err) : "none");
        kv.set("patience", config.stop.patience ? show(*config.stop.patience) : "none");
        kv.set("improve_tol", show(config.stop.improve_tol));
        kv.set("record_every", show(config.record_every));
        kv.set("threads", show(thread_count()));
        kv.set("stop_reason", to_string(traj.stop_reason));
        kv.set("iterations", show(traj.final_state.t));
        kv.set("iters_to_target", traj.iters_to_target ? show(*traj.iters_to_target) : "-1");
        write_sidecar(out, kv);

        const TrajectoryRecord& last = traj.records.back();
        std::printf("stop_reason=%s iterations=%d loss=%.6e rel_err_fro=%.6e rel_err_op=%.6e lambda=%.6e\n",
                    to_string(traj.stop_reason).c_str(), traj.final_state.t, last.loss, last.rel_err_fro.value_or(0.0),
                    last.rel_err_op.value_or(0.0), config.lambda);
    }
};

struct SweepCommand {
    CLI::App* command = nullptr;
    std::optional<std::string> config_path;
    std::optional<std::string> preset_name;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool no_timings = false;

    void add(CLI::App& root)
    {
        CLI::App* cmd = root.add_subcommand("sweep", "Run a parameter sweep and write the sweep CSV");
        cmd->add_option("--config", config_path, "key = value sweep file");
        cmd->add_option("--preset", preset_name, "Named preset (" + ProblemFlags::join(preset_names()) + ")");
        cmd->add_option("--trials", trials, "Independent trials per point")->default_str("3");
        cmd->add_option("--seed", seed, "Master seed")->default_str("0");
        cmd->add_option("--out", out, "Sweep CSV path (sidecar: <out>.meta)")->required();
        cmd->add_flag("--no-timings", no_timings, "Leave wall_ms empty so the CSV is byte-reproducible");
        command = cmd;
    }

    void execute()
    {
        require(config_path || preset_name, "sweep needs --config or --preset");
        KeyValues config = config_path ? read_key_values(*config_path) : KeyValues{};
        if (preset_name)
            config.set("preset", *preset_name);
        if (trials)
            config.set("trials", std::to_string(*trials));
        if (seed)
            config.set("seed", std::to_string(*seed));
        const SweepSpec spec = sweep_spec_from_config(config);
        const std::vector<ExperimentRecord> records = run_sweep(spec);
        emit_csv(out, spec.axis, records, CsvOptions{!no_timings});

        KeyValues kv;
        kv.set("command", "sweep");
        for (const auto& [key, value] : config.entries())
            kv.set("config." + key, value);
        kv.set("axis", to_string(spec.axis));
        kv.set("values", format_real_list(spec.values));
        kv.set("trials", show(spec.trials));
        kv.set("seed", show(spec.master_seed));
        kv.set("threads", show(thread_count()));
        write_sidecar(out, kv);

        std::printf("%-14s %-18s %7s %12s %16s", "axis_value", "algorithm", "reached", "median_iters",
                    "median_rel_err");
        const bool noisy = spec.axis == SweepAxis::noise_sigma;
        std::printf(noisy ? " %16s\n" : "\n", "E_stat/||M*||");
        for (const SweepSummary& s : summarize(records)) {
            std::printf("%-14.6g %-18s %3d/%-3d %12s %16.6e", s.axis_value, to_string(s.algorithm).c_str(), s.reached,
                        s.trials, s.median_iters ? std::to_string(static_cast<long>(*s.median_iters)).c_str() : "-",
                        s.median_rel_err_fro);
            if (noisy)
                std::printf(" %16.6e", s.reference);
            std::printf("\n");
        }
        if (spec.axis == SweepAxis::alpha && spec.values.size() >= 2) {
            std::vector<std::pair<double, double>> points;
            for (const SweepSummary& s : summarize(records))
                if (s.algorithm == Algorithm::scaled_gd_lambda && s.median_rel_err_fro > 0.0)
                    points.emplace_back(s.axis_value, s.median_rel_err_fro);
            if (points.size() >= 2) {
                const LogLogFit fit = fit_loglog_slope(points);
                std::printf("loglog slope=%.4f intercept=%.4f r_squared=%.4f\n", fit.slope, fit.intercept,
                            fit.r_squared);
            }
        }
    }
};

struct DiagCommand {
    CLI::App* command = nullptr;
    std::string instance_path;
    std::string checkpoints_path;
    std::string out;
    bool delta = false;

    void add(CLI::App& root)
    {
        CLI::App* cmd = root.add_subcommand("diag", "Replay stored checkpoints and write phase metrics per record");
        cmd->add_option("--instance", instance_path, "Instance the run used")->required();
        cmd->add_option("--checkpoints", checkpoints_path, "Checkpoint file written by run --checkpoints")->required();
        cmd->add_option("--out", out, "Diagnostics CSV path (trajectory schema)")->required();
        cmd->add_flag("--delta", delta, "Also print ||(I - A^*A)(XX^T - M*)|| per checkpoint to stdout");
        command = cmd;
    }

    void execute()
    {
        const Instance inst = read_instance(instance_path);
        const std::vector<Checkpoint> checkpoints = read_checkpoints(checkpoints_path);
        const MatrixXd u_perp = orthonormal_complement(inst.truth.u_star());
        const MatrixXd m_star = dense_m_star(inst.truth);
        const double m_norm = inst.truth.x_norm() * inst.truth.x_norm();
        std::optional<SensingOperator> op;
        if (delta)
            op = inst.make_operator();

        Trajectory traj;
        for (const Checkpoint& c : checkpoints) {
            require(c.x.rows() == inst.truth.n(), "diag: checkpoint does not match the instance dimension");
            TrajectoryRecord rec;
            rec.t = c.t;
            rec.loss = c.loss;
            rec.elapsed_ms = c.elapsed_ms;
            const ReconstructionError err = reconstruction_error(c.x, m_star, m_norm);
            rec.rel_err_fro = err.rel_fro;
            rec.rel_err_op = err.rel_op;
            rec.phase = phase_metrics(decompose_iterate(c.x, inst.truth.u_star(), u_perp), inst.truth, c.lambda);
            traj.records.push_back(rec);
            if (op)
                std::printf("iter=%d delta_norm=%.6e\n", c.t, delta_norm(*op, c.x, m_star).value);
        }
        emit_csv(out, traj);
        KeyValues kv;
        kv.set("command", "diag");
        kv.set("instance", instance_path);
        kv.set("checkpoints", checkpoints_path);
        kv.set("records", show(traj.records.size()));
        write_sidecar(out, kv);
        std::printf("wrote %zu records to %s\n", traj.records.size(), out.c_str());
    }
};

struct RipCommand {
    CLI::App* command = nullptr;
    std::optional<std::string> instance_path;
    std::string kind = "gaussian";
    Index n = 30;
    std::optional<Index> m;
    std::string backend = "dense";
    Index rank = 4;
    int trials = 200;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> op_seed;
    std::optional<std::string> out;

    void add(CLI::App& root)
    {
        CLI::App* cmd = root.add_subcommand("rip", "Estimate the restricted isometry constant by sampling");
        cmd->add_option("--instance", instance_path, "Use the operator of a stored instance");
        cmd->add_option("--operator", kind, "gaussian or identity")->capture_default_str();
        cmd->add_option("--n", n, "Matrix dimension")->capture_default_str();
        cmd->add_option("--m", m, "Number of measurements")->default_str("10 n rank");
        cmd->add_option("--backend", backend, "dense or streamed")->capture_default_str();
        cmd->add_option("--rank", rank, "Rank of the probe matrices")->capture_default_str();
        cmd->add_option("--trials", trials, "Number of probe matrices")->capture_default_str();
        cmd->add_option("--seed", seed, "Seed of the probes")->capture_default_str();
        cmd->add_option("--op-seed", op_seed, "Seed of the Gaussian operator")->default_str("derived from --seed");
        cmd->add_option("--out", out, "Also write the report as key = value to this file");
        command = cmd;
    }

    void execute()
    {
        std::optional<SensingOperator> op;
        if (instance_path) {
            op = read_instance(*instance_path).make_operator();
        } else if (kind == "identity") {
            op = SensingOperator::identity(n);
        } else if (kind == "gaussian") {
            op = SensingOperator::gaussian(n, m ? *m : 10 * n * rank, op_seed ? *op_seed : derive_seed(seed, 2),
                                           parse_backend(backend));
        } else {
            throw ValidationError("--operator must be gaussian or identity");
        }
        const RipEstimate est = estimate_rip_constant(*op, rank, trials, seed);
        KeyValues kv;
        kv.set("operator", to_string(op->kind()));
        kv.set("n", show(op->n()));
        kv.set("m", show(op->m()));
        kv.set("rank", show(est.rank));
        kv.set("trials", show(est.trials));
        kv.set("seed", show(seed));
        kv.set("delta_hat", show(est.delta_hat));
        kv.set("min_ratio", show(est.min_ratio));
        kv.set("max_ratio", show(est.max_ratio));
        std::cout << format_key_values(kv);
        if (out) {
            kv.set("invocation", g_invocation);
            write_key_values(*out, kv);
        }
    }
};

} // namespace

int main(int argc, char** argv)
{
    for (int i = 0; i < argc; ++i)
        g_invocation += (i ? " " : "") + std::string(argv[i]);

    CLI::App app{"Overparameterized low-rank matrix sensing: instance generation, solvers and experiments"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for the sensing passes (results do not depend on it)")
        ->capture_default_str();

    GenCommand gen;
    RunCommand run_cmd;
    SweepCommand sweep;
    DiagCommand diag;
    RipCommand rip;
    gen.add(app);
    run_cmd.add(app);
    sweep.add(app);
    diag.add(app);
    rip.add(app);
    app.fallthrough();

    try {
        app.parse(argc, argv);
        set_thread_count(threads);
        if (gen.command->parsed())
            gen.execute();
        else if (run_cmd.command->parsed())
            run_cmd.execute();
        else if (sweep.command->parsed())
            sweep.execute();
        else if (diag.command->parsed())
            diag.execute();
        else if (rip.command->parsed())
            rip.execute();
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
