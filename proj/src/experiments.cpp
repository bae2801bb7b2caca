#include "lrsense/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "lrsense/rng.hpp"

namespace lrsense {

namespace {

double median(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

bool contains(const std::vector<double>& values, double v)
{
    return std::find(values.begin(), values.end(), v) != values.end();
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

double parse_real(const std::string& text, const char* what)
{
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size())
        throw ValidationError(std::string("csv: bad number for ") + what + ": '" + text + "'");
    return value;
}

std::optional<double> parse_optional(const std::string& text, const char* what)
{
    if (text.empty())
        return std::nullopt;
    return parse_real(text, what);
}

int parse_int(const std::string& text, const char* what)
{
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ValidationError(std::string("csv: bad integer for ") + what + ": '" + text + "'");
    return value;
}

std::string optional_cell(const std::optional<double>& value)
{
    return value ? format_real(*value) : std::string();
}

void strip_cr(std::string& line)
{
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
}

std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw NumericalError("cannot open '" + path + "' for writing");
    return out;
}

void finish_output(std::ofstream& out, const std::string& path)
{
    out.flush();
    if (!out)
        throw NumericalError("write to '" + path + "' failed");
}

struct Point {
    GroundTruth truth;
    SensingOperator op;
    VectorXd y;
    double lambda;
};

Point make_point(const SweepSpec& spec, const ProblemSpec& problem, const PointSeeds& seeds)
{
    GroundTruth truth = make_ground_truth(problem.n, problem.r_star, problem.kappa, seeds.truth, problem.spacing);
    SensingOperator op = SensingOperator::gaussian(problem.n, problem.measurements(), seeds.op, problem.backend);
    VectorXd y = measure(op, truth, NoiseModel{problem.noise_sigma, seeds.noise}).y;
    double lambda = 0.0;
    if (spec.damping.fixed) {
        lambda = *spec.damping.fixed;
    } else {
        const Index rank_guess = spec.damping.rank_guess > 0 ? spec.damping.rank_guess : problem.r_star;
        lambda = estimate_damping(op, y, rank_guess, spec.damping.c_frac).lambda_hat;
    }
    return Point{std::move(truth), std::move(op), std::move(y), lambda};
}

ExperimentRecord to_record(const Trajectory& traj, double axis_value, int trial, Algorithm algorithm, double eta,
                           const Oracle& oracle)
{
    ExperimentRecord rec;
    rec.axis_value = axis_value;
    rec.trial = trial;
    rec.algorithm = algorithm;
    rec.iters_to_target = traj.iters_to_target.value_or(-1);
    const TrajectoryRecord& last = traj.records.back();
    rec.final_rel_err_fro = last.rel_err_fro.value_or(0.0);
    rec.final_rel_err_op = last.rel_err_op.value_or(0.0);
    rec.wall_ms = last.elapsed_ms;
    rec.stop_reason = traj.stop_reason;
    rec.final_iter = traj.final_state.t;
    rec.eta = eta;
    rec.lambda = traj.lambda;
    rec.m_star_norm = oracle.m_star_norm;
    return rec;
}

// Runs each eta in lockstep until the first one reaches the target; the winner is
// that run (ties go to the earlier grid entry). Without a winner, the lowest final
// error among non-diverged runs is reported.
std::pair<Trajectory, double> tuned_gd(const Point& point, const SolverConfig& base, const std::vector<double>& etas,
                                       const Oracle& oracle)
{
    std::vector<SolverConfig> configs;
    for (double eta : etas) {
        SolverConfig config = base;
        config.algorithm = Algorithm::gd;
        config.eta = eta;
        config.lambda = 0.0;
        configs.push_back(config);
    }
    std::vector<Trajectory> runs = run_many(point.op, point.y, configs, oracle, LockstepPolicy::first_to_target);
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < runs.size(); ++j)
        if (runs[j].iters_to_target && (!best || *runs[j].iters_to_target < *runs[*best].iters_to_target))
            best = j;
    if (!best) {
        for (std::size_t j = 0; j < runs.size(); ++j) {
            if (runs[j].stop_reason == StopReason::diverged)
                continue;
            if (!best || runs[j].records.back().rel_err_fro < runs[*best].records.back().rel_err_fro)
                best = j;
        }
    }
    if (!best)
        best = 0;
    return {std::move(runs[*best]), etas[*best]};
}

} // namespace

std::string to_string(SweepAxis axis)
{
    switch (axis) {
    case SweepAxis::kappa: return "kappa";
    case SweepAxis::alpha: return "alpha";
    case SweepAxis::rank_r: return "rank_r";
    case SweepAxis::noise_sigma: return "noise_sigma";
    }
    return "unknown";
}

SweepAxis parse_axis(const std::string& text)
{
    for (SweepAxis axis : {SweepAxis::kappa, SweepAxis::alpha, SweepAxis::rank_r, SweepAxis::noise_sigma})
        if (to_string(axis) == text)
            return axis;
    throw ValidationError("unknown sweep axis '" + text + "' (expected kappa, alpha, rank_r or noise_sigma)");
}

void validate(const SweepSpec& spec)
{
    require(!spec.values.empty(), "sweep: values must not be empty");
    for (std::size_t i = 1; i < spec.values.size(); ++i)
        require(spec.values[i] > spec.values[i - 1], "sweep: values must be strictly increasing");
    require(spec.trials >= 1, "sweep: trials must be >= 1");
    require(!spec.algorithms.empty(), "sweep: no algorithms selected");
    for (std::size_t i = 0; i < spec.algorithms.size(); ++i)
        require(std::count(spec.algorithms.begin(), spec.algorithms.end(), spec.algorithms[i]) == 1,
                "sweep: each algorithm may appear once");
    require(spec.problem.n >= 1 && spec.problem.r_star >= 1 && spec.problem.r_star <= spec.problem.n,
            "sweep: need 1 <= r_star <= n");
    require(spec.problem.kappa >= 1.0, "sweep: kappa must be >= 1");
    require(spec.problem.noise_sigma >= 0.0, "sweep: noise sigma must be >= 0");
    for (double v : spec.values) {
        switch (spec.axis) {
        case SweepAxis::kappa: require(v >= 1.0, "sweep: kappa values must be >= 1"); break;
        case SweepAxis::alpha: require(v > 0.0, "sweep: alpha values must be positive"); break;
        case SweepAxis::rank_r:
            require(v == std::floor(v) && v >= static_cast<double>(spec.problem.r_star) &&
                        v <= static_cast<double>(spec.problem.n),
                    "sweep: rank values must be integers in [r_star, n]");
            break;
        case SweepAxis::noise_sigma: require(v >= 0.0, "sweep: noise values must be >= 0"); break;
        }
    }
    if (std::find(spec.algorithms.begin(), spec.algorithms.end(), Algorithm::gd) != spec.algorithms.end())
        for (double eta : spec.gd_etas)
            require(eta > 0.0, "sweep: GD etas must be positive");
    for (double v : spec.gd_values)
        require(contains(spec.values, v), "sweep: every gd value must be one of the sweep values");
    if (spec.damping.fixed)
        require(*spec.damping.fixed >= 0.0, "sweep: lambda must be >= 0");
    else
        require(spec.damping.c_frac > 0.0, "sweep: c_frac must be positive");
}

PointSeeds point_seeds(std::uint64_t master_seed, std::size_t axis_index, int trial)
{
    const std::uint64_t point = derive_seed(derive_seed(master_seed, axis_index), static_cast<std::uint64_t>(trial));
    return PointSeeds{derive_seed(point, 1), derive_seed(point, 2), derive_seed(point, 3), derive_seed(point, 4)};
}

std::vector<ExperimentRecord> run_sweep(const SweepSpec& spec)
{
    validate(spec);
    std::vector<ExperimentRecord> records;
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const double value = spec.values[i];
        ProblemSpec problem = spec.problem;
        SolverConfig base = spec.solver;
        switch (spec.axis) {
        case SweepAxis::kappa: problem.kappa = value; break;
        case SweepAxis::alpha: base.alpha = value; break;
        case SweepAxis::rank_r: base.r = static_cast<Index>(value); break;
        case SweepAxis::noise_sigma: problem.noise_sigma = value; break;
        }
        const double reference =
            spec.axis == SweepAxis::noise_sigma ? minimax_reference(value, problem.n, problem.r_star) : 0.0;

        for (int trial = 0; trial < spec.trials; ++trial) {
            const PointSeeds seeds = point_seeds(spec.master_seed, i, trial);
            const Point point = make_point(spec, problem, seeds);
            const Oracle oracle = Oracle::from(point.truth);
            base.seed_init = seeds.init;

            // Non-GD algorithms share one lockstep pass.
            std::vector<SolverConfig> configs;
            std::vector<Algorithm> order;
            for (Algorithm algorithm : spec.algorithms) {
                if (algorithm == Algorithm::gd)
                    continue;
                SolverConfig config = base;
                config.algorithm = algorithm;
                config.lambda = algorithm == Algorithm::scaled_gd_lambda ? point.lambda : 0.0;
                config.init = algorithm == Algorithm::prec_gd ? spec.prec_gd_init : InitKind::small_random;
                configs.push_back(config);
                order.push_back(algorithm);
            }
            std::vector<Trajectory> runs = run_many(point.op, point.y, configs, oracle);

            for (Algorithm algorithm : spec.algorithms) {
                ExperimentRecord rec;
                if (algorithm == Algorithm::gd) {
                    if (!spec.gd_values.empty() && !contains(spec.gd_values, value))
                        continue;
                    const std::vector<double> etas = spec.gd_etas.empty() ? std::vector<double>{base.eta} : spec.gd_etas;
                    auto [traj, eta] = tuned_gd(point, base, etas, oracle);
                    rec = to_record(traj, value, trial, algorithm, eta, oracle);
                } else {
                    const std::size_t j =
                        static_cast<std::size_t>(std::find(order.begin(), order.end(), algorithm) - order.begin());
                    rec = to_record(runs[j], value, trial, algorithm, configs[j].eta, oracle);
                }
                rec.reference = reference;
                records.push_back(rec);
            }
        }
    }
    return records;
}

std::vector<ExperimentRecord> sweep_condition_number(const SweepSpec& spec)
{
    require(spec.axis == SweepAxis::kappa, "sweep_condition_number: axis must be kappa");
    return run_sweep(spec);
}

std::vector<ExperimentRecord> sweep_init_scale(const SweepSpec& spec)
{
    require(spec.axis == SweepAxis::alpha, "sweep_init_scale: axis must be alpha");
    require(spec.solver.stop.patience.has_value(), "sweep_init_scale: needs the patience stopping rule");
    return run_sweep(spec);
}

std::vector<ExperimentRecord> sweep_overparam_rank(const SweepSpec& spec)
{
    require(spec.axis == SweepAxis::rank_r, "sweep_overparam_rank: axis must be rank_r");
    return run_sweep(spec);
}

std::vector<ExperimentRecord> sweep_noise(const SweepSpec& spec)
{
    require(spec.axis == SweepAxis::noise_sigma, "sweep_noise: axis must be noise_sigma");
    return run_sweep(spec);
}

double minimax_reference(double sigma, Index n, Index r_star)
{
    require(sigma >= 0.0, "minimax_reference: sigma must be >= 0");
    require(n >= 1 && r_star >= 1, "minimax_reference: n and r_star must be positive");
    return sigma * std::sqrt(static_cast<double>(n) * static_cast<double>(r_star));
}

LogLogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points)
{
    require(points.size() >= 2, "fit_loglog_slope: need at least two points");
    const double count = static_cast<double>(points.size());
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0))
            throw ValidationError("fit_loglog_slope: all values must be positive");
        mx += std::log(x);
        my += std::log(y);
    }
    mx /= count;
    my /= count;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx;
        const double dy = std::log(y) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    require(sxx > 0.0, "fit_loglog_slope: x values are all equal");
    LogLogFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

std::vector<SweepSummary> summarize(const std::vector<ExperimentRecord>& records)
{
    std::vector<SweepSummary> out;
    std::map<std::pair<double, int>, std::size_t> index;
    std::vector<std::vector<const ExperimentRecord*>> groups;
    for (const ExperimentRecord& rec : records) {
        const auto key = std::make_pair(rec.axis_value, static_cast<int>(rec.algorithm));
        auto [it, inserted] = index.emplace(key, groups.size());
        if (inserted)
            groups.emplace_back();
        groups[it->second].push_back(&rec);
    }
    for (const auto& group : groups) {
        SweepSummary s;
        s.axis_value = group.front()->axis_value;
        s.algorithm = group.front()->algorithm;
        s.trials = static_cast<int>(group.size());
        s.reference = group.front()->reference;
        std::vector<double> iters;
        std::vector<double> errors;
        for (const ExperimentRecord* rec : group) {
            if (rec->iters_to_target >= 0)
                iters.push_back(rec->iters_to_target);
            errors.push_back(rec->final_rel_err_fro);
        }
        s.reached = static_cast<int>(iters.size());
        if (!iters.empty())
            s.median_iters = median(iters);
        s.median_rel_err_fro = median(errors);
        out.push_back(s);
    }
    return out;
}

std::string format_real(double value)
{
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.16e", value);
    return buffer;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, const CsvOptions& options)
{
    out << kTrajectoryHeader << '\n';
    for (const TrajectoryRecord& rec : trajectory.records) {
        out << rec.t << ',' << format_real(rec.loss) << ',' << optional_cell(rec.rel_err_fro) << ','
            << optional_cell(rec.rel_err_op) << ',';
        if (rec.phase)
            out << format_real(rec.phase->sigma_min_scaled) << ',' << format_real(rec.phase->misalign) << ','
                << format_real(rec.phase->gamma_norm) << ',' << format_real(rec.phase->overparam_norm) << ',';
        else
            out << ",,,,";
        if (options.timings)
            out << format_real(rec.elapsed_ms);
        out << '\n';
    }
}

void write_sweep_csv(std::ostream& out, SweepAxis axis, const std::vector<ExperimentRecord>& records,
                     const CsvOptions& options)
{
    out << kSweepHeader << '\n';
    for (const ExperimentRecord& rec : records) {
        out << to_string(axis) << ',' << format_real(rec.axis_value) << ',' << rec.trial << ','
            << to_string(rec.algorithm) << ',' << rec.iters_to_target << ',' << format_real(rec.final_rel_err_fro)
            << ',' << format_real(rec.final_rel_err_op) << ',' << to_string(rec.stop_reason) << ',';
        if (options.timings)
            out << format_real(rec.wall_ms);
        out << '\n';
    }
}

void emit_csv(const std::string& path, const Trajectory& trajectory, const CsvOptions& options)
{
    std::ofstream out = open_output(path);
    write_trajectory_csv(out, trajectory, options);
    finish_output(out, path);
}

void emit_csv(const std::string& path, SweepAxis axis, const std::vector<ExperimentRecord>& records,
              const CsvOptions& options)
{
    std::ofstream out = open_output(path);
    write_sweep_csv(out, axis, records, options);
    finish_output(out, path);
}

std::vector<TrajectoryRecord> parse_trajectory_csv(std::istream& in)
{
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "csv: missing header");
    strip_cr(line);
    require(line == kTrajectoryHeader, "csv: not a trajectory file (header mismatch)");
    std::vector<TrajectoryRecord> records;
    while (std::getline(in, line)) {
        strip_cr(line);
        if (line.empty())
            continue;
        const std::vector<std::string> cells = split_csv(line);
        require(cells.size() == 9, "csv: trajectory rows need 9 cells");
        TrajectoryRecord rec;
        rec.t = parse_int(cells[0], "iter");
        rec.loss = parse_real(cells[1], "loss");
        rec.rel_err_fro = parse_optional(cells[2], "rel_err_fro");
        rec.rel_err_op = parse_optional(cells[3], "rel_err_op");
        if (!cells[4].empty()) {
            PhaseMetrics phase;
            phase.sigma_min_scaled = parse_real(cells[4], "sigma_min_scaled");
            phase.misalign = parse_real(cells[5], "misalign");
            phase.misalign_singular = std::isinf(phase.misalign);
            phase.gamma_norm = parse_real(cells[6], "gamma_norm");
            phase.overparam_norm = parse_real(cells[7], "overparam_norm");
            rec.phase = phase;
        }
        rec.elapsed_ms = parse_optional(cells[8], "elapsed_ms").value_or(0.0);
        records.push_back(rec);
    }
    return records;
}

std::vector<ExperimentRecord> parse_sweep_csv(std::istream& in, SweepAxis* axis)
{
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "csv: missing header");
    strip_cr(line);
    require(line == kSweepHeader, "csv: not a sweep file (header mismatch)");
    std::vector<ExperimentRecord> records;
    while (std::getline(in, line)) {
        strip_cr(line);
        if (line.empty())
            continue;
        const std::vector<std::string> cells = split_csv(line);
        require(cells.size() == 9, "csv: sweep rows need 9 cells");
        if (axis)
            *axis = parse_axis(cells[0]);
        ExperimentRecord rec;
        rec.axis_value = parse_real(cells[1], "axis_value");
        rec.trial = parse_int(cells[2], "trial");
        rec.algorithm = parse_algorithm(cells[3]);
        rec.iters_to_target = parse_int(cells[4], "iters_to_target");
        rec.final_rel_err_fro = parse_real(cells[5], "final_rel_err_fro");
        rec.final_rel_err_op = parse_real(cells[6], "final_rel_err_op");
        rec.stop_reason = parse_stop_reason(cells[7]);
        rec.wall_ms = parse_optional(cells[8], "wall_ms").value_or(0.0);
        records.push_back(rec);
    }
    return records;
}

std::vector<std::string> preset_names() { return {"paper-fig1", "fig-alpha", "fig-r", "fig-noisy", "ci-small"}; }

SweepSpec preset(const std::string& name)
{
    SweepSpec spec;
    spec.name = name;
    spec.problem.r_star = 3;
    spec.solver.algorithm = Algorithm::scaled_gd_lambda;
    spec.solver.r = 5;
    spec.solver.eta = 0.3;
    spec.damping.rank_guess = 3;

    if (name == "paper-fig1" || name == "ci-small") {
        spec.problem.n = name == "paper-fig1" ? 150 : 60;
        spec.axis = SweepAxis::kappa;
        spec.values = {1, 2, 3, 4, 5, 6, 7};
        spec.solver.alpha = 1e-27;
        spec.solver.stop.target_rel_err = 1e-9;
        spec.solver.max_iters = 10000;
        spec.damping.c_frac = 0.05;
        spec.algorithms = {Algorithm::scaled_gd_lambda, Algorithm::gd};
        return spec;
    }
    if (name == "fig-alpha") {
        spec.problem.n = 60;
        spec.problem.kappa = 1;
        spec.axis = SweepAxis::alpha;
        spec.values = {1e-12, 1e-10, 1e-8, 1e-6};
        spec.solver.alpha = 1e-12;
        spec.solver.stop.patience = 100;
        spec.solver.max_iters = 5000;
        return spec;
    }
    if (name == "fig-r") {
        spec.problem.n = 150;
        spec.problem.kappa = 5;
        spec.axis = SweepAxis::rank_r;
        spec.values = {3, 5, 10, 20};
        spec.solver.alpha = 1e-27;
        spec.solver.stop.target_rel_err = 1e-9;
        spec.solver.max_iters = 1000;
        spec.damping.c_frac = 0.05;
        spec.algorithms = {Algorithm::scaled_gd_lambda, Algorithm::prec_gd};
        return spec;
    }
    if (name == "fig-noisy") {
        spec.problem.n = 150;
        spec.problem.kappa = 5;
        spec.axis = SweepAxis::noise_sigma;
        spec.values = {1e-3, 1e-2, 1e-1};
        spec.solver.alpha = 1e-9;
        spec.solver.stop.patience = 100;
        spec.solver.max_iters = 3000;
        return spec;
    }
    throw ValidationError("unknown preset '" + name + "' (expected paper-fig1, fig-alpha, fig-r, fig-noisy or ci-small)");
}

} // namespace lrsense
