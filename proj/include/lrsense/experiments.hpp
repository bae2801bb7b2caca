#ifndef LRSENSE_EXPERIMENTS_HPP
#define LRSENSE_EXPERIMENTS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrsense/problem.hpp"
#include "lrsense/sensing.hpp"
#include "lrsense/solver.hpp"

namespace lrsense {

enum class SweepAxis { kappa, alpha, rank_r, noise_sigma };

std::string to_string(SweepAxis axis);
SweepAxis parse_axis(const std::string& text);

struct ProblemSpec {
    Index n = 60;
    Index r_star = 3;
    double kappa = 1.0;
    SpectrumSpacing spacing = SpectrumSpacing::linear;
    Index m = 0; // 0 means 10 * n * r_star
    Backend backend = Backend::dense;
    double noise_sigma = 0.0;

    Index measurements() const { return m > 0 ? m : 10 * n * r_star; }
};

/// Fixed lambda, or c_frac * lambda_{rank_guess}(A^*(y)) (rank_guess 0 means r_star).
struct DampingRule {
    std::optional<double> fixed;
    Index rank_guess = 0;
    double c_frac = kDefaultDampingFraction;
};

inline const std::vector<double> kDefaultGdEtas{0.05, 0.1, 0.2, 0.3, 0.5, 0.8};

struct SweepSpec {
    std::string name = "custom";
    ProblemSpec problem;
    SolverConfig solver; // shared settings; algorithm, init and lambda are set per run
    DampingRule damping;
    SweepAxis axis = SweepAxis::kappa;
    std::vector<double> values;
    int trials = 3;
    std::uint64_t master_seed = 0;
    std::vector<Algorithm> algorithms{Algorithm::scaled_gd_lambda};
    std::vector<double> gd_etas = kDefaultGdEtas; // GD runs every eta and keeps the fastest
    std::vector<double> gd_values;                // axis values where GD runs; empty means all
    InitKind prec_gd_init = InitKind::spectral;
};

void validate(const SweepSpec& spec);

struct ExperimentRecord {
    double axis_value = 0.0;
    int trial = 0;
    Algorithm algorithm = Algorithm::scaled_gd_lambda;
    int iters_to_target = -1; // -1: target never reached
    double final_rel_err_fro = 0.0;
    double final_rel_err_op = 0.0;
    double wall_ms = 0.0;
    StopReason stop_reason = StopReason::max_iters;
    // Not part of the CSV.
    int final_iter = 0;
    double eta = 0.0;
    double lambda = 0.0;
    double m_star_norm = 1.0;
    double reference = 0.0; // minimax_reference for noise sweeps, else 0
};

/// Seeds of one (axis_index, trial) point.
struct PointSeeds {
    std::uint64_t truth = 0;
    std::uint64_t op = 0;
    std::uint64_t noise = 0;
    std::uint64_t init = 0;
};

PointSeeds point_seeds(std::uint64_t master_seed, std::size_t axis_index, int trial);

/// Runs every (value, trial, algorithm) of the spec; records ordered by (axis index, trial, algorithm).
std::vector<ExperimentRecord> run_sweep(const SweepSpec& spec);

std::vector<ExperimentRecord> sweep_condition_number(const SweepSpec& spec);
std::vector<ExperimentRecord> sweep_init_scale(const SweepSpec& spec);
std::vector<ExperimentRecord> sweep_overparam_rank(const SweepSpec& spec);
std::vector<ExperimentRecord> sweep_noise(const SweepSpec& spec);

/// sigma * sqrt(n * r_star).
double minimax_reference(double sigma, Index n, Index r_star);

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

/// Least squares through (log x, log y). Needs >= 2 points, all positive, not all x equal.
LogLogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

/// Median over trials of each (axis_value, algorithm).
struct SweepSummary {
    double axis_value = 0.0;
    Algorithm algorithm = Algorithm::scaled_gd_lambda;
    int trials = 0;
    int reached = 0;
    std::optional<double> median_iters; // over trials that reached the target
    double median_rel_err_fro = 0.0;
    double reference = 0.0;
};

std::vector<SweepSummary> summarize(const std::vector<ExperimentRecord>& records);

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kTrajectoryHeader =
    "iter,loss,rel_err_fro,rel_err_op,sigma_min_scaled,misalign,gamma_norm,overparam_norm,elapsed_ms";
inline constexpr const char* kSweepHeader =
    "axis,axis_value,trial,algorithm,iters_to_target,final_rel_err_fro,final_rel_err_op,stop_reason,wall_ms";

/// timings = false leaves the elapsed_ms / wall_ms cells empty, making files byte-reproducible.
struct CsvOptions {
    bool timings = true;
};

std::string format_real(double value);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, const CsvOptions& options = {});
void write_sweep_csv(std::ostream& out, SweepAxis axis, const std::vector<ExperimentRecord>& records,
                     const CsvOptions& options = {});
void emit_csv(const std::string& path, const Trajectory& trajectory, const CsvOptions& options = {});
void emit_csv(const std::string& path, SweepAxis axis, const std::vector<ExperimentRecord>& records,
              const CsvOptions& options = {});

std::vector<TrajectoryRecord> parse_trajectory_csv(std::istream& in);
std::vector<ExperimentRecord> parse_sweep_csv(std::istream& in, SweepAxis* axis = nullptr);

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names();
SweepSpec preset(const std::string& name);

} // namespace lrsense

#endif // LRSENSE_EXPERIMENTS_HPP
