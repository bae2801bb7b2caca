#ifndef LRSENSE_IO_HPP
#define LRSENSE_IO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrsense/experiments.hpp"
#include "lrsense/problem.hpp"
#include "lrsense/sensing.hpp"
#include "lrsense/solver.hpp"

namespace lrsense {

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Matrices. Binary layout (little endian): "LRSM", u32 version, u64 rows,
// u64 cols, rows * cols f64 in column-major order. Text layout: a "rows cols"
// line, then one matrix row per line.

enum class MatrixFormat { binary, text };

MatrixFormat parse_matrix_format(const std::string& text);
void write_matrix(const std::string& path, const MatrixXd& m, MatrixFormat format = MatrixFormat::binary);
/// Detects the format from the file's first bytes.
MatrixXd read_matrix(const std::string& path);

// ---------------------------------------------------------------------------
// key = value files; '#' starts a comment, blank lines are ignored, order kept.

class KeyValues {
public:
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;
    /// Throws ValidationError naming the missing key.
    const std::string& get(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

KeyValues parse_key_values(const std::string& text, const std::string& origin = "<string>");
KeyValues read_key_values(const std::string& path);
std::string format_key_values(const KeyValues& kv);
void write_key_values(const std::string& path, const KeyValues& kv);

std::vector<double> parse_real_list(const std::string& text);
std::string format_real_list(const std::vector<double>& values);

/// "0.1" → fixed lambda; "auto:3" → estimate with rank_guess 3.
DampingRule parse_damping(const std::string& text, double c_frac = kDefaultDampingFraction);

// ---------------------------------------------------------------------------
// Problem instances: <stem>.meta plus <stem>.ustar and <stem>.y matrix files.
// The operator is regenerated from (n, m, op_seed, backend).

struct Instance {
    GroundTruth truth;
    double kappa = 1.0;
    SpectrumSpacing spacing = SpectrumSpacing::linear;
    Index m = 0;
    std::uint64_t op_seed = 0;
    Backend backend = Backend::dense;
    NoiseModel noise;
    VectorXd y;

    SensingOperator make_operator(std::size_t memory_cap_bytes = kDefaultMemoryCapBytes) const;
};

/// Writes the three files and returns the metadata path.
std::string write_instance(const std::string& stem, const Instance& instance, MatrixFormat format = MatrixFormat::binary);
/// Accepts the metadata path or the stem.
Instance read_instance(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoints: "LRSC", u32 version, u64 count, then per entry i64 t,
// f64 elapsed_ms, f64 loss, f64 lambda, u64 rows, u64 cols, column-major f64.

void write_checkpoints(const std::string& path, const std::vector<Checkpoint>& checkpoints);
std::vector<Checkpoint> read_checkpoints(const std::string& path);

// ---------------------------------------------------------------------------
// Sweep configuration files. "preset = <name>" seeds every field from a preset;
// other keys override it. See the README for the key list.

SweepSpec sweep_spec_from_config(const KeyValues& config);

} // namespace lrsense

#endif // LRSENSE_IO_HPP
