#include "lrsense/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lrsense {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kMatrixMagic[4] = {'L', 'R', 'S', 'M'};
constexpr char kCheckpointMagic[4] = {'L', 'R', 'S', 'C'};

std::string trim(const std::string& text)
{
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return {};
    const auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw NumericalError("cannot open '" + path + "' for writing");
    return out;
}

void check_written(std::ofstream& out, const std::string& path)
{
    out.flush();
    if (!out)
        throw NumericalError("write to '" + path + "' failed");
}

template <typename T>
void put(std::ostream& out, T value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::string& path)
{
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof value);
    if (!in)
        throw ValidationError("'" + path + "' is truncated");
    return value;
}

void put_block(std::ostream& out, const MatrixXd& m)
{
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

MatrixXd get_block(std::istream& in, const std::string& path)
{
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows > (1ull << 32) || cols > (1ull << 32))
        throw ValidationError("'" + path + "' has implausible dimensions");
    MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in)
        throw ValidationError("'" + path + "' is truncated");
    return m;
}

void check_magic(std::istream& in, const char (&magic)[4], const std::string& path, const char* what)
{
    char head[4] = {};
    in.read(head, 4);
    if (!in || std::memcmp(head, magic, 4) != 0)
        throw ValidationError("'" + path + "' is not " + what);
    const auto version = get<std::uint32_t>(in, path);
    if (version != static_cast<std::uint32_t>(kFormatVersion))
        throw ValidationError("'" + path + "' has unsupported format version " + std::to_string(version));
}

double to_real(const std::string& text, const std::string& key)
{
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size())
        throw ValidationError("'" + key + "' expects a number, got '" + text + "'");
    return value;
}

long long to_integer(const std::string& text, const std::string& key)
{
    std::size_t used = 0;
    long long value = 0;
    try {
        value = std::stoll(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size())
        throw ValidationError("'" + key + "' expects an integer, got '" + text + "'");
    return value;
}

std::uint64_t to_seed(const std::string& text, const std::string& key)
{
    std::size_t used = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || text.front() == '-')
        throw ValidationError("'" + key + "' expects an unsigned integer, got '" + text + "'");
    return value;
}

std::string directory_of(const std::string& path)
{
    const auto slash = path.find_last_of('/');
    return slash == std::string::npos ? std::string() : path.substr(0, slash + 1);
}

std::string base_name(const std::string& path)
{
    const auto slash = path.find_last_of('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

} // namespace

MatrixFormat parse_matrix_format(const std::string& text)
{
    if (text == "binary")
        return MatrixFormat::binary;
    if (text == "text")
        return MatrixFormat::text;
    throw ValidationError("unknown matrix format '" + text + "' (expected binary or text)");
}

void write_matrix(const std::string& path, const MatrixXd& m, MatrixFormat format)
{
    std::ofstream out = open_output(path);
    if (format == MatrixFormat::binary) {
        out.write(kMatrixMagic, 4);
        put<std::uint32_t>(out, kFormatVersion);
        put_block(out, m);
    } else {
        out << m.rows() << ' ' << m.cols() << '\n';
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j)
                out << (j ? " " : "") << format_real(m(i, j));
            out << '\n';
        }
    }
    check_written(out, path);
}

MatrixXd read_matrix(const std::string& path)
{
    std::ifstream in = open_input(path);
    char head[4] = {};
    in.read(head, 4);
    if (in && std::memcmp(head, kMatrixMagic, 4) == 0) {
        in.seekg(0);
        check_magic(in, kMatrixMagic, path, "a matrix file");
        return get_block(in, path);
    }
    in.clear();
    in.seekg(0);
    long long rows = -1;
    long long cols = -1;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0)
        throw ValidationError("'" + path + "' is neither a binary nor a text matrix file");
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            std::string token;
            if (!(in >> token))
                throw ValidationError("'" + path + "' has fewer entries than its header declares");
            m(i, j) = to_real(token, path);
        }
    return m;
}

void KeyValues::set(const std::string& key, const std::string& value)
{
    for (auto& entry : entries_)
        if (entry.first == key) {
            entry.second = value;
            return;
        }
    entries_.emplace_back(key, value);
}

bool KeyValues::has(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KeyValues::find(const std::string& key) const
{
    for (const auto& entry : entries_)
        if (entry.first == key)
            return entry.second;
    return std::nullopt;
}

const std::string& KeyValues::get(const std::string& key) const
{
    for (const auto& entry : entries_)
        if (entry.first == key)
            return entry.second;
    throw ValidationError("missing key '" + key + "'");
}

KeyValues parse_key_values(const std::string& text, const std::string& origin)
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ValidationError(origin + ":" + std::to_string(number) + ": empty key");
        kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValues read_key_values(const std::string& path)
{
    std::ifstream in = open_input(path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_key_values(text.str(), path);
}

std::string format_key_values(const KeyValues& kv)
{
    std::string out;
    for (const auto& [key, value] : kv.entries())
        out += key + " = " + value + "\n";
    return out;
}

void write_key_values(const std::string& path, const KeyValues& kv)
{
    std::ofstream out = open_output(path);
    out << format_key_values(kv);
    check_written(out, path);
}

std::vector<double> parse_real_list(const std::string& text)
{
    std::vector<double> values;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (!token.empty())
            values.push_back(to_real(token, "list"));
    }
    return values;
}

std::string format_real_list(const std::vector<double>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out += (i ? "," : "") + format_real(values[i]);
    return out;
}

DampingRule parse_damping(const std::string& text, double c_frac)
{
    DampingRule rule;
    rule.c_frac = c_frac;
    const std::string value = trim(text);
    if (value.rfind("auto:", 0) == 0) {
        const long long rank = to_integer(value.substr(5), "lambda");
        require(rank >= 1, "lambda: auto rank guess must be >= 1");
        rule.rank_guess = static_cast<Index>(rank);
        return rule;
    }
    if (value == "auto")
        return rule;
    const double fixed = to_real(value, "lambda");
    require(fixed >= 0.0, "lambda must be >= 0");
    rule.fixed = fixed;
    return rule;
}

SensingOperator Instance::make_operator(std::size_t memory_cap_bytes) const
{
    return SensingOperator::gaussian(truth.n(), m, op_seed, backend, memory_cap_bytes);
}

std::string write_instance(const std::string& stem, const Instance& instance, MatrixFormat format)
{
    const std::string u_path = stem + ".ustar";
    const std::string y_path = stem + ".y";
    const std::string meta_path = stem + ".meta";
    write_matrix(u_path, instance.truth.u_star(), format);
    write_matrix(y_path, instance.y, format);

    std::vector<double> spectrum(instance.truth.sigma_star().data(),
                                 instance.truth.sigma_star().data() + instance.truth.r_star());
    KeyValues kv;
    kv.set("format_version", std::to_string(kFormatVersion));
    kv.set("n", std::to_string(instance.truth.n()));
    kv.set("r_star", std::to_string(instance.truth.r_star()));
    kv.set("kappa", format_real(instance.kappa));
    kv.set("spacing", instance.spacing == SpectrumSpacing::linear ? "linear" : "geometric");
    kv.set("seed", std::to_string(instance.truth.seed()));
    kv.set("spectrum", format_real_list(spectrum));
    kv.set("m", std::to_string(instance.m));
    kv.set("op_seed", std::to_string(instance.op_seed));
    kv.set("backend", to_string(instance.backend));
    kv.set("noise_sigma", format_real(instance.noise.sigma));
    kv.set("noise_seed", std::to_string(instance.noise.seed));
    kv.set("ustar_file", base_name(u_path));
    kv.set("y_file", base_name(y_path));
    kv.set("matrix_format", format == MatrixFormat::binary ? "binary" : "text");
    write_key_values(meta_path, kv);
    return meta_path;
}

Instance read_instance(const std::string& path)
{
    const bool is_meta = path.size() > 5 && path.compare(path.size() - 5, 5, ".meta") == 0;
    const std::string meta_path = is_meta ? path : path + ".meta";
    const KeyValues kv = read_key_values(meta_path);
    const long long version = to_integer(kv.get("format_version"), "format_version");
    if (version != kFormatVersion)
        throw ValidationError("'" + meta_path + "' has unsupported format version " + std::to_string(version));

    const std::string dir = directory_of(meta_path);
    const MatrixXd u_star = read_matrix(dir + kv.get("ustar_file"));
    const std::vector<double> spectrum = parse_real_list(kv.get("spectrum"));
    const VectorXd sigma = Eigen::Map<const VectorXd>(spectrum.data(), static_cast<Index>(spectrum.size()));
    const Index n = to_integer(kv.get("n"), "n");
    const Index r_star = to_integer(kv.get("r_star"), "r_star");
    require(u_star.rows() == n && u_star.cols() == r_star, "instance: U* file does not match n and r_star");
    require(sigma.size() == r_star, "instance: spectrum length does not match r_star");

    Instance instance{GroundTruth(u_star, sigma, to_seed(kv.get("seed"), "seed")), 1.0, SpectrumSpacing::linear, 0, 0,
                      Backend::dense, NoiseModel{}, VectorXd{}};
    instance.kappa = to_real(kv.get("kappa"), "kappa");
    const std::string spacing = kv.get("spacing");
    require(spacing == "linear" || spacing == "geometric", "instance: spacing must be linear or geometric");
    instance.spacing = spacing == "linear" ? SpectrumSpacing::linear : SpectrumSpacing::geometric;
    instance.m = to_integer(kv.get("m"), "m");
    instance.op_seed = to_seed(kv.get("op_seed"), "op_seed");
    instance.backend = parse_backend(kv.get("backend"));
    instance.noise.sigma = to_real(kv.get("noise_sigma"), "noise_sigma");
    instance.noise.seed = to_seed(kv.get("noise_seed"), "noise_seed");
    const MatrixXd y = read_matrix(dir + kv.get("y_file"));
    require(y.cols() == 1 && y.rows() == instance.m, "instance: measurement file does not match m");
    instance.y = y.col(0);
    return instance;
}

void write_checkpoints(const std::string& path, const std::vector<Checkpoint>& checkpoints)
{
    std::ofstream out = open_output(path);
    out.write(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, checkpoints.size());
    for (const Checkpoint& c : checkpoints) {
        put<std::int64_t>(out, c.t);
        put<double>(out, c.elapsed_ms);
        put<double>(out, c.loss);
        put<double>(out, c.lambda);
        put_block(out, c.x);
    }
    check_written(out, path);
}

std::vector<Checkpoint> read_checkpoints(const std::string& path)
{
    std::ifstream in = open_input(path);
    check_magic(in, kCheckpointMagic, path, "a checkpoint file");
    const auto count = get<std::uint64_t>(in, path);
    std::vector<Checkpoint> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        Checkpoint c;
        c.t = static_cast<int>(get<std::int64_t>(in, path));
        c.elapsed_ms = get<double>(in, path);
        c.loss = get<double>(in, path);
        c.lambda = get<double>(in, path);
        c.x = get_block(in, path);
        out.push_back(std::move(c));
    }
    return out;
}

SweepSpec sweep_spec_from_config(const KeyValues& config)
{
    static const std::vector<std::string> known = {
        "preset",     "axis",        "values",    "trials",       "seed",         "n",
        "r_star",     "kappa",       "spacing",   "m",            "backend",      "noise_sigma",
        "r",          "eta",         "alpha",     "lambda",       "c_frac",       "max_iters",
        "target",     "patience",    "improve_tol", "algorithms", "gd_etas",      "gd_values",
        "prec_gd_init", "record_every"};
    for (const auto& [key, value] : config.entries())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ValidationError("sweep config: unknown key '" + key + "'");

    SweepSpec spec = config.has("preset") ? preset(config.get("preset")) : SweepSpec{};
    if (auto v = config.find("axis"))
        spec.axis = parse_axis(*v);
    if (auto v = config.find("values"))
        spec.values = parse_real_list(*v);
    if (auto v = config.find("trials"))
        spec.trials = static_cast<int>(to_integer(*v, "trials"));
    if (auto v = config.find("seed"))
        spec.master_seed = to_seed(*v, "seed");
    if (auto v = config.find("n"))
        spec.problem.n = to_integer(*v, "n");
    if (auto v = config.find("r_star"))
        spec.problem.r_star = to_integer(*v, "r_star");
    if (auto v = config.find("kappa"))
        spec.problem.kappa = to_real(*v, "kappa");
    if (auto v = config.find("spacing")) {
        require(*v == "linear" || *v == "geometric", "sweep config: spacing must be linear or geometric");
        spec.problem.spacing = *v == "linear" ? SpectrumSpacing::linear : SpectrumSpacing::geometric;
    }
    if (auto v = config.find("m"))
        spec.problem.m = to_integer(*v, "m");
    if (auto v = config.find("backend"))
        spec.problem.backend = parse_backend(*v);
    if (auto v = config.find("noise_sigma"))
        spec.problem.noise_sigma = to_real(*v, "noise_sigma");
    if (auto v = config.find("r"))
        spec.solver.r = to_integer(*v, "r");
    if (auto v = config.find("eta"))
        spec.solver.eta = to_real(*v, "eta");
    if (auto v = config.find("alpha"))
        spec.solver.alpha = to_real(*v, "alpha");
    if (auto v = config.find("c_frac"))
        spec.damping.c_frac = to_real(*v, "c_frac");
    if (auto v = config.find("lambda"))
        spec.damping = parse_damping(*v, spec.damping.c_frac);
    if (auto v = config.find("max_iters"))
        spec.solver.max_iters = static_cast<int>(to_integer(*v, "max_iters"));
    if (auto v = config.find("target")) {
        if (*v == "none")
            spec.solver.stop.target_rel_err.reset();
        else
            spec.solver.stop.target_rel_err = to_real(*v, "target");
    }
    if (auto v = config.find("patience")) {
        if (*v == "none")
            spec.solver.stop.patience.reset();
        else
            spec.solver.stop.patience = static_cast<int>(to_integer(*v, "patience"));
    }
    if (auto v = config.find("improve_tol"))
        spec.solver.stop.improve_tol = to_real(*v, "improve_tol");
    if (auto v = config.find("record_every"))
        spec.solver.record_every = static_cast<int>(to_integer(*v, "record_every"));
    if (auto v = config.find("algorithms")) {
        spec.algorithms.clear();
        std::istringstream in(*v);
        std::string token;
        while (std::getline(in, token, ','))
            if (!trim(token).empty())
                spec.algorithms.push_back(parse_algorithm(trim(token)));
    }
    if (auto v = config.find("gd_etas"))
        spec.gd_etas = parse_real_list(*v);
    if (auto v = config.find("gd_values"))
        spec.gd_values = parse_real_list(*v);
    if (auto v = config.find("prec_gd_init"))
        spec.prec_gd_init = parse_init(*v);
    if (!config.has("preset"))
        spec.name = "custom";
    validate(spec);
    return spec;
}

} // namespace lrsense
