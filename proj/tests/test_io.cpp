#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "lrsense/io.hpp"
#include "test_util.hpp"

using namespace lrsense;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("lrsense_io_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("matrix files round trip")
{
    TempDir dir;
    std::mt19937_64 gen(1);
    const MatrixXd m = testutil::gaussian(7, 3, gen);
    write_matrix(dir.file("m.bin"), m);
    CHECK(read_matrix(dir.file("m.bin")) == m);
    write_matrix(dir.file("m.txt"), m, MatrixFormat::text);
    CHECK(read_matrix(dir.file("m.txt")) == m);
    write_matrix(dir.file("empty.bin"), MatrixXd(0, 4));
    CHECK(read_matrix(dir.file("empty.bin")).cols() == 4);

    std::ofstream(dir.file("short.txt")) << "2 2\n1 2\n3\n";
    CHECK_THROWS_AS(read_matrix(dir.file("short.txt")), ValidationError);
    std::ofstream(dir.file("junk")) << "not a matrix";
    CHECK_THROWS_AS(read_matrix(dir.file("junk")), ValidationError);
    CHECK_THROWS_AS(read_matrix(dir.file("missing")), ValidationError);
    CHECK(parse_matrix_format("text") == MatrixFormat::text);
    CHECK_THROWS_AS(parse_matrix_format("hdf5"), ValidationError);
}

TEST_CASE("binary matrix layout")
{
    TempDir dir;
    MatrixXd m(2, 1);
    m << 1.5, -2.0;
    write_matrix(dir.file("m.bin"), m);
    std::ifstream in(dir.file("m.bin"), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 4 + 4 + 8 + 8 + 16);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LRSM");
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 24, 8);
    CHECK(first == 1.5);
}

TEST_CASE("key value files")
{
    const KeyValues kv = parse_key_values("# comment\n a = 1 \n\nb=two words # trailing\n");
    CHECK(kv.get("a") == "1");
    CHECK(kv.get("b") == "two words");
    CHECK_FALSE(kv.has("c"));
    CHECK_THROWS_WITH_AS(kv.get("c"), "missing key 'c'", ValidationError);
    CHECK_THROWS_AS(parse_key_values("novalue\n"), ValidationError);
    CHECK_THROWS_AS(parse_key_values(" = 3\n"), ValidationError);

    KeyValues out;
    out.set("z", "1");
    out.set("a", "2");
    out.set("z", "3");
    REQUIRE(out.entries().size() == 2);
    CHECK(out.entries()[0].first == "z");
    CHECK(out.get("z") == "3");
    const KeyValues back = parse_key_values(format_key_values(out));
    CHECK(back.entries() == out.entries());
}

TEST_CASE("real lists and damping rules")
{
    CHECK(parse_real_list("1, 2.5,1e-3") == std::vector<double>{1.0, 2.5, 1e-3});
    const std::vector<double> values{0.1, 1.0 / 3.0, 1e-27};
    CHECK(parse_real_list(format_real_list(values)) == values);
    CHECK_THROWS_AS(parse_real_list("1,x"), ValidationError);

    const DampingRule fixed = parse_damping("0.01");
    CHECK(fixed.fixed == 0.01);
    const DampingRule automatic = parse_damping("auto:4", 0.1);
    CHECK_FALSE(automatic.fixed.has_value());
    CHECK(automatic.rank_guess == 4);
    CHECK(automatic.c_frac == 0.1);
    CHECK(parse_damping("auto").rank_guess == 0);
    CHECK_THROWS_AS(parse_damping("auto:0"), ValidationError);
    CHECK_THROWS_AS(parse_damping("-1"), ValidationError);
}

TEST_CASE("instances round trip")
{
    TempDir dir;
    for (MatrixFormat format : {MatrixFormat::binary, MatrixFormat::text}) {
        Instance inst{make_ground_truth(12, 2, 3.0, 4, SpectrumSpacing::geometric), 3.0, SpectrumSpacing::geometric,
                      150, 77, Backend::streamed, NoiseModel{0.01, 9}, VectorXd{}};
        inst.y = measure(inst.make_operator(), inst.truth, inst.noise).y;
        const std::string meta = write_instance(dir.file("inst"), inst, format);
        CHECK(meta == dir.file("inst.meta"));
        for (const std::string& path : {meta, dir.file("inst")}) {
            const Instance back = read_instance(path);
            CHECK(back.truth.u_star() == inst.truth.u_star());
            CHECK(back.truth.sigma_star() == inst.truth.sigma_star());
            CHECK(back.truth.seed() == 4);
            CHECK(back.kappa == 3.0);
            CHECK(back.spacing == SpectrumSpacing::geometric);
            CHECK(back.m == 150);
            CHECK(back.op_seed == 77);
            CHECK(back.backend == Backend::streamed);
            CHECK(back.noise.sigma == 0.01);
            CHECK(back.noise.seed == 9);
            CHECK(back.y == inst.y);
            CHECK(back.make_operator().row(5) == inst.make_operator().row(5));
        }
    }
    CHECK_THROWS_AS(read_instance(dir.file("nothing")), ValidationError);
}

TEST_CASE("checkpoints round trip")
{
    TempDir dir;
    std::mt19937_64 gen(5);
    std::vector<Checkpoint> cps;
    for (int t = 0; t < 4; ++t)
        cps.push_back(Checkpoint{t * 10, 0.5 * t, 1.0 / (t + 1), 0.01, testutil::gaussian(6, 2, gen)});
    write_checkpoints(dir.file("c.bin"), cps);
    const std::vector<Checkpoint> back = read_checkpoints(dir.file("c.bin"));
    REQUIRE(back.size() == cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
        CHECK(back[i].t == cps[i].t);
        CHECK(back[i].elapsed_ms == cps[i].elapsed_ms);
        CHECK(back[i].loss == cps[i].loss);
        CHECK(back[i].lambda == cps[i].lambda);
        CHECK(back[i].x == cps[i].x);
    }
    write_matrix(dir.file("m.bin"), MatrixXd::Ones(2, 2));
    CHECK_THROWS_AS(read_checkpoints(dir.file("m.bin")), ValidationError);
    fs::resize_file(dir.file("c.bin"), fs::file_size(dir.file("c.bin")) - 8);
    CHECK_THROWS_AS(read_checkpoints(dir.file("c.bin")), ValidationError);
}

TEST_CASE("sweep configs")
{
    const SweepSpec spec = sweep_spec_from_config(parse_key_values(
        "preset = ci-small\ntrials = 1\nvalues = 1, 7\nc_frac = 0.1\nlambda = auto:2\ntarget = 1e-6\n"
        "algorithms = scaled-gd-lambda, prec-gd\ngd_values = 7\n"));
    CHECK(spec.name == "ci-small");
    CHECK(spec.problem.n == 60);
    CHECK(spec.trials == 1);
    CHECK(spec.values == std::vector<double>{1, 7});
    CHECK(spec.damping.rank_guess == 2);
    CHECK(spec.damping.c_frac == 0.1);
    CHECK(spec.solver.stop.target_rel_err == 1e-6);
    CHECK(spec.algorithms == std::vector<Algorithm>{Algorithm::scaled_gd_lambda, Algorithm::prec_gd});

    const SweepSpec custom = sweep_spec_from_config(parse_key_values(
        "axis = noise_sigma\nvalues = 0, 0.1\nn = 20\nr_star = 2\nr = 4\npatience = 50\ntarget = none\nlambda = 0.02\n"));
    CHECK(custom.name == "custom");
    CHECK(custom.axis == SweepAxis::noise_sigma);
    CHECK(custom.damping.fixed == 0.02);
    CHECK_FALSE(custom.solver.stop.target_rel_err.has_value());
    CHECK(custom.solver.stop.patience == 50);

    CHECK_THROWS_WITH_AS(sweep_spec_from_config(parse_key_values("preset = ci-small\ncolour = red\n")),
                         "sweep config: unknown key 'colour'", ValidationError);
    CHECK_THROWS_AS(sweep_spec_from_config(parse_key_values("preset = ci-small\ntrials = many\n")), ValidationError);
    CHECK_THROWS_AS(sweep_spec_from_config(parse_key_values("preset = ci-small\nvalues = 3, 2\n")), ValidationError);
}
