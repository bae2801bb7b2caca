#include "doctest.h"

#include <cmath>
#include <set>

#include "lrsense/rng.hpp"

using namespace lrsense;

TEST_CASE("CounterRng.SameKeySameStream")
{
    CounterRng a(42);
    CounterRng b(42);
    for (int i = 0; i < 100; ++i)
        CHECK_EQ(a.next_u64(), b.next_u64());
}

TEST_CASE("CounterRng.OutputFollowsCounterFormula")
{
    // Reference SplitMix64 finalizer written out independently.
    auto finalizer = [](std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    };
    const std::uint64_t key = 0x1234;
    CounterRng rng(key);
    for (std::uint64_t k = 1; k <= 5; ++k)
        CHECK_EQ(rng.next_u64(), finalizer(key + k * 0x9E3779B97F4A7C15ULL));
}

TEST_CASE("CounterRng.SplitStreamsDiffer")
{
    std::set<std::uint64_t> firsts;
    for (std::uint64_t i = 0; i < 1000; ++i)
        firsts.insert(CounterRng(7).split(i).next_u64());
    CHECK_EQ(firsts.size(), 1000u);
    CHECK_EQ(CounterRng(7).split(3).key(), derive_seed(7, 3));
}

TEST_CASE("CounterRng.UniformRange")
{
    CounterRng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK_GE(u, 0.0);
        CHECK_LT(u, 1.0);
    }
}

TEST_CASE("CounterRng.BoxMullerPairOrder")
{
    CounterRng raw(99);
    const std::uint64_t a = raw.next_u64();
    const std::uint64_t b = raw.next_u64();
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * std::ldexp(1.0, -53);
    const double u2 = static_cast<double>(b >> 11) * std::ldexp(1.0, -53);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    CounterRng rng(99);
    CHECK(rng.gaussian() == doctest::Approx(radius * std::cos(2.0 * M_PI * u2)).epsilon(1e-15));
    CHECK(rng.gaussian() == doctest::Approx(radius * std::sin(2.0 * M_PI * u2)).epsilon(1e-15));
}

TEST_CASE("CounterRng.GaussianMoments")
{
    CounterRng rng(2024);
    const int count = 200000;
    double sum = 0.0;
    double sum_sq = 0.0;
    double sum_4 = 0.0;
    for (int i = 0; i < count; ++i) {
        const double z = rng.gaussian();
        sum += z;
        sum_sq += z * z;
        sum_4 += z * z * z * z;
    }
    // Standard errors: mean 1/sqrt(N), variance sqrt(2/N), fourth moment sqrt(96/N).
    CHECK(std::abs((sum / count) - (0.0)) <= 5.0 / std::sqrt(count));
    CHECK(std::abs((sum_sq / count) - (1.0)) <= 5.0 * std::sqrt(2.0 / count));
    CHECK(std::abs((sum_4 / count) - (3.0)) <= 5.0 * std::sqrt(96.0 / count));
}

TEST_CASE("CounterRng.GaussianMatrixIsColumnMajorStream")
{
    CounterRng a(5);
    CounterRng b(5);
    const Eigen::MatrixXd g = a.gaussian_matrix(3, 2);
    for (Eigen::Index j = 0; j < 2; ++j)
        for (Eigen::Index i = 0; i < 3; ++i)
            CHECK_EQ(g(i, j), b.gaussian());
}
