#ifndef LRSENSE_RNG_HPP
#define LRSENSE_RNG_HPP

#include <cstdint>
#include <optional>

#include <Eigen/Core>

namespace lrsense {

/**
 * Counter-based splittable generator, "lrsense-ctr64" version 1.
 *
 * Output k of a stream with key K is mix64(K + (k + 1) * 0x9E3779B97F4A7C15),
 * where mix64 is the SplitMix64 finalizer. A child stream is keyed by
 * derive_seed(K, index) = mix64(K ^ mix64(index + 0xD1B54A32D192ED03)).
 *
 * Gaussians use Box-Muller on two consecutive outputs a, b:
 *   u1 = ((a >> 11) + 1) * 2^-53   (in (0, 1])
 *   u2 = (b >> 11) * 2^-53         (in [0, 1))
 *   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)
 * and are emitted in the order z0, z1.
 *
 * The contract above is the whole generator; any implementation following it
 * reproduces every stream in this library.
 */
inline constexpr int kRngVersion = 1;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t key, std::uint64_t index) noexcept
{
    return mix64(key ^ mix64(index + 0xD1B54A32D192ED03ULL));
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64() noexcept
    {
        ++counter_;
        return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double gaussian() noexcept;

    CounterRng split(std::uint64_t index) const noexcept { return CounterRng(derive_seed(key_, index)); }

    /// Fills column-major with i.i.d. standard normals.
    Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

} // namespace lrsense

#endif // LRSENSE_RNG_HPP
