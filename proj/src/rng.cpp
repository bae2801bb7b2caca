#include "lrsense/rng.hpp"

#include <cmath>
#include <numbers>

namespace lrsense {

double CounterRng::gaussian() noexcept
{
    if (spare_) {
        const double z = *spare_;
        spare_.reset();
        return z;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

Eigen::MatrixXd CounterRng::gaussian_matrix(Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd out(rows, cols);
    double* data = out.data();
    for (Eigen::Index k = 0; k < out.size(); ++k)
        data[k] = gaussian();
    return out;
}

} // namespace lrsense
