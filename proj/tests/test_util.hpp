#ifndef LRSENSE_TEST_UTIL_HPP
#define LRSENSE_TEST_UTIL_HPP

#include <random>

#include <Eigen/Dense>

namespace testutil {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen)
{
    std::normal_distribution<double> dist;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            m(i, j) = dist(gen);
    return m;
}

inline Eigen::MatrixXd random_orthogonal(Eigen::Index n, std::mt19937_64& gen)
{
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(n, n, gen));
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_symmetric(Eigen::Index n, std::mt19937_64& gen)
{
    const Eigen::MatrixXd g = gaussian(n, n, gen);
    return 0.5 * (g + g.transpose());
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

} // namespace testutil

#endif
