#ifndef LRSENSE_COMMON_HPP
#define LRSENSE_COMMON_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lrsense {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Bad arguments or inconsistent inputs (CLI exit code 2).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Failures that only show up while computing (CLI exit code 1).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw ValidationError(message);
}

} // namespace lrsense

#endif // LRSENSE_COMMON_HPP
