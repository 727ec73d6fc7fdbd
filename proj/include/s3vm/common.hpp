/**
 * @file common.hpp
 * @brief Shared scalar/matrix aliases and small numeric helpers.
 */

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace s3vm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Thrown when input data violates a documented precondition.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a numerical routine breaks down irrecoverably.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// sign with the convention sign(0) = +1.
inline double sign_pos(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline bool is_finite(double v) { return std::isfinite(v); }

/// Symmetrize in place; cheap guard against roundoff drift.
inline void symmetrize(Matrix& m) {
    m = ((m + m.transpose()) * 0.5).eval();
}

}  // namespace s3vm
