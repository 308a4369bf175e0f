#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace omf {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Random engine used by every seeded component of the library.
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps each family onto a fixed exit code.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A parameter or configuration value outside its documented domain.
struct InvalidArgument : Error {
    using Error::Error;
};

/// Malformed, inconsistent or non-finite input data.
struct DataError : Error {
    using Error::Error;
};

/// A solver could not produce a certified answer.
struct NumericalError : Error {
    using Error::Error;
};

/// The active Gram matrix of a homotopy became numerically singular.
struct DegeneratePathError : NumericalError {
    DegeneratePathError(Index atom_, double pivot_)
        : NumericalError("degenerate regularization path: atom " + std::to_string(atom_) +
                         " makes the active Gram matrix singular (pivot " + std::to_string(pivot_) +
                         ")"),
          atom(atom_),
          pivot(pivot_) {}
    Index atom;
    double pivot;
};

struct NonConvergenceError : NumericalError {
    NonConvergenceError(const std::string& what, double residual_)
        : NumericalError(what + " did not converge (last residual " + std::to_string(residual_) + ")"),
          residual(residual_) {}
    double residual;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
    if (!m.allFinite()) throw DataError(std::string(what) + " contains non-finite values");
}

template <typename Scalar>
constexpr Scalar sign(Scalar v) {
    return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

template <typename Scalar>
constexpr Scalar soft_threshold(Scalar v, Scalar t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return Scalar(0);
}

}  // namespace omf
