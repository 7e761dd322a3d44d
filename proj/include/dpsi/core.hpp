#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpsi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Vec3i = Eigen::Vector3i;
using Vec2d = Eigen::Vector2d;

// Contiguous list of 3-vectors. Eigen's aligned allocator is not needed for
// Vector3d (no vectorized alignment requirement), so std::vector is fine.
using Points = std::vector<Vec3>;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. nu >= 0.5).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (non-convergence, non-finite intermediate).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometry (singular matrix, zero-length direction).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// The simulation blew up (NaN velocity, particle left the domain).
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or unit.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system or format error.
class IoError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline double sqr(double x) { return x * x; }

}  // namespace dpsi
