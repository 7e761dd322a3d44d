#pragma once

// Scalar helpers so that templated kernels run with both double and
// Eigen::AutoDiffScalar (used for local Jacobians in the adjoint pass).

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>

namespace dpsi {

template <class T>
using V3 = Eigen::Matrix<T, 3, 1>;

template <int N>
using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;

inline double value_of(double x) { return x; }

template <class D>
double value_of(const Eigen::AutoDiffScalar<D>& x) {
  return x.value();
}

template <class T>
T ad_sqrt(const T& x) {
  using std::sqrt;
  return sqrt(x);
}

/// Seeds variable `index` of an N-dimensional dual with value v.
template <int N>
Dual<N> seed(double v, int index) {
  return Dual<N>(v, N, index);
}

template <int N>
Dual<N> constant(double v) {
  return Dual<N>(v, Eigen::Matrix<double, N, 1>::Zero());
}

}  // namespace dpsi
