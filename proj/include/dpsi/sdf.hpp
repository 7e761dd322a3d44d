#pragma once

// Analytic signed distance fields. Negative inside, positive outside; the
// normal is the normalized gradient (outward). Each primitive lives in its own
// canonical frame; RigidEffector handles the placement in the world.

#include "dpsi/autodiff.hpp"
#include "dpsi/core.hpp"

#include <variant>

namespace dpsi {

/// Solid half-space below z = height (the table top).
struct HalfSpace {
  double height = 0.0;
};

/// Axis-aligned box centred at the origin.
struct Box {
  Vec3 half_extent = Vec3::Constant(0.01);
};

/// Finite cylinder, axis along local z, centred at the origin.
struct Cylinder {
  double radius = 0.01;
  double half_height = 0.04;
};

/// Segment from (0,0,-half_length) to (0,0,half_length) swept by a sphere.
struct Capsule {
  double radius = 0.01;
  double half_length = 0.025;
};

using Primitive = std::variant<HalfSpace, Box, Cylinder, Capsule>;

template <class T>
struct SdfSample {
  T distance;
  V3<T> normal;
};

namespace detail {

template <class T>
T sign_of(const T& x) {
  return value_of(x) < 0.0 ? T(-1.0) : T(1.0);
}

template <class T>
SdfSample<T> sdf_local(const HalfSpace& s, const V3<T>& p) {
  V3<T> n;
  n << T(0.0), T(0.0), T(1.0);
  return {T(p(2) - s.height), n};
}

template <class T>
SdfSample<T> sdf_local(const Box& b, const V3<T>& p) {
  V3<T> q;
  for (int i = 0; i < 3; ++i) q(i) = T(p(i) * sign_of(p(i))) - b.half_extent(i);
  const bool outside = value_of(q(0)) > 0.0 || value_of(q(1)) > 0.0 || value_of(q(2)) > 0.0;
  V3<T> n = V3<T>::Zero();
  if (outside) {
    V3<T> pos;
    for (int i = 0; i < 3; ++i) pos(i) = value_of(q(i)) > 0.0 ? q(i) : T(0.0);
    const T len = ad_sqrt(T(pos.squaredNorm()));
    for (int i = 0; i < 3; ++i) n(i) = T(sign_of(p(i)) * pos(i) / len);
    return {len, n};
  }
  int axis = 0;
  for (int i = 1; i < 3; ++i)
    if (value_of(q(i)) > value_of(q(axis))) axis = i;
  n(axis) = sign_of(p(axis));
  return {q(axis), n};
}

template <class T>
SdfSample<T> sdf_local(const Cylinder& c, const V3<T>& p) {
  const double rv = std::hypot(value_of(p(0)), value_of(p(1)));
  V3<T> radial = V3<T>::Zero();
  T r(0.0);
  if (rv > 0.0) {
    r = ad_sqrt(T(p(0) * p(0) + p(1) * p(1)));
    radial(0) = p(0) / r;
    radial(1) = p(1) / r;
  } else {
    radial(0) = T(1.0);
  }
  const T qr = r - c.radius;
  const T qz = T(p(2) * sign_of(p(2))) - c.half_height;
  V3<T> axial = V3<T>::Zero();
  axial(2) = sign_of(p(2));
  const bool out_r = value_of(qr) > 0.0, out_z = value_of(qz) > 0.0;
  if (out_r && out_z) {
    const T len = ad_sqrt(T(qr * qr + qz * qz));
    return {len, V3<T>((radial * qr + axial * qz) / len)};
  }
  if (out_r) return {qr, radial};
  if (out_z) return {qz, axial};
  if (value_of(qr) > value_of(qz)) return {qr, radial};
  return {qz, axial};
}

template <class T>
SdfSample<T> sdf_local(const Capsule& c, const V3<T>& p) {
  V3<T> d = p;
  const double z = value_of(p(2));
  if (z > c.half_length)
    d(2) = p(2) - c.half_length;
  else if (z < -c.half_length)
    d(2) = p(2) + c.half_length;
  else
    d(2) = T(0.0);
  const double lv = std::sqrt(value_of(d(0)) * value_of(d(0)) + value_of(d(1)) * value_of(d(1)) +
                              value_of(d(2)) * value_of(d(2)));
  if (lv == 0.0) {
    V3<T> n = V3<T>::Zero();
    n(0) = T(1.0);
    return {T(-c.radius), n};
  }
  const T len = ad_sqrt(T(d.squaredNorm()));
  return {T(len - c.radius), V3<T>(d / len)};
}

}  // namespace detail

/// Distance and outward normal of a primitive at a point in its own frame.
template <class T>
SdfSample<T> sdf_query(const Primitive& shape, const V3<T>& p) {
  return std::visit([&](const auto& s) { return detail::sdf_local(s, p); }, shape);
}

inline SdfSample<double> sdf_query(const Primitive& shape, const Vec3& p) {
  return sdf_query<double>(shape, p);
}

}  // namespace dpsi
