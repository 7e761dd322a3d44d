#pragma once

// Kinematic rigid bodies (effectors and the table) and the sticky/dynamic
// friction response used at grid nodes and particles.

#include "dpsi/autodiff.hpp"
#include "dpsi/core.hpp"
#include "dpsi/sdf.hpp"

#include <vector>

namespace dpsi {

enum class EffectorShape { Rectangle, Cylinder, Bullet };

/// A kinematic body. The primitive sits in the body frame via (mount_offset,
/// mount_rotation); the body pose is (position, orientation) in the world.
/// Angular velocity is in the world frame, about `position`.
struct RigidEffector {
  Primitive shape = HalfSpace{};
  Vec3 mount_offset = Vec3::Zero();
  Mat3 mount_rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  bool is_table = false;

  Mat3 shape_to_world() const { return orientation.toRotationMatrix() * mount_rotation; }

  template <class T>
  SdfSample<T> query(const V3<T>& x) const {
    const Mat3 R = orientation.toRotationMatrix();
    const Mat3 A = shape_to_world();
    const Vec3 origin = position + R * mount_offset;
    const V3<T> local = A.transpose().cast<T>() * (x - origin.cast<T>());
    SdfSample<T> s = sdf_query<T>(shape, local);
    s.normal = A.cast<T>() * s.normal;
    return s;
  }

  SdfSample<double> query(const Vec3& x) const { return query<double>(x); }

  template <class T>
  V3<T> velocity_at(const V3<T>& x) const {
    const V3<T> r = x - position.cast<T>();
    return velocity.cast<T>() + angular_velocity.cast<T>().cross(r);
  }

  /// Advances the pose by dt at the current (constant) twist.
  void advance(double dt) {
    position += velocity * dt;
    const double angle = angular_velocity.norm() * dt;
    if (angle > 0.0) {
      const Quat dq(Eigen::AngleAxisd(angle, angular_velocity.normalized()));
      orientation = (dq * orientation).normalized();
    }
  }
};

inline RigidEffector make_table(double height = 0.0) {
  RigidEffector t;
  t.shape = HalfSpace{height};
  t.is_table = true;
  return t;
}

/// Effector tools. Each tool's lowest point sits at the body origin so that a
/// trajectory pose is the contact tip.
inline RigidEffector make_effector(EffectorShape kind) {
  RigidEffector e;
  switch (kind) {
    case EffectorShape::Rectangle:
      e.shape = Box{Vec3(0.01, 0.01, 0.05)};
      e.mount_offset = Vec3(0.0, 0.0, 0.05);
      break;
    case EffectorShape::Cylinder:
      // Roller lying along the body y axis.
      e.shape = Cylinder{0.01, 0.04};
      e.mount_offset = Vec3(0.0, 0.0, 0.01);
      e.mount_rotation = Eigen::AngleAxisd(0.5 * M_PI, Vec3::UnitX()).toRotationMatrix();
      break;
    case EffectorShape::Bullet:
      e.shape = Capsule{0.01, 0.025};
      e.mount_offset = Vec3(0.0, 0.0, 0.035);
      break;
  }
  return e;
}

/// Decomposition of a node/particle velocity relative to a contact surface.
struct ContactQuery {
  Vec3 normal;
  Vec3 v;
  Vec3 v_obj;
  Vec3 v_rel;
  double v_n;
  Vec3 v_t;
};

inline ContactQuery make_contact_query(const Vec3& v, const Vec3& normal, const Vec3& v_obj) {
  ContactQuery q{normal, v, v_obj, v - v_obj, 0.0, Vec3::Zero()};
  q.v_n = normal.dot(q.v_rel);
  q.v_t = q.v_rel - normal * q.v_n;
  return q;
}

/// Sticky impulse with dynamic (Coulomb) friction. Separating velocities are
/// untouched; otherwise the tangential part either sticks or shrinks by eta |v_n|.
template <class T>
V3<T> friction_response(const V3<T>& v, const V3<T>& n, const V3<T>& v_obj, const T& eta) {
  const V3<T> v_rel = v - v_obj;
  const T v_n = n.dot(v_rel);
  if (value_of(v_n) >= 0.0) return v;
  const V3<T> v_t = v_rel - n * v_n;
  const double vt_norm = std::sqrt(value_of(v_t(0)) * value_of(v_t(0)) +
                                   value_of(v_t(1)) * value_of(v_t(1)) +
                                   value_of(v_t(2)) * value_of(v_t(2)));
  if (vt_norm <= -value_of(eta) * value_of(v_n)) return v_obj;
  const T len = ad_sqrt(T(v_t.squaredNorm()));
  const T scale = T(1.0) + eta * v_n / len;
  return V3<T>(v_t * scale + v_obj);
}

inline Vec3 resolve_friction(const ContactQuery& q, double eta) {
  return friction_response<double>(q.v, q.normal, q.v_obj, eta);
}

/// Contact weight: 1 inside a body, falling linearly to 0 at distance `band`.
template <class T>
T contact_weight(const T& d, double band) {
  if (value_of(d) <= 0.0) return T(1.0);
  if (value_of(d) >= band) return T(0.0);
  return T(1.0) - d / band;
}

/// Applies every body's friction response in order, blended by contact weight.
template <class T>
V3<T> collide(V3<T> v, const V3<T>& x, const std::vector<RigidEffector>& bodies, const T& eta_t,
              const T& eta_m, double band) {
  for (const RigidEffector& b : bodies) {
    const SdfSample<T> s = b.query<T>(x);
    if (value_of(s.distance) >= band) continue;
    const V3<T> r = friction_response<T>(v, s.normal, b.velocity_at<T>(x), b.is_table ? eta_t : eta_m);
    const T w = contact_weight<T>(s.distance, band);
    v = v + (r - v) * w;
  }
  return v;
}

/// True when the point lies within the contact band of any body.
inline bool near_any(const Vec3& x, const std::vector<RigidEffector>& bodies, double band) {
  for (const RigidEffector& b : bodies)
    if (b.query(x).distance < band) return true;
  return false;
}

}  // namespace dpsi
