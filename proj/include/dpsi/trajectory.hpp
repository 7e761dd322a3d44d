#pragma once

// Effector trajectories: uneven "real" waypoint lists and their constant-dt
// simulation counterparts, plus the canned manipulation motions.

#include "dpsi/contact.hpp"
#include "dpsi/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dpsi {

struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

struct Waypoint {
  double t = 0.0;
  Pose pose;
};

enum class TrajectoryForm { Real, Sim };

/// In sim form every waypoint is one control frame: frame k drives the
/// effector from waypoint k-1 (or the start pose for k = 0) to waypoint k.
struct Trajectory {
  std::vector<Waypoint> waypoints;
  TrajectoryForm form = TrajectoryForm::Real;
  double frame_dt = 0.0;

  std::size_t size() const { return waypoints.size(); }
  bool empty() const { return waypoints.empty(); }

  void validate() const {
    for (std::size_t i = 1; i < waypoints.size(); ++i)
      if (!(waypoints[i].t > waypoints[i - 1].t))
        throw PreconditionError("trajectory timestamps must be strictly increasing (waypoint " +
                                std::to_string(i) + ")");
  }
};

/// Linear velocity and world-frame angular velocity for one frame.
struct FrameCommand {
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

inline FrameCommand command_between(const Pose& from, const Pose& to, double dt) {
  FrameCommand c;
  c.velocity = (to.position - from.position) / dt;
  Quat dq = to.orientation * from.orientation.conjugate();
  if (dq.w() < 0.0) dq.coeffs() = -dq.coeffs();
  const Eigen::AngleAxisd aa(dq);
  c.angular_velocity = aa.axis() * (aa.angle() / dt);
  return c;
}

namespace detail {
inline Quat slerp_path(const Quat& a, const Quat& b, double s) {
  // Shorter arc; an exact half turn keeps the direction of the stored target.
  return a.slerp(s, b).normalized();
}
}  // namespace detail

/// Converts each real segment to constant-velocity frames of length frame_dt.
/// A segment of duration T gets ceil(T / frame_dt) frames, so segment endpoint
/// poses are reproduced exactly; the first sim waypoint is the start pose.
inline Trajectory resample_trajectory(const Trajectory& real, double frame_dt) {
  if (!(frame_dt > 0.0)) throw PreconditionError("frame_dt must be positive");
  Trajectory sim;
  sim.form = TrajectoryForm::Sim;
  sim.frame_dt = frame_dt;
  if (real.empty()) return sim;
  sim.waypoints.push_back({0.0, real.waypoints.front().pose});
  for (std::size_t s = 1; s < real.waypoints.size(); ++s) {
    const Waypoint& a = real.waypoints[s - 1];
    const Waypoint& b = real.waypoints[s];
    const double T = b.t - a.t;
    if (!(T > 0.0))
      throw PreconditionError("zero-duration trajectory segment " + std::to_string(s));
    const int n = std::max(1, static_cast<int>(std::ceil(T / frame_dt - 1e-9)));
    for (int k = 1; k <= n; ++k) {
      const double u = static_cast<double>(k) / n;
      Pose p;
      p.position = k == n ? b.pose.position : Vec3(a.pose.position + u * (b.pose.position - a.pose.position));
      p.orientation = k == n ? b.pose.orientation : detail::slerp_path(a.pose.orientation, b.pose.orientation, u);
      sim.waypoints.push_back({static_cast<double>(sim.waypoints.size()) * frame_dt, p});
    }
  }
  return sim;
}

/// One straight or rotational piece of a designed motion.
struct MotionSegment {
  Vec3 translation = Vec3::Zero();
  double rotation_z = 0.0;  // radians about world +z
};

struct MotionPreset {
  std::string name;
  EffectorShape effector;
  std::vector<MotionSegment> segments;
  double duration = 0.0;    // real-world duration of the whole motion, s
  int sim_waypoints = 0;    // count after resampling at 0.01 s
};

/// Real trajectory for a motion starting at `start`. Segment durations are
/// allotted in proportion to travel, then nudged so that resampling at
/// frame_dt reproduces `sim_waypoints` exactly while summing to `duration`.
inline Trajectory build_motion(const MotionPreset& m, const Pose& start, double frame_dt = 0.01) {
  const int n_seg = static_cast<int>(m.segments.size());
  if (n_seg == 0) throw PreconditionError("motion has no segments");
  const int frames = m.sim_waypoints - 1;
  if (frames < n_seg) throw PreconditionError("motion needs at least one frame per segment");
  // A pure rotation is budgeted like a 2.5 cm move.
  std::vector<double> len(n_seg);
  double total = 0.0;
  for (int s = 0; s < n_seg; ++s) {
    len[s] = m.segments[s].translation.norm() + (m.segments[s].rotation_z != 0.0 ? 0.025 : 0.0);
    total += len[s];
  }
  // Largest-remainder split of the frame budget.
  std::vector<int> nk(n_seg);
  std::vector<std::pair<double, int>> rem;
  int used = 0;
  for (int s = 0; s < n_seg; ++s) {
    const double exact = frames * len[s] / total;
    nk[s] = std::max(1, static_cast<int>(std::floor(exact)));
    used += nk[s];
    rem.push_back({exact - std::floor(exact), s});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int i = 0; used < frames; ++i, ++used) ++nk[rem[i % n_seg].second];
  double slack = (frames - m.duration / frame_dt) / n_seg;
  if (std::abs(slack) < 1e-9) slack = 0.0;
  if (slack < 0.0 || slack >= 1.0)
    throw PreconditionError("motion '" + m.name + "': duration and waypoint count are incompatible");

  Trajectory real;
  real.form = TrajectoryForm::Real;
  Pose p = start;
  double t = 0.0;
  real.waypoints.push_back({t, p});
  for (int s = 0; s < n_seg; ++s) {
    t += (nk[s] - slack) * frame_dt;
    p.position += m.segments[s].translation;
    if (m.segments[s].rotation_z != 0.0)
      p.orientation = Quat(Eigen::AngleAxisd(m.segments[s].rotation_z, Vec3::UnitZ())) * p.orientation;
    real.waypoints.push_back({t, p});
  }
  return real;
}

namespace motions {

inline MotionSegment move(double x, double y, double z) { return {Vec3(x, y, z), 0.0}; }

inline MotionPreset poking_1() {
  return {"poking-1", EffectorShape::Bullet, {move(0, 0, -0.015), move(0, 0, 0.03)}, 0.86, 87};
}
inline MotionPreset poking_2() {
  return {"poking-2", EffectorShape::Bullet, {move(0, 0, -0.02), move(0, 0, 0.03)}, 0.93, 94};
}
// 152 sim waypoints cannot come from 1.52 s under ceil-per-segment rounding;
// the duration is shortened by one frame to keep the waypoint count.
inline MotionPreset poking_shifting_1() {
  return {"poking-shifting-1", EffectorShape::Bullet,
          {move(0, 0, -0.02), move(-0.03, 0, 0), move(0, 0, 0.03)}, 1.51, 152};
}
inline MotionPreset poking_shifting_2() {
  return {"poking-shifting-2", EffectorShape::Bullet,
          {move(0, 0, -0.02), move(0.03, 0, 0), move(0, 0, 0.03)}, 1.50, 153};
}
inline MotionPreset flattening() {
  const double d = 0.025;
  return {"flattening", EffectorShape::Cylinder,
          {move(0, 0, -d), move(d, 0, 0), move(0, 0, d), move(-d, 0, 0), move(0, 0, -d), move(-d, 0, 0),
           move(0, 0, d)},
          3.74, 378};
}
inline MotionPreset triple_poking() {
  const double d = 0.025;
  return {"triple-poking", EffectorShape::Bullet,
          {move(0, d, 0), move(0, 0, -d), move(0, 0, d), move(0, -d, 0), move(0, 0, -d), move(0, 0, d),
           move(0, -d, 0), move(0, 0, -d), move(0, 0, d)},
          4.55, 460};
}
inline MotionPreset poking_180_rotating() {
  return {"poking-180-rotating", EffectorShape::Rectangle,
          {move(0, 0, -0.025), {Vec3::Zero(), M_PI}, move(0, 0, 0.025)}, 6.23, 625};
}

inline std::vector<MotionPreset> all() {
  return {poking_1(), poking_2(), poking_shifting_1(), poking_shifting_2(), flattening(), triple_poking(),
          poking_180_rotating()};
}

inline MotionPreset by_name(const std::string& name) {
  for (const MotionPreset& m : all())
    if (m.name == name) return m;
  throw PreconditionError("unknown motion '" + name + "'");
}

}  // namespace motions

}  // namespace dpsi
