#pragma once

// Synthetic datapoints: simulate a known body under known parameters and
// observe the result through the emulated camera pipeline.

#include "dpsi/dataset.hpp"
#include "dpsi/geometry.hpp"
#include "dpsi/mpm.hpp"
#include "dpsi/trajectory.hpp"

#include <cmath>
#include <random>
#include <string>

namespace dpsi {

/// Particle body filling `solid` with roughly `particles` particles.
inline ParticleSystem make_body(const Solid& solid, int particles, std::uint64_t seed = 0) {
  if (particles < 1) throw PreconditionError("body needs at least one particle");
  const double density = particles / volume(solid);
  const Points pts = fill_particles(solid, density, seed);
  if (pts.empty()) throw DegenerateError("solid too small for the requested particle count");
  return ParticleSystem::at_rest(pts, 1.0 / density);
}

/// Tool pose at the top centre of the body, where every motion starts.
inline Pose motion_start(const Points& body, const Eigen::Vector2d& xy_offset = Eigen::Vector2d::Zero()) {
  double top = -1e300;
  for (const Vec3& p : body) top = std::max(top, p(2));
  const Eigen::Vector2d c = xy_centroid(body) + xy_offset;
  return {Vec3(c(0), c(1), top), Quat::Identity()};
}

/// Sim-form trajectory of a preset motion started at `start`.
inline Trajectory motion_trajectory(const MotionPreset& m, const Pose& start, double frame_dt) {
  return resample_trajectory(build_motion(m, start, frame_dt), frame_dt);
}

/// Observation of a simulated end state: surface cloud, re-filled particles
/// (at most as many as the body has) and the cloud's heightmap.
inline Observation observe(const ParticleSystem& state, const ObservationConfig& cfg, std::mt19937_64& rng) {
  const SyntheticCloud sc = synthesize_observation(state.x, state.volume, cfg, rng);
  Observation obs;
  obs.surface_cloud = sc.cloud;
  obs.filled = reconstruct_filled(sc.cloud, 1.0 / state.volume, state.size(), cfg.table_height, rng());
  obs.heightmap = rasterize_heightmap(sc.cloud);
  return obs;
}

/// Simulates `motion` on `body` under `truth` and observes the result.
inline DataPoint make_synthetic_datapoint(const std::string& name, const ParticleSystem& body,
                                          const MotionPreset& motion, EffectorShape effector,
                                          const PhysicsParams& truth, const Scene& base,
                                          const ObservationConfig& obs_cfg, std::mt19937_64& rng) {
  DataPoint dp;
  dp.name = name;
  dp.initial = body;
  dp.effector = effector;
  dp.trajectory = motion_trajectory(motion, motion_start(body.x), base.sim.frame_dt);
  const RolloutResult r = rollout(body, dp.trajectory, truth, scene_for(base, dp));
  dp.target = observe(r.final_state, obs_cfg, rng);
  return dp;
}

}  // namespace dpsi
