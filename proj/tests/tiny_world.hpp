#pragma once

// A 2 cm block of 125 particles on a coarse grid with soft parameters, so
// that optimizer and planner tests run in seconds.

#include "dpsi/dataset.hpp"
#include "dpsi/geometry.hpp"
#include "dpsi/mpm.hpp"
#include "dpsi/synthetic.hpp"
#include "dpsi/trajectory.hpp"

#include <string>

namespace dpsi::testing {

struct TinyWorld {
  Scene scene;
  ParamBox box;
  PhysicsParams truth{1e5, 0.3, 1000.0, 1.5e3, 0.4, 0.3};
  ParticleSystem body;
};

inline TinyWorld tiny_world() {
  TinyWorld w;
  w.scene.sim.grid = GridSpec::centered(Vec3(0, 0, 0.04), 0.16, 32);
  w.scene.sim.min_substeps = 20;
  w.box.lo = {5e4, 0.1, 800.0, 5e2, 0.01, 0.01};
  w.box.hi = {5e5, 0.45, 1500.0, 5e4, 2.0, 2.0};
  w.body = make_body(BoxSolid{Vec3(0, 0, 0.01), Vec3::Constant(0.01)}, 125, 5);
  return w;
}

/// Down 4 mm and back up over six frames.
inline MotionPreset tiny_poke() {
  return {"tiny-poke", EffectorShape::Bullet, {motions::move(0, 0, -0.004), motions::move(0, 0, 0.004)}, 0.06, 7};
}

/// Down, sideways along +x, up.
inline MotionPreset tiny_shift() {
  return {"tiny-shift",
          EffectorShape::Bullet,
          {motions::move(0, 0, -0.004), motions::move(0.004, 0, 0), motions::move(0, 0, 0.004)},
          0.09,
          10};
}

/// Noise-free observation: surface particles, all particles, and the
/// heightmap of all particles (a sampled body's top layer need not be
/// classified as surface) centred on the cloud.
inline Observation exact_observation(const ParticleSystem& s) {
  Observation o;
  for (int i : surface_indices(s.x, std::cbrt(s.volume))) o.surface_cloud.push_back(s.x[i]);
  o.filled = s.x;
  o.heightmap = rasterize_heightmap(s.x, xy_centroid(o.surface_cloud));
  return o;
}

inline DataPoint tiny_datapoint(const TinyWorld& w, const MotionPreset& m, const std::string& name,
                                const Vec2d& offset = Vec2d::Zero()) {
  DataPoint dp;
  dp.name = name;
  dp.initial = w.body;
  dp.effector = m.effector;
  dp.trajectory = motion_trajectory(m, motion_start(w.body.x, offset), w.scene.sim.frame_dt);
  const RolloutResult r = rollout(dp.initial, dp.trajectory, w.truth, scene_for(w.scene, dp));
  dp.target = exact_observation(r.final_state);
  return dp;
}

}  // namespace dpsi::testing
