#pragma once

// One recorded interaction: the body before, the motion, and what was
// observed afterwards.

#include "dpsi/losses.hpp"
#include "dpsi/mpm.hpp"
#include "dpsi/trajectory.hpp"

#include <string>
#include <vector>

namespace dpsi {

struct DataPoint {
  std::string name;
  ParticleSystem initial;  // filled from the pre-interaction observation
  Observation target;
  Trajectory trajectory;   // sim form
  EffectorShape effector = EffectorShape::Bullet;

  void validate() const {
    if (initial.size() == 0) throw PreconditionError("datapoint '" + name + "' has no particles");
    if (target.surface_cloud.empty() || target.filled.empty())
      throw PreconditionError("datapoint '" + name + "' has an empty target");
    if (trajectory.form != TrajectoryForm::Sim)
      throw PreconditionError("datapoint '" + name + "' trajectory is not in sim form");
  }
};

using Dataset = std::vector<DataPoint>;

/// The scene of a datapoint: the shared simulation settings with its effector.
inline Scene scene_for(const Scene& base, const DataPoint& dp) {
  Scene s = base;
  s.effector = dp.effector;
  return s;
}

}  // namespace dpsi
