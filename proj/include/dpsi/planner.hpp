#pragma once

// Greedy exhaustive-search shaping planner: at every step, try each skill at
// each of nine locations (plus doing nothing) and commit the one whose
// simulated result is closest to the target heightmap.

#include "dpsi/geometry.hpp"
#include "dpsi/losses.hpp"
#include "dpsi/mpm.hpp"
#include "dpsi/synthetic.hpp"
#include "dpsi/trajectory.hpp"

#include <limits>
#include <string>
#include <vector>

namespace dpsi {

struct Action {
  int skill = 0;  // 0: empty, otherwise 1-based index into the skill list
  int j = 0, k = 0;
  double start_z = 0.0;

  bool empty() const { return skill == 0; }
};

struct PlannerConfig {
  int n_actions = 8;
  double offset_unit = 0.03;  // m between neighbouring locations
  std::vector<MotionPreset> skills{motions::poking_shifting_1(), motions::poking_shifting_2()};
};

struct CandidateResult {
  Action action;
  double loss = std::numeric_limits<double>::infinity();
  bool feasible = false;
  std::string error;
};

struct PlanStep {
  Action action;
  double loss = 0.0;
  std::vector<CandidateResult> candidates;
  HeightMap heightmap;  // of the committed state, on the target's extent
};

struct Plan {
  double initial_loss = 0.0;
  std::vector<PlanStep> steps;
  ParticleSystem final_state;
};

/// Candidate actions in enumeration order: skills in order, offsets
/// row-major over (j, k), the empty action last.
inline std::vector<Action> candidate_actions(const PlannerConfig& cfg, double start_z) {
  std::vector<Action> out;
  for (int s = 1; s <= static_cast<int>(cfg.skills.size()); ++s)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) out.push_back({s, j, k, start_z});
  out.push_back({0, 0, 0, start_z});
  return out;
}

inline double max_height(const Points& x) {
  double z = -std::numeric_limits<double>::infinity();
  for (const Vec3& p : x) z = std::max(z, p(2));
  return z;
}

/// Simulates one action from `state`. The location grid is centred on the
/// target heightmap's origin.
inline ParticleSystem apply_action(const ParticleSystem& state, const Action& a, const HeightMap& target,
                                   const PhysicsParams& params, const Scene& base, const PlannerConfig& cfg) {
  if (a.empty()) return state;
  const MotionPreset& skill = cfg.skills.at(a.skill - 1);
  const Pose start{Vec3(target.origin(0) + a.j * cfg.offset_unit, target.origin(1) + a.k * cfg.offset_unit,
                        a.start_z),
                   Quat::Identity()};
  Scene scene = base;
  scene.effector = skill.effector;
  const Trajectory traj = motion_trajectory(skill, start, base.sim.frame_dt);
  return rollout(state, traj, params, scene).final_state;
}

inline double shape_loss(const Points& x, const HeightMap& target) {
  return heightmap_distance(rasterize_heightmap(x, target.origin), target);
}

/// Evaluates every candidate from `state`; failed rollouts get infinite loss.
inline std::vector<CandidateResult> evaluate_candidates(const ParticleSystem& state, const HeightMap& target,
                                                        const PhysicsParams& params, const Scene& base,
                                                        const PlannerConfig& cfg,
                                                        std::vector<ParticleSystem>* results = nullptr) {
  std::vector<CandidateResult> out;
  for (const Action& a : candidate_actions(cfg, max_height(state.x))) {
    CandidateResult c;
    c.action = a;
    ParticleSystem end;
    try {
      end = apply_action(state, a, target, params, base, cfg);
      c.loss = shape_loss(end.x, target);
      c.feasible = std::isfinite(c.loss);
      if (!c.feasible) c.loss = std::numeric_limits<double>::infinity();
    } catch (const Error& e) {
      c.error = e.what();
    }
    out.push_back(c);
    if (results) results->push_back(std::move(end));
  }
  return out;
}

/// Index of the first candidate with the strictly lowest loss.
inline std::size_t argmin_candidate(const std::vector<CandidateResult>& c) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i].loss < c[best].loss) best = i;
  return best;
}

inline Plan greedy_plan(const ParticleSystem& initial, const HeightMap& target, const PhysicsParams& params,
                        const Scene& base, const PlannerConfig& cfg = {}) {
  if (cfg.n_actions < 0) throw PreconditionError("n_actions must be >= 0");
  Plan plan;
  plan.final_state = initial;
  plan.initial_loss = shape_loss(initial.x, target);
  for (int step = 0; step < cfg.n_actions; ++step) {
    PlanStep ps;
    std::vector<ParticleSystem> ends;
    ps.candidates = evaluate_candidates(plan.final_state, target, params, base, cfg, &ends);
    const std::size_t b = argmin_candidate(ps.candidates);
    ps.action = ps.candidates[b].action;
    ps.loss = ps.candidates[b].loss;
    plan.final_state = std::move(ends[b]);
    ps.heightmap = rasterize_heightmap(plan.final_state.x, target.origin);
    plan.steps.push_back(std::move(ps));
  }
  return plan;
}

}  // namespace dpsi
