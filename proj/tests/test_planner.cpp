#include "dpsi/adjoint.hpp"
#include "dpsi/planner.hpp"
#include "tiny_world.hpp"

#include <gtest/gtest.h>

namespace dpsi {
namespace {

using testing::tiny_poke;
using testing::tiny_shift;
using testing::tiny_world;

PlannerConfig tiny_planner(int n_actions) {
  PlannerConfig c;
  c.n_actions = n_actions;
  c.offset_unit = 0.005;
  c.skills = {tiny_poke(), tiny_shift()};
  return c;
}

TEST(Candidates, NineteenInEnumerationOrder) {
  const auto c = candidate_actions(PlannerConfig{}, 0.04);
  ASSERT_EQ(c.size(), 19u);
  EXPECT_EQ(c[0].skill, 1);
  EXPECT_EQ(c[0].j, -1);
  EXPECT_EQ(c[0].k, -1);
  EXPECT_EQ(c[1].k, 0);
  EXPECT_EQ(c[3].j, 0);
  EXPECT_EQ(c[9].skill, 2);
  EXPECT_TRUE(c[18].empty());
  for (const Action& a : c) EXPECT_EQ(a.start_z, 0.04);
}

TEST(Argmin, StrictLessKeepsFirst) {
  std::vector<CandidateResult> c(4);
  c[0].loss = 3.0;
  c[1].loss = 1.0;
  c[2].loss = 1.0;
  c[3].loss = 2.0;
  EXPECT_EQ(argmin_candidate(c), 1u);
}

TEST(Plan, InitialTargetGivesEmptyActions) {
  const auto w = tiny_world();
  const HeightMap target = rasterize_heightmap(w.body.x);
  const Plan p = greedy_plan(w.body, target, w.truth, w.scene, tiny_planner(2));
  ASSERT_EQ(p.steps.size(), 2u);
  EXPECT_EQ(p.initial_loss, 0.0);
  for (const PlanStep& s : p.steps) {
    EXPECT_TRUE(s.action.empty());
    EXPECT_EQ(s.loss, 0.0);
  }
  EXPECT_EQ(p.final_state.x, w.body.x);
}

TEST(Plan, DepthOneIsExhaustiveArgminAndRepeatable) {
  const auto w = tiny_world();
  // Target: the block after an off-centre shift.
  const DataPoint dp = testing::tiny_datapoint(w, tiny_shift(), "t", Vec2d(0.005, 0.0));
  const HeightMap target = dp.target.heightmap;
  const PlannerConfig cfg = tiny_planner(1);
  const Plan p = greedy_plan(w.body, target, w.truth, w.scene, cfg);
  ASSERT_EQ(p.steps.size(), 1u);
  // Independent re-evaluation of every candidate.
  const auto actions = candidate_actions(cfg, max_height(w.body.x));
  ASSERT_EQ(p.steps[0].candidates.size(), actions.size());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const ParticleSystem end = apply_action(w.body, actions[i], target, w.truth, w.scene, cfg);
    const double loss = shape_loss(end.x, target);
    EXPECT_EQ(loss, p.steps[0].candidates[i].loss) << "candidate " << i;
    if (loss < best) {
      best = loss;
      best_i = i;
    }
  }
  EXPECT_EQ(p.steps[0].loss, best);
  EXPECT_EQ(p.steps[0].action.skill, actions[best_i].skill);
  EXPECT_EQ(p.steps[0].action.j, actions[best_i].j);
  EXPECT_EQ(p.steps[0].action.k, actions[best_i].k);
  EXPECT_LT(p.steps[0].loss, p.initial_loss);

  const Plan again = greedy_plan(w.body, target, w.truth, w.scene, cfg);
  EXPECT_EQ(again.steps[0].loss, p.steps[0].loss);
  EXPECT_EQ(again.final_state.x, p.final_state.x);
}

TEST(Plan, LossTraceNonIncreasing) {
  const auto w = tiny_world();
  const DataPoint dp = testing::tiny_datapoint(w, tiny_poke(), "t", Vec2d(-0.004, 0.003));
  const Plan p = greedy_plan(w.body, dp.target.heightmap, w.truth, w.scene, tiny_planner(3));
  double prev = p.initial_loss;
  for (const PlanStep& s : p.steps) {
    EXPECT_LE(s.loss, prev);
    for (const CandidateResult& c : s.candidates) EXPECT_LE(s.loss, c.loss);
    prev = s.loss;
  }
}

TEST(Plan, FailingCandidateIsInfeasibleNotFatal) {
  auto w = tiny_world();
  const HeightMap target = rasterize_heightmap(w.body.x);
  // The body pokes through the domain floor, so every skill rollout fails.
  w.scene.sim.grid = GridSpec::centered(Vec3(0, 0, 0.075), 0.16, 32);
  const Plan p = greedy_plan(w.body, target, w.truth, w.scene, tiny_planner(1));
  ASSERT_EQ(p.steps.size(), 1u);
  const auto& c = p.steps[0].candidates;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    EXPECT_FALSE(c[i].feasible);
    EXPECT_TRUE(std::isinf(c[i].loss));
    EXPECT_NE(c[i].error.find("domain"), std::string::npos) << c[i].error;
  }
  EXPECT_TRUE(c.back().feasible);
  EXPECT_TRUE(p.steps[0].action.empty());
  EXPECT_EQ(p.final_state.x, w.body.x);
}

TEST(Plan, NegativeActionCountRejected) {
  const auto w = tiny_world();
  EXPECT_THROW(greedy_plan(w.body, rasterize_heightmap(w.body.x), w.truth, w.scene, tiny_planner(-1)),
               PreconditionError);
}

// --- loss landscape -------------------------------------------------------------

TEST(Landscape, CenteredAndSpansTheBox) {
  const auto w = tiny_world();
  const Dataset data{testing::tiny_datapoint(w, tiny_poke(), "poke")};
  ParamBox box = w.box;
  box.lo.E = 8e4;
  box.hi.E = 2e5;
  box.lo.nu = 0.25;
  box.hi.nu = 0.35;
  const Landscape L = landscape_sweep(0, 1, w.truth, data, LossKind::PrtCd, 3, w.scene, box);
  EXPECT_EQ(L.loss.rows(), 3);
  EXPECT_EQ(L.loss.cols(), 3);
  EXPECT_NEAR(L.loss.mean(), 0.0, 1e-12 * std::max(1.0, L.mean));
  EXPECT_EQ(L.values_a(0), box.lo.E);
  EXPECT_EQ(L.values_a(2), box.hi.E);
  EXPECT_EQ(L.values_b(1), 0.3);
  EXPECT_GT(L.loss.maxCoeff() - L.loss.minCoeff(), 0.0);
}

TEST(Landscape, InactiveFrictionGivesZeroSurface) {
  auto w = tiny_world();
  w.scene.table_height = -1.0;  // free fall, the tool parked far away
  DataPoint dp = testing::tiny_datapoint(w, tiny_poke(), "fall");
  for (auto& wp : dp.trajectory.waypoints) wp.pose.position = Vec3(0.05, 0.05, 0.09);
  const Landscape L = landscape_sweep(4, 5, w.truth, {dp}, LossKind::PrtEmd, 3, w.scene, w.box);
  EXPECT_EQ(L.loss.maxCoeff(), L.loss.minCoeff());
  EXPECT_NEAR(L.loss.maxCoeff(), 0.0, 1e-15 * std::max(1.0, L.mean));
}

TEST(Landscape, RejectsBadArguments) {
  const auto w = tiny_world();
  const Dataset data{testing::tiny_datapoint(w, tiny_poke(), "poke")};
  EXPECT_THROW(landscape_sweep(0, 0, w.truth, data, LossKind::PrtCd, 3, w.scene), PreconditionError);
  EXPECT_THROW(landscape_sweep(0, 1, w.truth, data, LossKind::PrtCd, 1, w.scene), PreconditionError);
}

}  // namespace
}  // namespace dpsi
