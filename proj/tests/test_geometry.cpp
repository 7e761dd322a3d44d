#include "dpsi/geometry.hpp"
#include "dpsi/sdf.hpp"
#include "dpsi/trajectory.hpp"

#include <gtest/gtest.h>

#include <random>

namespace dpsi {
namespace {

TEST(Sdf, HalfSpace) {
  const auto s = sdf_query(HalfSpace{0.0}, Vec3(0.0, 0.0, 0.1));
  EXPECT_DOUBLE_EQ(s.distance, 0.1);
  EXPECT_EQ(s.normal, Vec3(0, 0, 1));
}

TEST(Sdf, CylinderSide) {
  const auto s = sdf_query(Cylinder{1.0, 2.0}, Vec3(2.0, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(s.distance, 1.0);
  EXPECT_LT((s.normal - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(Sdf, BoxFaceCentres) {
  const Box b{Vec3(0.01, 0.01, 0.05)};
  for (int d = 0; d < 3; ++d)
    for (double sgn : {-1.0, 1.0}) {
      Vec3 p = Vec3::Zero();
      p(d) = sgn * b.half_extent(d);
      const auto s = sdf_query(b, p);
      EXPECT_NEAR(s.distance, 0.0, 1e-15);
      Vec3 n = Vec3::Zero();
      n(d) = sgn;
      EXPECT_EQ(s.normal, n);
    }
}

TEST(Sdf, AnalyticFormulasAndUnitNormals) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  const Box box{Vec3(0.02, 0.03, 0.04)};
  const Capsule cap{0.01, 0.025};
  for (int t = 0; t < 2000; ++t) {
    const Vec3 p(u(rng), u(rng), u(rng));
    // Box: standard formula.
    const Vec3 q = p.cwiseAbs() - box.half_extent;
    const double box_ref = q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    const auto bs = sdf_query(box, p);
    EXPECT_NEAR(bs.distance, box_ref, 1e-9);
    EXPECT_NEAR(bs.normal.norm(), 1.0, 1e-10);
    // Capsule: distance to the core segment minus the radius.
    const Vec3 c(0, 0, std::clamp(p(2), -cap.half_length, cap.half_length));
    const auto cs = sdf_query(cap, p);
    EXPECT_NEAR(cs.distance, (p - c).norm() - cap.radius, 1e-9);
    EXPECT_NEAR(cs.normal.norm(), 1.0, 1e-10);
    // Normal is the gradient of distance (away from creases).
    const double h = 1e-7;
    Vec3 g;
    for (int d = 0; d < 3; ++d) {
      Vec3 e = Vec3::Zero();
      e(d) = h;
      g(d) = (sdf_query(cap, Vec3(p + e)).distance - sdf_query(cap, Vec3(p - e)).distance) / (2 * h);
    }
    EXPECT_LT((g - cs.normal).norm(), 1e-6);
  }
}

TEST(Effector, ToolTipSitsAtBodyOrigin) {
  for (EffectorShape k : {EffectorShape::Rectangle, EffectorShape::Cylinder, EffectorShape::Bullet}) {
    RigidEffector e = make_effector(k);
    e.position = Vec3(0.1, -0.2, 0.3);
    EXPECT_NEAR(e.query(e.position).distance, 0.0, 1e-12);
    EXPECT_GT(e.query(Vec3(e.position - Vec3(0, 0, 0.001))).distance, 0.0);
    EXPECT_LT(e.query(Vec3(e.position + Vec3(0, 0, 0.005))).distance, 0.0);
  }
}

TEST(Effector, RotationMovesShapeAndVelocityField) {
  RigidEffector e = make_effector(EffectorShape::Rectangle);
  e.angular_velocity = Vec3(0, 0, M_PI);
  for (int i = 0; i < 100; ++i) e.advance(0.01);
  // Half a turn about +z: the box maps onto itself, rotation is (-1,-1,1).
  EXPECT_NEAR(std::abs(e.orientation.w()), 0.0, 1e-9);
  EXPECT_LT((e.velocity_at(Vec3(Vec3(0.01, 0, 0))) - Vec3(0, M_PI * 0.01, 0)).norm(), 1e-12);
}

TEST(Heightmap, SinglePointAtCentre) {
  const HeightMap hm = rasterize_heightmap({Vec3(0.0, 0.0, 0.02)}, Eigen::Vector2d::Zero());
  int nonzero = 0;
  for (int c = 0; c < 1024; ++c)
    if (hm.values(c) != 0.0) ++nonzero;
  EXPECT_EQ(nonzero, 1);
  EXPECT_EQ(hm.at(16, 16), 0.02);
}

TEST(Heightmap, FlatSlab) {
  Points slab;
  for (double x = -0.0549; x < 0.055; x += 0.001)
    for (double y = -0.0549; y < 0.055; y += 0.001) slab.push_back(Vec3(x, y, 0.01));
  const HeightMap hm = rasterize_heightmap(slab, Eigen::Vector2d::Zero());
  for (int c = 0; c < 1024; ++c) EXPECT_EQ(hm.values(c), 0.01);
}

TEST(Heightmap, MaxRuleAndPermutationInvariance) {
  const HeightMap hm =
      rasterize_heightmap({Vec3(0.001, 0.001, 0.01), Vec3(0.0012, 0.0011, 0.03)}, Eigen::Vector2d::Zero());
  EXPECT_EQ(hm.at(16, 16), 0.03);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.06, 0.06), z(0.0, 0.05);
  Points pts(500);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), z(rng));
  const HeightMap a = rasterize_heightmap(pts, Eigen::Vector2d(0.001, -0.002));
  std::shuffle(pts.begin(), pts.end(), rng);
  const HeightMap b = rasterize_heightmap(pts, Eigen::Vector2d(0.001, -0.002));
  EXPECT_EQ(a.values, b.values);
}

TEST(Fill, CubeCountAtFourMillionPerCubicMetre) {
  const Points pts = fill_particles(BoxSolid{Vec3(0, 0, 0.025), Vec3::Constant(0.025)}, 4e6, 1);
  EXPECT_NEAR(static_cast<double>(pts.size()), 500.0, 50.0);
}

TEST(Fill, SphereContainmentAndCentroid) {
  const SphereSolid s{Vec3(0.01, 0.02, 0.03), 0.03};
  const double density = 2e6;
  const Points pts = fill_particles(s, density, 3);
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) {
    EXPECT_LE((p - s.center).norm(), s.radius);
    c += p;
  }
  c /= static_cast<double>(pts.size());
  const double h = std::cbrt(1.0 / density);
  EXPECT_LT((c - s.center).cwiseAbs().maxCoeff(), h);
  EXPECT_NEAR(pts.size(), density * volume(Solid{s}), 0.1 * density * volume(Solid{s}));
}

TEST(Fill, CylinderCentroidAndLinearScaling) {
  const CylinderSolid c{Vec3::Zero(), 0.03, 0.04};
  const Points lo = fill_particles(c, 2e6, 4);
  const Points hi = fill_particles(c, 8e6, 4);
  Vec3 m = Vec3::Zero();
  for (const Vec3& p : hi) m += p;
  m /= static_cast<double>(hi.size());
  EXPECT_LT((m - Vec3(0, 0, 0.02)).cwiseAbs().maxCoeff(), std::cbrt(1.0 / 8e6));
  EXPECT_NEAR(static_cast<double>(hi.size()) / lo.size(), 4.0, 0.4);
}

TEST(Fill, RejectsBadDensity) { EXPECT_THROW(fill_particles(SphereSolid{}, 0.0), PreconditionError); }

TEST(Voxel, OpenSurfaceIsRejected) {
  // A square patch encloses nothing.
  Points patch;
  for (double x = 0; x < 0.05; x += 0.002)
    for (double y = 0; y < 0.05; y += 0.002) patch.push_back(Vec3(x, y, 0.02));
  EXPECT_THROW(VoxelVolume::from_surface(patch, 0.004), DegenerateError);
}

TEST(Voxel, ClosedSphereSurfaceRefills) {
  Points shell;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 4000; ++i) {
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    shell.push_back(Vec3(0, 0, 0.05) + 0.03 * d);
  }
  const VoxelVolume v = VoxelVolume::from_surface(shell, 0.003);
  const double ref = 4.0 / 3.0 * M_PI * std::pow(0.03, 3);
  EXPECT_NEAR(v.volume(), ref, 0.2 * ref);
  EXPECT_TRUE(v.contains(Vec3(0, 0, 0.05)));
}

TEST(Observation, NoiseFreeIsSurfaceSubset) {
  const Points body = fill_particles(BoxSolid{Vec3(0, 0, 0.025), Vec3::Constant(0.025)}, 4e6, 1);
  ObservationConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.offset_max = 0.0;
  cfg.project_bottom = false;
  cfg.downsample_radius = 0.0;
  std::mt19937_64 rng(1);
  const SyntheticCloud obs = synthesize_observation(body, 1.0 / 4e6, cfg, rng);
  EXPECT_FALSE(obs.cloud.empty());
  EXPECT_LT(obs.cloud.size(), body.size());
  for (const Vec3& p : obs.cloud) EXPECT_NE(std::find(body.begin(), body.end(), p), body.end());
}

TEST(Observation, OffsetShiftsCentroid) {
  const Points body = fill_particles(BoxSolid{Vec3(0, 0, 0.025), Vec3::Constant(0.025)}, 4e6, 1);
  ObservationConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.project_bottom = false;
  cfg.downsample_radius = 0.0;
  cfg.offset_max = 0.003;
  std::mt19937_64 rng(9);
  const SyntheticCloud obs = synthesize_observation(body, 1.0 / 4e6, cfg, rng);
  cfg.offset_max = 0.0;
  std::mt19937_64 rng2(9);
  const SyntheticCloud ref = synthesize_observation(body, 1.0 / 4e6, cfg, rng2);
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
  for (const Vec3& p : obs.cloud) a += p;
  for (const Vec3& p : ref.cloud) b += p;
  a /= obs.cloud.size();
  b /= ref.cloud.size();
  EXPECT_LT((a - b - obs.offset).norm(), 1e-12);
  EXPECT_LE(obs.offset.cwiseAbs().maxCoeff(), 0.003);
}

TEST(Observation, DownsampleSpacing) {
  Points slab;
  for (double x = 0; x < 0.05; x += 0.001)
    for (double y = 0; y < 0.05; y += 0.001) slab.push_back(Vec3(x, y, 0.01));
  const Points d = downsample(slab, 0.005);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) ASSERT_GE((d[i] - d[j]).norm(), 0.005);
  EXPECT_GT(d.size(), 50u);
}

TEST(Observation, ReconstructionStaysUnderBudget) {
  const Points body = fill_particles(BoxSolid{Vec3(0, 0, 0.025), Vec3::Constant(0.025)}, 4e6, 1);
  std::mt19937_64 rng(3);
  const SyntheticCloud obs = synthesize_observation(body, 1.0 / 4e6, ObservationConfig{}, rng);
  const VoxelVolume vol = VoxelVolume::from_surface(obs.cloud, 0.0025, 0.0, 0.01);
  EXPECT_NEAR(vol.volume(), 1.25e-4, 0.25 * 1.25e-4);
  const Points filled = reconstruct_filled(obs.cloud, 4e6, body.size());
  EXPECT_LE(filled.size(), body.size());
  EXPECT_GT(filled.size(), body.size() / 2);
}

// --- trajectories ------------------------------------------------------------

Trajectory two_point(double T, const Vec3& a, const Vec3& b) {
  Trajectory t;
  t.waypoints = {{0.0, {a, Quat::Identity()}}, {T, {b, Quat::Identity()}}};
  return t;
}

TEST(Resample, SingleSegmentCount) {
  const Trajectory s = resample_trajectory(two_point(0.86, Vec3::Zero(), Vec3(0, 0, -0.015)), 0.01);
  EXPECT_EQ(s.size(), 87u);
}

TEST(Resample, StationaryPair) {
  const Vec3 p(0.1, 0.2, 0.3);
  const Trajectory s = resample_trajectory(two_point(0.2, p, p), 0.01);
  for (const auto& w : s.waypoints) EXPECT_EQ(w.pose.position, p);
}

TEST(Resample, ConstantVelocityDivision) {
  const Trajectory s = resample_trajectory(two_point(0.3, Vec3::Zero(), Vec3(0.03, 0, 0)), 0.01);
  ASSERT_EQ(s.size(), 31u);
  for (std::size_t k = 1; k < s.size(); ++k)
    EXPECT_NEAR((s.waypoints[k].pose.position - s.waypoints[k - 1].pose.position).norm(), 0.001, 1e-15);
}

TEST(Resample, ZeroDurationSegmentRejected) {
  EXPECT_THROW(resample_trajectory(two_point(0.0, Vec3::Zero(), Vec3::Ones()), 0.01), PreconditionError);
}

TEST(Resample, SegmentEndpointsExact) {
  const Pose start{Vec3(0.001, 0.002, 0.05), Quat::Identity()};
  for (const MotionPreset& m : motions::all()) {
    const Trajectory real = build_motion(m, start);
    const Trajectory sim = resample_trajectory(real, 0.01);
    for (const Waypoint& w : real.waypoints) {
      bool found = false;
      for (const Waypoint& s : sim.waypoints)
        if (s.pose.position == w.pose.position && s.pose.orientation.coeffs() == w.pose.orientation.coeffs())
          found = true;
      EXPECT_TRUE(found) << m.name;
    }
  }
}

TEST(Motions, TableCounts) {
  const Pose start{Vec3(0, 0, 0.05), Quat::Identity()};
  for (const MotionPreset& m : motions::all()) {
    const Trajectory real = build_motion(m, start);
    EXPECT_NEAR(real.waypoints.back().t, m.duration, 1e-9) << m.name;
    EXPECT_EQ(resample_trajectory(real, 0.01).size(), static_cast<std::size_t>(m.sim_waypoints)) << m.name;
  }
  EXPECT_EQ(motions::flattening().sim_waypoints, 378);
  EXPECT_EQ(motions::triple_poking().sim_waypoints, 460);
  EXPECT_EQ(motions::poking_180_rotating().sim_waypoints, 625);
}

TEST(Motions, RotationReachesHalfTurn) {
  const Trajectory sim =
      resample_trajectory(build_motion(motions::poking_180_rotating(), Pose{Vec3::Zero(), Quat::Identity()}), 0.01);
  const Quat q = sim.waypoints.back().pose.orientation;
  EXPECT_NEAR(std::abs(q.w()), 0.0, 1e-12);
  // Every frame command turns about +z at a bounded rate.
  for (std::size_t k = 1; k < sim.size(); ++k) {
    const FrameCommand c = command_between(sim.waypoints[k - 1].pose, sim.waypoints[k].pose, 0.01);
    EXPECT_GE(c.angular_velocity(2), -1e-9);
    EXPECT_LT(c.angular_velocity.norm(), 2.0);
  }
}

}  // namespace
}  // namespace dpsi
