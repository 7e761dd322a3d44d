#pragma once

// MLS-MPM with APIC transfers, fixed-corotated elasticity, von Mises
// plasticity and kinematic SDF bodies with sticky/dynamic friction.
//
// One substep:
//   1. advance kinematic bodies
//   2. P2G: F_trial = (I + dt C) F, return map, Kirchhoff stress, scatter
//   3. grid: v = p / m + dt g, contact, boundary clamp
//   4. G2P: gather v and C, particle contact, x += dt v

#include "dpsi/constitutive.hpp"
#include "dpsi/contact.hpp"
#include "dpsi/core.hpp"
#include "dpsi/parallel.hpp"
#include "dpsi/trajectory.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace dpsi {

// ---------------------------------------------------------------------------
// Parameters

struct PhysicsParams {
  double E = 5e7;         // Pa
  double nu = 0.3;
  double rho = 1500.0;    // kg/m^3
  double sigma_y = 5e6;   // Pa
  double eta_t = 0.5;
  double eta_m = 0.5;

  static constexpr int kCount = 6;
  static constexpr std::array<const char*, kCount> kNames{"E", "nu", "rho", "sigma_y", "eta_t", "eta_m"};

  double& operator[](int i) {
    switch (i) {
      case 0: return E;
      case 1: return nu;
      case 2: return rho;
      case 3: return sigma_y;
      case 4: return eta_t;
      case 5: return eta_m;
    }
    throw PreconditionError("parameter index out of range");
  }
  double operator[](int i) const { return const_cast<PhysicsParams&>(*this)[i]; }

  LameParams lame() const { return lame_from_moduli(E, nu); }

  bool operator==(const PhysicsParams&) const = default;
};

/// Axis-aligned admissible region for the six parameters.
struct ParamBox {
  PhysicsParams lo{1e7, 0.01, 1000.0, 1e6, 0.01, 0.01};
  PhysicsParams hi{3e8, 0.48, 2000.0, 2e7, 2.0, 2.0};

  bool contains(const PhysicsParams& p) const {
    for (int i = 0; i < PhysicsParams::kCount; ++i)
      if (!(p[i] >= lo[i] && p[i] <= hi[i])) return false;
    return true;
  }
  PhysicsParams clamp(PhysicsParams p) const {
    for (int i = 0; i < PhysicsParams::kCount; ++i) p[i] = std::clamp(p[i], lo[i], hi[i]);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Particles and grid

struct ParticleSystem {
  Points x;
  Points v;
  std::vector<Mat3> C;
  std::vector<Mat3> F;
  double volume = 0.0;  // per particle, m^3

  std::size_t size() const { return x.size(); }
  double particle_mass(double rho) const { return rho * volume; }

  /// Particles at rest with identity deformation.
  static ParticleSystem at_rest(const Points& positions, double volume) {
    if (positions.empty()) throw PreconditionError("particle system needs at least one particle");
    if (!(volume > 0.0)) throw PreconditionError("particle volume must be positive");
    ParticleSystem p;
    p.x = positions;
    p.v.assign(positions.size(), Vec3::Zero());
    p.C.assign(positions.size(), Mat3::Zero());
    p.F.assign(positions.size(), Mat3::Identity());
    p.volume = volume;
    return p;
  }
};

/// Cubic background grid: `cells` cells per axis, cells+1 nodes per axis.
struct GridSpec {
  Vec3 origin = Vec3(-0.25, -0.25, -0.25);
  int cells = 64;
  double h = 0.5 / 64;

  int nodes() const { return cells + 1; }
  Vec3 upper() const { return origin + Vec3::Constant(cells * h); }

  /// Grid of the given cell count covering a cube of `size` centred at `center`.
  static GridSpec centered(const Vec3& center, double size, int cells) {
    return {center - Vec3::Constant(0.5 * size), cells, size / cells};
  }
};

/// Quadratic B-spline stencil of one particle.
struct Kernel {
  Vec3i base;
  Vec3 fx;                    // position in cell units relative to base
  std::array<Vec3, 3> w;      // w[a](d): weight of offset a along axis d
  std::array<Vec3, 3> dw;     // derivative of w[a](d) with respect to fx(d)

  double weight(int a, int b, int c) const { return w[a](0) * w[b](1) * w[c](2); }
  Vec3 offset(int a, int b, int c, double h) const { return (Vec3(a, b, c) - fx) * h; }
};

inline Kernel make_kernel(const Vec3& x, const GridSpec& g) {
  Kernel k;
  const Vec3 xi = (x - g.origin) / g.h;
  for (int d = 0; d < 3; ++d) {
    k.base(d) = static_cast<int>(std::floor(xi(d) - 0.5));
    const double f = xi(d) - k.base(d);
    k.fx(d) = f;
    k.w[0](d) = 0.5 * sqr(1.5 - f);
    k.w[1](d) = 0.75 - sqr(f - 1.0);
    k.w[2](d) = 0.5 * sqr(f - 0.5);
    k.dw[0](d) = f - 1.5;
    k.dw[1](d) = -2.0 * (f - 1.0);
    k.dw[2](d) = f - 0.5;
  }
  return k;
}

struct EulerianGrid {
  GridSpec spec;
  std::vector<double> mass;
  std::vector<Vec3> momentum;
  std::vector<Vec3> velocity_free;  // after gravity, before contact
  std::vector<Vec3> velocity;
  std::vector<int> active;          // nodes touched by the last scatter
  std::vector<unsigned char> touched;

  explicit EulerianGrid(const GridSpec& s) : spec(s) {
    const std::size_t n = static_cast<std::size_t>(s.nodes()) * s.nodes() * s.nodes();
    mass.assign(n, 0.0);
    momentum.assign(n, Vec3::Zero());
    velocity_free.assign(n, Vec3::Zero());
    velocity.assign(n, Vec3::Zero());
    touched.assign(n, 0);
  }

  int index(int i, int j, int k) const { return (i * spec.nodes() + j) * spec.nodes() + k; }
  Vec3i coords(int idx) const {
    const int n = spec.nodes();
    return {idx / (n * n), (idx / n) % n, idx % n};
  }
  Vec3 node_position(int idx) const { return spec.origin + coords(idx).cast<double>() * spec.h; }

  void reset() {
    for (int idx : active) {
      mass[idx] = 0.0;
      momentum[idx].setZero();
      velocity_free[idx].setZero();
      velocity[idx].setZero();
      touched[idx] = 0;
    }
    active.clear();
  }

  double total_mass() const {
    double m = 0.0;
    for (int idx : active) m += mass[idx];
    return m;
  }
  Vec3 total_momentum() const {
    Vec3 p = Vec3::Zero();
    for (int idx : active) p += momentum[idx];
    return p;
  }
};

// ---------------------------------------------------------------------------
// Configuration

struct SimConfig {
  GridSpec grid;
  double frame_dt = 0.01;
  int min_substeps = 100;
  double cfl = 0.5;             // c dt_sub < cfl h
  double gravity = 9.81;        // along -z
  double contact_band = 0.5;    // in cells
  int boundary_nodes = 2;       // clamped node layers at every face
  bool deterministic = true;
  int threads = 1;
};

/// Substeps per frame: at least min_substeps, more when c dt_sub >= cfl h
/// with c = sqrt(E / rho).
inline int required_substeps(const SimConfig& cfg, const PhysicsParams& p) {
  const double c = std::sqrt(p.E / p.rho);
  const int n_cfl = static_cast<int>(std::floor(cfg.frame_dt * c / (cfg.cfl * cfg.grid.h))) + 1;
  return std::max(cfg.min_substeps, n_cfl);
}

/// Per-run constants derived from the parameters.
struct Material {
  LameParams lame;
  double mass = 0.0;
  double volume = 0.0;
  double sigma_y = 0.0;
  double eta_t = 0.0;
  double eta_m = 0.0;

  static Material from(const PhysicsParams& p, double particle_volume) {
    if (!(p.sigma_y > 0.0)) throw DomainError("sigma_y must be > 0");
    if (!(p.rho > 0.0)) throw DomainError("rho must be > 0");
    return {p.lame(), p.rho * particle_volume, particle_volume, p.sigma_y, p.eta_t, p.eta_m};
  }
};

// ---------------------------------------------------------------------------
// Substep records (consumed by the adjoint)

struct P2GRecord {
  Kernel kernel;
  Mat3 F_trial;
  ReturnMapResult rm;
  Mat3 tau;
};

struct SubstepRecord {
  std::vector<P2GRecord> p2g;
  Points v_gathered;  // G2P velocity before particle contact
  Points x_before;
};

// ---------------------------------------------------------------------------
// Stages

namespace detail {

inline void check_in_domain(const Vec3& x, std::size_t i, const SimConfig& cfg) {
  const double margin = cfg.boundary_nodes * cfg.grid.h;
  const Vec3 lo = cfg.grid.origin + Vec3::Constant(margin);
  const Vec3 hi = cfg.grid.upper() - Vec3::Constant(margin);
  if (!x.allFinite() || (x.array() < lo.array()).any() || (x.array() > hi.array()).any())
    throw InstabilityError("particle " + std::to_string(i) + " left the simulation domain");
}

inline bool is_boundary_node(const Vec3i& c, const SimConfig& cfg) {
  const int b = cfg.boundary_nodes, n = cfg.grid.cells;
  return (c.array() < b).any() || (c.array() > n - b).any();
}

}  // namespace detail

/// Trial F update, return mapping, stress and APIC scatter. Writes the
/// projected elastic F into F_out.
inline void particle_to_grid(const ParticleSystem& p, const Material& mat, const SimConfig& cfg,
                             double dt, EulerianGrid& grid, std::vector<Mat3>& F_out,
                             std::vector<P2GRecord>* record = nullptr) {
  const std::size_t n = p.size();
  const double h = cfg.grid.h;
  const double inv_d = 4.0 / (h * h);
  grid.reset();
  F_out.resize(n);
  std::vector<P2GRecord> local;
  std::vector<P2GRecord>& rec = record ? *record : local;
  rec.resize(n);
  std::vector<Mat3> affine(n);

  parallel_chunks(n, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      detail::check_in_domain(p.x[i], i, cfg);
      P2GRecord& r = rec[i];
      r.kernel = make_kernel(p.x[i], cfg.grid);
      r.F_trial = (Mat3::Identity() + dt * p.C[i]) * p.F[i];
      const Svd3 svd = signed_svd(r.F_trial);
      if (!(svd.sigma(2) > 0.0))
        throw InstabilityError("particle " + std::to_string(i) + " inverted (det F <= 0)");
      r.rm = von_mises_return_map(r.F_trial, svd, mat.sigma_y, mat.lame);
      r.tau = fixed_corotated_stress(r.rm.F_elastic, r.rm.svd_elastic, mat.lame);
      F_out[i] = r.rm.F_elastic;
      affine[i] = -dt * mat.volume * inv_d * r.tau + mat.mass * p.C[i];
    }
  });

  auto contribute = [&](std::size_t i, auto&& add) {
    const Kernel& k = rec[i].kernel;
    const Vec3 mv = mat.mass * p.v[i];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) {
          const double w = k.weight(a, b, c);
          const int idx = grid.index(k.base(0) + a, k.base(1) + b, k.base(2) + c);
          add(idx, w * mat.mass, Vec3(w * (mv + affine[i] * k.offset(a, b, c, h))));
        }
  };

  if (cfg.deterministic || cfg.threads <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      contribute(i, [&](int idx, double m, const Vec3& mom) {
        if (!grid.touched[idx]) {
          grid.touched[idx] = 1;
          grid.active.push_back(idx);
        }
        grid.mass[idx] += m;
        grid.momentum[idx] += mom;
      });
    return;
  }
  // Fast mode: unordered floating-point accumulation across threads.
  parallel_chunks(n, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      contribute(i, [&](int idx, double m, const Vec3& mom) {
        std::atomic_ref<unsigned char>(grid.touched[idx]).store(1, std::memory_order_relaxed);
        std::atomic_ref<double>(grid.mass[idx]).fetch_add(m, std::memory_order_relaxed);
        for (int d = 0; d < 3; ++d)
          std::atomic_ref<double>(grid.momentum[idx](d)).fetch_add(mom(d), std::memory_order_relaxed);
      });
  });
  for (int idx = 0; idx < static_cast<int>(grid.touched.size()); ++idx)
    if (grid.touched[idx]) grid.active.push_back(idx);
}

/// Momentum to velocity, gravity, contact with every body, boundary clamp.
inline void grid_update(EulerianGrid& grid, const std::vector<RigidEffector>& bodies,
                        const Material& mat, const SimConfig& cfg, double dt) {
  const double band = cfg.contact_band * cfg.grid.h;
  parallel_chunks(grid.active.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t a = b; a < e; ++a) {
      const int idx = grid.active[a];
      if (!(grid.mass[idx] > 0.0)) continue;
      Vec3 v = grid.momentum[idx] / grid.mass[idx];
      v(2) -= cfg.gravity * dt;
      grid.velocity_free[idx] = v;
      const Vec3i c = grid.coords(idx);
      if (detail::is_boundary_node(c, cfg)) {
        grid.velocity[idx].setZero();
        continue;
      }
      const Vec3 xn = grid.node_position(idx);
      grid.velocity[idx] = collide<double>(v, xn, bodies, mat.eta_t, mat.eta_m, band);
    }
  });
}

/// APIC gather, particle contact, position update.
inline void grid_to_particle(const EulerianGrid& grid, ParticleSystem& p,
                             const std::vector<RigidEffector>& bodies, const Material& mat,
                             const SimConfig& cfg, double dt, SubstepRecord* record = nullptr) {
  const double h = cfg.grid.h;
  const double inv_d = 4.0 / (h * h);
  const double band = cfg.contact_band * h;
  const std::size_t n = p.size();
  if (record) {
    record->v_gathered.resize(n);
    record->x_before = p.x;
  }
  parallel_chunks(n, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Kernel k = make_kernel(p.x[i], cfg.grid);
      Vec3 v = Vec3::Zero();
      Mat3 C = Mat3::Zero();
      for (int a = 0; a < 3; ++a)
        for (int bb = 0; bb < 3; ++bb)
          for (int c = 0; c < 3; ++c) {
            const double w = k.weight(a, bb, c);
            const Vec3& vi = grid.velocity[grid.index(k.base(0) + a, k.base(1) + bb, k.base(2) + c)];
            v += w * vi;
            C += (w * inv_d) * vi * k.offset(a, bb, c, h).transpose();
          }
      if (record) record->v_gathered[i] = v;
      v = collide<double>(v, p.x[i], bodies, mat.eta_t, mat.eta_m, band);
      if (!v.allFinite() || !C.allFinite())
        throw InstabilityError("non-finite velocity at particle " + std::to_string(i));
      p.v[i] = v;
      p.C[i] = C;
      p.x[i] += dt * v;
    }
  });
}

/// One full substep. Bodies are advanced first at their current twist.
inline void substep(ParticleSystem& p, std::vector<RigidEffector>& bodies, const Material& mat,
                    const SimConfig& cfg, double dt, EulerianGrid& grid,
                    SubstepRecord* record = nullptr) {
  for (RigidEffector& b : bodies)
    if (!b.is_table) b.advance(dt);
  std::vector<Mat3> F_new;
  particle_to_grid(p, mat, cfg, dt, grid, F_new, record ? &record->p2g : nullptr);
  p.F.swap(F_new);
  grid_update(grid, bodies, mat, cfg, dt);
  grid_to_particle(grid, p, bodies, mat, cfg, dt, record);
}

// ---------------------------------------------------------------------------
// Frames and rollouts

struct Scene {
  SimConfig sim;
  EffectorShape effector = EffectorShape::Bullet;
  double table_height = 0.0;
};

/// Table first, then the effector placed at `pose`.
inline std::vector<RigidEffector> scene_bodies(const Scene& scene, const Pose& pose) {
  RigidEffector eff = make_effector(scene.effector);
  eff.position = pose.position;
  eff.orientation = pose.orientation;
  return {make_table(scene.table_height), eff};
}

inline constexpr std::size_t kEffectorIndex = 1;

/// Runs n_substeps substeps with the effector moving at a constant command.
inline void step(ParticleSystem& p, std::vector<RigidEffector>& bodies, const FrameCommand& cmd,
                 const Material& mat, const SimConfig& cfg, int n_substeps, EulerianGrid& grid) {
  if (n_substeps < 1) throw PreconditionError("n_substeps must be >= 1");
  RigidEffector& eff = bodies[kEffectorIndex];
  eff.velocity = cmd.velocity;
  eff.angular_velocity = cmd.angular_velocity;
  const double dt = cfg.frame_dt / n_substeps;
  for (int s = 0; s < n_substeps; ++s) substep(p, bodies, mat, cfg, dt, grid);
}

struct RolloutOptions {
  int n_substeps = 0;  // 0 selects required_substeps
  std::function<void(int frame, const ParticleSystem&)> on_frame;
  // Called before each frame with the bodies already carrying its command.
  std::function<void(int frame, const ParticleSystem&, const std::vector<RigidEffector>&)> on_frame_start;
};

struct RolloutResult {
  ParticleSystem final_state;
  int frames = 0;
  int n_substeps = 0;
};

/// Pose the effector holds at the start of frame k.
inline Pose frame_start_pose(const Trajectory& traj, std::size_t k) {
  return traj.waypoints[k == 0 ? 0 : k - 1].pose;
}

inline RolloutResult rollout(const ParticleSystem& initial, const Trajectory& traj,
                             const PhysicsParams& params, const Scene& scene,
                             const RolloutOptions& opt = {}) {
  RolloutResult out{initial, 0, 0};
  if (traj.empty()) return out;
  if (traj.form != TrajectoryForm::Sim || std::abs(traj.frame_dt - scene.sim.frame_dt) > 1e-12)
    throw PreconditionError("rollout needs a sim-form trajectory at the configured frame_dt");
  const Material mat = Material::from(params, initial.volume);
  out.n_substeps = opt.n_substeps > 0 ? opt.n_substeps : required_substeps(scene.sim, params);
  EulerianGrid grid(scene.sim.grid);
  std::vector<RigidEffector> bodies = scene_bodies(scene, traj.waypoints.front().pose);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Pose& to = traj.waypoints[k].pose;
    const FrameCommand cmd = command_between(frame_start_pose(traj, k), to, scene.sim.frame_dt);
    if (opt.on_frame_start) {
      bodies[kEffectorIndex].velocity = cmd.velocity;
      bodies[kEffectorIndex].angular_velocity = cmd.angular_velocity;
      opt.on_frame_start(static_cast<int>(k), out.final_state, bodies);
    }
    try {
      step(out.final_state, bodies, cmd, mat, scene.sim, out.n_substeps, grid);
    } catch (const InstabilityError& e) {
      throw InstabilityError(std::string(e.what()) + " in frame " + std::to_string(k));
    }
    // Remove integration drift of the kinematic pose.
    bodies[kEffectorIndex].position = to.position;
    bodies[kEffectorIndex].orientation = to.orientation;
    ++out.frames;
    if (opt.on_frame) opt.on_frame(static_cast<int>(k), out.final_state);
  }
  return out;
}

}  // namespace dpsi
