#pragma once

// Reverse-mode gradients of a rollout with respect to the six physics
// parameters.
//
// The forward pass keeps one checkpoint per frame. The backward pass walks the
// frames in reverse, re-simulates the substeps of a frame from its checkpoint
// (keeping the pre-substep particle states), then reverses each substep after
// recomputing its P2G record and grid. Branches taken in the forward pass
// (plastic or elastic, stick or slip, contact band) are frozen.

#include "dpsi/autodiff.hpp"
#include "dpsi/dataset.hpp"
#include "dpsi/losses.hpp"
#include "dpsi/mpm.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace dpsi {

struct ParamGradient {
  std::array<double, PhysicsParams::kCount> d{};

  double& operator[](int i) { return d.at(i); }
  double operator[](int i) const { return d.at(i); }
  bool all_finite() const {
    for (double x : d)
      if (!std::isfinite(x)) return false;
    return true;
  }
  ParamGradient& operator+=(const ParamGradient& o) {
    for (int i = 0; i < PhysicsParams::kCount; ++i) d[i] += o.d[i];
    return *this;
  }
  ParamGradient& operator*=(double s) {
    for (double& x : d) x *= s;
    return *this;
  }
};

struct RolloutTape {
  Scene scene;
  PhysicsParams params;
  int n_substeps = 0;
  std::vector<ParticleSystem> checkpoints;                 // state at each frame start
  std::vector<std::vector<RigidEffector>> frame_bodies;    // bodies at each frame start, twist set
  ParticleSystem final_state;

  std::size_t frames() const { return checkpoints.size(); }
  std::size_t substeps() const { return frames() * static_cast<std::size_t>(n_substeps); }
};

/// Forward rollout that keeps what the backward pass needs. n_substeps = 0
/// selects required_substeps for the parameters.
inline RolloutTape record(const ParticleSystem& initial, const Trajectory& traj, const PhysicsParams& params,
                          const Scene& scene, int n_substeps = 0) {
  RolloutTape tape;
  tape.scene = scene;
  tape.params = params;
  RolloutOptions opt;
  opt.n_substeps = n_substeps;
  opt.on_frame_start = [&](int, const ParticleSystem& p, const std::vector<RigidEffector>& bodies) {
    tape.checkpoints.push_back(p);
    tape.frame_bodies.push_back(bodies);
  };
  RolloutResult r = rollout(initial, traj, params, scene, opt);
  tape.n_substeps = r.n_substeps;
  tape.final_state = std::move(r.final_state);
  return tape;
}

/// Re-runs the tape forward from its first checkpoint.
inline ParticleSystem replay(const RolloutTape& tape) {
  if (tape.frames() == 0) return tape.final_state;
  const Material mat = Material::from(tape.params, tape.checkpoints.front().volume);
  const SimConfig& cfg = tape.scene.sim;
  const double dt = cfg.frame_dt / tape.n_substeps;
  EulerianGrid grid(cfg.grid);
  ParticleSystem p = tape.checkpoints.front();
  for (std::size_t k = 0; k < tape.frames(); ++k) {
    std::vector<RigidEffector> bodies = tape.frame_bodies[k];
    for (int s = 0; s < tape.n_substeps; ++s) substep(p, bodies, mat, cfg, dt, grid);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Local adjoints

struct CollideVjp {
  Vec3 v_bar = Vec3::Zero();
  Vec3 x_bar = Vec3::Zero();
  double eta_t_bar = 0.0;
  double eta_m_bar = 0.0;
};

/// Adjoint of collide() with respect to v, x and both friction coefficients.
inline CollideVjp collide_vjp(const Vec3& v, const Vec3& x, const std::vector<RigidEffector>& bodies,
                              double eta_t, double eta_m, double band, const Vec3& out_bar) {
  CollideVjp r;
  if (!near_any(x, bodies, band)) {
    r.v_bar = out_bar;
    return r;
  }
  using D = Dual<8>;
  V3<D> vd, xd;
  for (int i = 0; i < 3; ++i) {
    vd(i) = seed<8>(v(i), i);
    xd(i) = seed<8>(x(i), 3 + i);
  }
  const V3<D> out = collide<D>(vd, xd, bodies, seed<8>(eta_t, 6), seed<8>(eta_m, 7), band);
  Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
  for (int i = 0; i < 3; ++i)
    if (out(i).derivatives().size() == 8) g += out_bar(i) * out(i).derivatives();
  r.v_bar = g.segment<3>(0);
  r.x_bar = g.segment<3>(3);
  r.eta_t_bar = g(6);
  r.eta_m_bar = g(7);
  return r;
}

/// Gradient of the stencil weight w(a, b, c) with respect to the particle position.
inline Vec3 weight_gradient(const Kernel& k, int a, int b, int c, double h) {
  return Vec3(k.dw[a](0) * k.w[b](1) * k.w[c](2), k.w[a](0) * k.dw[b](1) * k.w[c](2),
              k.w[a](0) * k.w[b](1) * k.dw[c](2)) /
         h;
}

/// Adjoint of a particle state (same layout as ParticleSystem).
struct StateAdjoint {
  Points x, v;
  std::vector<Mat3> C, F;

  explicit StateAdjoint(std::size_t n = 0)
      : x(n, Vec3::Zero()), v(n, Vec3::Zero()), C(n, Mat3::Zero()), F(n, Mat3::Zero()) {}

  bool all_finite() const {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!x[i].allFinite() || !v[i].allFinite() || !C[i].allFinite() || !F[i].allFinite()) return false;
    return true;
  }
};

/// Accumulated adjoints of the per-run material constants.
struct MaterialAdjoint {
  double mu = 0.0, lambda = 0.0, mass = 0.0, sigma_y = 0.0, eta_t = 0.0, eta_m = 0.0;
};

namespace detail {

struct NodeAdjoint {
  std::vector<Vec3> v;       // grid velocity (after contact)
  std::vector<Vec3> P;       // momentum
  std::vector<double> m;     // mass
  std::vector<Vec2d> eta;    // per-node friction contributions

  explicit NodeAdjoint(std::size_t n) : v(n, Vec3::Zero()), P(n, Vec3::Zero()), m(n, 0.0), eta(n, Vec2d::Zero()) {}

  void clear(const std::vector<int>& active) {
    for (int idx : active) {
      v[idx].setZero();
      P[idx].setZero();
      m[idx] = 0.0;
      eta[idx].setZero();
    }
  }
};

struct ParticleBar {
  double mu = 0.0, lambda = 0.0, mass = 0.0, sigma_y = 0.0, eta_t = 0.0, eta_m = 0.0;
};

}  // namespace detail

/// Reverses one substep. `pre` is the particle state before the substep and
/// `bodies` the bodies after their advance. On entry `adj` holds the adjoint
/// of the post-substep state; on exit, that of `pre`.
inline void reverse_substep(const ParticleSystem& pre, const std::vector<RigidEffector>& bodies,
                            const Material& mat, const SimConfig& cfg, double dt, EulerianGrid& grid,
                            detail::NodeAdjoint& node, StateAdjoint& adj, MaterialAdjoint& bar) {
  const std::size_t n = pre.size();
  const double h = cfg.grid.h;
  const double inv_d = 4.0 / (h * h);
  const double band = cfg.contact_band * h;

  // Recompute the forward quantities of this substep.
  std::vector<P2GRecord> rec;
  std::vector<Mat3> F_new;
  particle_to_grid(pre, mat, cfg, dt, grid, F_new, &rec);
  grid_update(grid, bodies, mat, cfg, dt);
  node.clear(grid.active);

  std::vector<detail::ParticleBar> pbar(n);
  std::vector<Vec3> vg_bar(n);

  // G2P, per particle.
  parallel_chunks(n, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Kernel& k = rec[i].kernel;
      Vec3 vg = Vec3::Zero();
      for (int a = 0; a < 3; ++a)
        for (int bb = 0; bb < 3; ++bb)
          for (int c = 0; c < 3; ++c)
            vg += k.weight(a, bb, c) * grid.velocity[grid.index(k.base(0) + a, k.base(1) + bb, k.base(2) + c)];
      const Vec3 out_bar = adj.v[i] + dt * adj.x[i];
      const CollideVjp cv = collide_vjp(vg, pre.x[i], bodies, mat.eta_t, mat.eta_m, band, out_bar);
      pbar[i].eta_t += cv.eta_t_bar;
      pbar[i].eta_m += cv.eta_m_bar;
      vg_bar[i] = cv.v_bar;
      Vec3 xb = adj.x[i] + cv.x_bar;
      const Mat3& Cb = adj.C[i];
      for (int a = 0; a < 3; ++a)
        for (int bb = 0; bb < 3; ++bb)
          for (int c = 0; c < 3; ++c) {
            const double w = k.weight(a, bb, c);
            const Vec3& vi = grid.velocity[grid.index(k.base(0) + a, k.base(1) + bb, k.base(2) + c)];
            const Vec3 dpos = k.offset(a, bb, c, h);
            xb += (cv.v_bar.dot(vi) + inv_d * vi.dot(Cb * dpos)) * weight_gradient(k, a, bb, c, h);
            xb -= (w * inv_d) * (Cb.transpose() * vi);
          }
      adj.x[i] = xb;
    }
  });
  // Scatter to nodes in particle order.
  for (std::size_t i = 0; i < n; ++i) {
    const Kernel& k = rec[i].kernel;
    for (int a = 0; a < 3; ++a)
      for (int bb = 0; bb < 3; ++bb)
        for (int c = 0; c < 3; ++c) {
          const double w = k.weight(a, bb, c);
          const int idx = grid.index(k.base(0) + a, k.base(1) + bb, k.base(2) + c);
          node.v[idx] += w * vg_bar[i] + (w * inv_d) * (adj.C[i] * k.offset(a, bb, c, h));
        }
  }

  // Grid update, per node.
  parallel_chunks(grid.active.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t a = b; a < e; ++a) {
      const int idx = grid.active[a];
      const double m = grid.mass[idx];
      if (!(m > 0.0)) continue;
      if (detail::is_boundary_node(grid.coords(idx), cfg)) continue;
      const CollideVjp cv = collide_vjp(grid.velocity_free[idx], grid.node_position(idx), bodies, mat.eta_t,
                                        mat.eta_m, band, node.v[idx]);
      node.eta[idx] = Vec2d(cv.eta_t_bar, cv.eta_m_bar);
      node.P[idx] = cv.v_bar / m;
      node.m[idx] = -cv.v_bar.dot(grid.momentum[idx]) / (m * m);
    }
  });
  for (int idx : grid.active) {
    bar.eta_t += node.eta[idx](0);
    bar.eta_m += node.eta[idx](1);
  }

  // P2G and the constitutive chain, per particle (gather form).
  parallel_chunks(n, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const P2GRecord& r = rec[i];
      const Kernel& k = r.kernel;
      const Mat3 A = -dt * mat.volume * inv_d * r.tau + mat.mass * pre.C[i];
      const Vec3 mv = mat.mass * pre.v[i];
      Vec3 xb = Vec3::Zero(), vb = Vec3::Zero();
      Mat3 Ab = Mat3::Zero();
      double mb = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int bb = 0; bb < 3; ++bb)
          for (int c = 0; c < 3; ++c) {
            const double w = k.weight(a, bb, c);
            const int idx = grid.index(k.base(0) + a, k.base(1) + bb, k.base(2) + c);
            const Vec3 dpos = k.offset(a, bb, c, h);
            const Vec3 gw = weight_gradient(k, a, bb, c, h);
            const Vec3& Pb = node.P[idx];
            const double mbi = node.m[idx];
            mb += w * mbi + w * Pb.dot(pre.v[i]);
            vb += (w * mat.mass) * Pb;
            Ab += w * Pb * dpos.transpose();
            xb += (mat.mass * mbi + Pb.dot(mv + A * dpos)) * gw - w * (A.transpose() * Pb);
          }
      const Mat3 tau_bar = -dt * mat.volume * inv_d * Ab;
      Mat3 Cb = mat.mass * Ab;
      mb += Ab.cwiseProduct(pre.C[i]).sum();

      const StressVjp sv = fixed_corotated_stress_vjp(r.rm.F_elastic, r.rm.svd_elastic, mat.lame, tau_bar);
      const ReturnMapVjp rv = von_mises_return_map_vjp(r.rm, mat.sigma_y, mat.lame, sv.F_bar + adj.F[i]);
      const Mat3 G = Mat3::Identity() + dt * pre.C[i];
      Cb += dt * rv.F_trial_bar * pre.F[i].transpose();

      adj.x[i] += xb;
      adj.v[i] = vb;
      adj.C[i] = Cb;
      adj.F[i] = G.transpose() * rv.F_trial_bar;
      pbar[i].mass += mb;
      pbar[i].mu += sv.mu_bar + rv.mu_bar;
      pbar[i].lambda += sv.lambda_bar;
      pbar[i].sigma_y += rv.sigma_y_bar;
    }
  });
  for (const detail::ParticleBar& pb : pbar) {
    bar.mu += pb.mu;
    bar.lambda += pb.lambda;
    bar.mass += pb.mass;
    bar.sigma_y += pb.sigma_y;
    bar.eta_t += pb.eta_t;
    bar.eta_m += pb.eta_m;
  }
}

/// Chain rule from the material constants to the six parameters.
inline ParamGradient param_gradient(const MaterialAdjoint& bar, const PhysicsParams& p, double particle_volume) {
  ParamGradient g;
  const auto [E_bar, nu_bar] = lame_vjp(p.E, p.nu, bar.mu, bar.lambda);
  g[0] = E_bar;
  g[1] = nu_bar;
  g[2] = bar.mass * particle_volume;
  g[3] = bar.sigma_y;
  g[4] = bar.eta_t;
  g[5] = bar.eta_m;
  return g;
}

// ---------------------------------------------------------------------------
// Backward pass

struct BackwardResult {
  double loss = 0.0;
  ParamGradient grad;
};

/// Loss of final positions; writes d loss / d x into grad.
using PositionLoss = std::function<double(const Points& x, Points& grad)>;

/// Gradient of loss(final positions) with respect to the parameters.
inline BackwardResult backward(const RolloutTape& tape, const PositionLoss& loss) {
  BackwardResult out;
  Points gx;
  out.loss = loss(tape.final_state.x, gx);
  if (tape.frames() == 0) return out;
  if (gx.size() != tape.final_state.size()) throw PreconditionError("loss gradient has the wrong size");

  const SimConfig& cfg = tape.scene.sim;
  const Material mat = Material::from(tape.params, tape.final_state.volume);
  const double dt = cfg.frame_dt / tape.n_substeps;
  const std::size_t n = tape.final_state.size();
  EulerianGrid grid(cfg.grid);
  detail::NodeAdjoint node(grid.mass.size());
  StateAdjoint adj(n);
  adj.x = gx;
  MaterialAdjoint bar;

  std::vector<ParticleSystem> states(tape.n_substeps);
  std::vector<std::vector<RigidEffector>> sub_bodies(tape.n_substeps);
  for (std::size_t k = tape.frames(); k-- > 0;) {
    // Re-simulate the frame, keeping every pre-substep state.
    ParticleSystem p = tape.checkpoints[k];
    std::vector<RigidEffector> bodies = tape.frame_bodies[k];
    for (int s = 0; s < tape.n_substeps; ++s) {
      for (RigidEffector& b : bodies)
        if (!b.is_table) b.advance(dt);
      states[s] = p;
      sub_bodies[s] = bodies;
      std::vector<Mat3> F_new;
      particle_to_grid(p, mat, cfg, dt, grid, F_new);
      p.F.swap(F_new);
      grid_update(grid, bodies, mat, cfg, dt);
      grid_to_particle(grid, p, bodies, mat, cfg, dt);
    }
    for (int s = tape.n_substeps; s-- > 0;) {
      reverse_substep(states[s], sub_bodies[s], mat, cfg, dt, grid, node, adj, bar);
      if (!adj.all_finite() || !std::isfinite(bar.mu + bar.lambda + bar.mass + bar.sigma_y + bar.eta_t + bar.eta_m))
        throw NumericalError("non-finite adjoint at substep " +
                             std::to_string(k * static_cast<std::size_t>(tape.n_substeps) + s));
    }
  }
  out.grad = param_gradient(bar, tape.params, tape.final_state.volume);
  if (!out.grad.all_finite()) throw NumericalError("non-finite parameter gradient");
  return out;
}

inline BackwardResult backward(const RolloutTape& tape, LossKind kind, const Observation& target) {
  return backward(tape, [&](const Points& x, Points& g) { return loss_with_grad(kind, x, target, g); });
}

/// Loss and gradient for one datapoint.
inline BackwardResult datapoint_gradient(const DataPoint& dp, const PhysicsParams& params, const Scene& base,
                                         LossKind kind, int n_substeps = 0) {
  const RolloutTape tape = record(dp.initial, dp.trajectory, params, scene_for(base, dp), n_substeps);
  return backward(tape, kind, dp.target);
}

// ---------------------------------------------------------------------------
// Loss landscape

/// Mean loss over a dataset by forward rollouts.
inline double dataset_loss(const Dataset& data, const PhysicsParams& params, const Scene& base, LossKind kind) {
  if (data.empty()) throw PreconditionError("empty dataset");
  double s = 0.0;
  for (const DataPoint& dp : data) {
    const RolloutResult r = rollout(dp.initial, dp.trajectory, params, scene_for(base, dp));
    s += loss_value(kind, r.final_state.x, dp.target);
  }
  return s / static_cast<double>(data.size());
}

struct Landscape {
  int param_a = 0, param_b = 1;
  Eigen::VectorXd values_a, values_b;
  Eigen::MatrixXd loss;  // loss(i, j) at (values_a(i), values_b(j)), mean removed
  double mean = 0.0;
};

/// Grid of `intervals` values per parameter spanning its box, losses
/// centred to zero mean.
inline Landscape landscape_sweep(int param_a, int param_b, const PhysicsParams& others, const Dataset& data,
                                 LossKind kind, int intervals, const Scene& base, const ParamBox& box = {}) {
  if (intervals < 2) throw PreconditionError("landscape needs at least 2 intervals");
  if (param_a == param_b || param_a < 0 || param_b < 0 || param_a >= PhysicsParams::kCount ||
      param_b >= PhysicsParams::kCount)
    throw PreconditionError("landscape needs two distinct parameters");
  Landscape L;
  L.param_a = param_a;
  L.param_b = param_b;
  L.values_a = Eigen::VectorXd::LinSpaced(intervals, box.lo[param_a], box.hi[param_a]);
  L.values_b = Eigen::VectorXd::LinSpaced(intervals, box.lo[param_b], box.hi[param_b]);
  L.loss.resize(intervals, intervals);
  for (int i = 0; i < intervals; ++i)
    for (int j = 0; j < intervals; ++j) {
      PhysicsParams p = others;
      p[param_a] = L.values_a(i);
      p[param_b] = L.values_b(j);
      L.loss(i, j) = dataset_loss(data, p, base, kind);
    }
  L.mean = L.loss.mean();
  L.loss.array() -= L.mean;
  return L;
}

}  // namespace dpsi
