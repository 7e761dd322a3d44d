#pragma once

// Point-set distances between a simulated particle set and an observation.
// Sums are not averaged over the sets. Gradients are with respect to the
// simulated points and treat the nearest-neighbour / matching structure as
// fixed (the exact derivative wherever that structure is unique).

#include "dpsi/core.hpp"
#include "dpsi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace dpsi {

enum class LossKind { PcdCd, PrtCd, PcdEmd, PrtEmd, Heightmap };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::PcdCd: return "pcd-cd";
    case LossKind::PrtCd: return "prt-cd";
    case LossKind::PcdEmd: return "pcd-emd";
    case LossKind::PrtEmd: return "prt-emd";
    case LossKind::Heightmap: return "heightmap";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  for (LossKind k : {LossKind::PcdCd, LossKind::PrtCd, LossKind::PcdEmd, LossKind::PrtEmd, LossKind::Heightmap})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown loss '" + s + "'");
}

inline bool uses_surface_cloud(LossKind k) { return k == LossKind::PcdCd || k == LossKind::PcdEmd; }

struct LossValue {
  double value = 0.0;
  LossKind kind = LossKind::PrtEmd;
};

// ---------------------------------------------------------------------------
// Chamfer

namespace detail {
inline void require_nonempty(const Points& a, const Points& b) {
  if (a.empty() || b.empty()) throw PreconditionError("point sets must be non-empty");
}

/// Index of the nearest point of `set` to q (first one on ties).
inline std::size_t nearest(const Points& set, const Vec3& q) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < set.size(); ++j) {
    const double d = (set[j] - q).squaredNorm();
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return best;
}

inline Vec3 unit_or_zero(const Vec3& d) {
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : Vec3::Zero();
}
}  // namespace detail

/// Sum over a of the distance to the nearest b, plus the same from b to a.
inline double chamfer(const Points& a, const Points& b) {
  detail::require_nonempty(a, b);
  // Separate directional sums keep chamfer(a, b) == chamfer(b, a) exactly.
  double sa = 0.0, sb = 0.0;
  for (const Vec3& x : a) sa += (b[detail::nearest(b, x)] - x).norm();
  for (const Vec3& y : b) sb += (a[detail::nearest(a, y)] - y).norm();
  return sa + sb;
}

/// Chamfer distance and its gradient with respect to the points of `sim`.
inline double chamfer_grad(const Points& sim, const Points& target, Points& grad) {
  detail::require_nonempty(sim, target);
  grad.assign(sim.size(), Vec3::Zero());
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    const Vec3 d = sim[i] - target[detail::nearest(target, sim[i])];
    sa += d.norm();
    grad[i] += detail::unit_or_zero(d);
  }
  for (const Vec3& y : target) {
    const std::size_t j = detail::nearest(sim, y);
    const Vec3 d = sim[j] - y;
    sb += d.norm();
    grad[j] += detail::unit_or_zero(d);
  }
  return sa + sb;
}

// ---------------------------------------------------------------------------
// EMD

/// pairs[i] is the index in the larger set matched to point i of the smaller.
struct Matching {
  std::vector<int> pairs;
  double cost = 0.0;
  bool exact = true;
  double gap_bound = 0.0;  // cost - optimum <= gap_bound (0 when exact)
};

namespace detail {

/// Rectangular min-cost assignment (n rows <= m columns), O(n^2 m) shortest
/// augmenting paths with potentials.
inline std::vector<int> hungarian(const std::vector<double>& cost, int n, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      const double* row = &cost[static_cast<std::size_t>(i0 - 1) * m];
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> rows(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) rows[p[j] - 1] = j - 1;
  return rows;
}

/// Forward auction with epsilon scaling on a square problem (maximises
/// -cost). The final assignment is within n * eps of optimal.
inline std::vector<int> auction(const std::vector<double>& cost, int n, int m, double eps_final) {
  double cmax = 0.0;
  for (double c : cost) cmax = std::max(cmax, c);
  std::vector<double> price(m, 0.0);
  std::vector<int> owner(m, -1), assigned(n, -1);
  for (double eps = std::max(cmax / 4.0, eps_final);; eps = std::max(eps / 5.0, eps_final)) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(assigned.begin(), assigned.end(), -1);
    std::vector<int> queue(n);
    std::iota(queue.begin(), queue.end(), 0);
    while (!queue.empty()) {
      const int i = queue.back();
      queue.pop_back();
      const double* row = &cost[static_cast<std::size_t>(i) * m];
      int best = -1;
      double b1 = -std::numeric_limits<double>::infinity(), b2 = b1;
      for (int j = 0; j < m; ++j) {
        const double val = -row[j] - price[j];
        if (val > b1) {
          b2 = b1;
          b1 = val;
          best = j;
        } else if (val > b2) {
          b2 = val;
        }
      }
      const double bid = (m == 1 ? eps : b1 - b2) + eps;
      price[best] += bid;
      if (owner[best] >= 0) {
        assigned[owner[best]] = -1;
        queue.push_back(owner[best]);
      }
      owner[best] = i;
      assigned[i] = best;
    }
    if (eps <= eps_final) break;
  }
  return assigned;
}

}  // namespace detail

/// Largest set size solved exactly.
inline constexpr std::size_t kExactEmdLimit = 512;

/// Minimal total distance of an injective map from a into b (|a| <= |b|).
/// Exact up to kExactEmdLimit points in a; approximate (auction) above it.
inline Matching emd(const Points& a, const Points& b) {
  detail::require_nonempty(a, b);
  if (a.size() > b.size()) throw PreconditionError("emd needs |a| <= |b|");
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) cost[static_cast<std::size_t>(i) * m + j] = (a[i] - b[j]).norm();
  Matching out;
  if (a.size() <= kExactEmdLimit) {
    out.pairs = detail::hungarian(cost, n, m);
  } else {
    // Dummy zero-cost rows make the problem square, where forward auction
    // with epsilon scaling is eps-optimal per assigned row.
    const double eps = 1e-7;
    std::vector<double> square(static_cast<std::size_t>(m) * m, 0.0);
    std::copy(cost.begin(), cost.end(), square.begin());
    std::vector<int> rows = detail::auction(square, m, m, eps);
    rows.resize(n);
    out.pairs = std::move(rows);
    out.exact = false;
    out.gap_bound = m * eps;
  }
  for (int i = 0; i < n; ++i) out.cost += cost[static_cast<std::size_t>(i) * m + out.pairs[i]];
  return out;
}

/// EMD between an observation and the simulated points, with the gradient
/// with respect to `sim`. The smaller set is matched into the larger.
inline double emd_grad(const Points& sim, const Points& target, Points& grad) {
  grad.assign(sim.size(), Vec3::Zero());
  if (target.size() <= sim.size()) {
    const Matching mt = emd(target, sim);
    for (std::size_t i = 0; i < target.size(); ++i)
      grad[mt.pairs[i]] += detail::unit_or_zero(sim[mt.pairs[i]] - target[i]);
    return mt.cost;
  }
  const Matching mt = emd(sim, target);
  for (std::size_t i = 0; i < sim.size(); ++i) grad[i] += detail::unit_or_zero(sim[i] - target[mt.pairs[i]]);
  return mt.cost;
}

inline double emd_distance(const Points& sim, const Points& target) {
  return target.size() <= sim.size() ? emd(target, sim).cost : emd(sim, target).cost;
}

// ---------------------------------------------------------------------------
// Heightmap

/// Sum over cells of |a - b|, in millimetres.
inline double heightmap_distance(const HeightMap& a, const HeightMap& b) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.values.size(); ++c) s += std::abs(a.values(c) - b.values(c)) * 1000.0;
  return s;
}

/// Heightmap distance of `sim` rasterized at the target's origin, with its
/// gradient: only the highest particle of each cell receives (sign, in mm/m).
inline double heightmap_grad(const Points& sim, const HeightMap& target, Points& grad) {
  grad.assign(sim.size(), Vec3::Zero());
  std::vector<int> argmax;
  const HeightMap hm = rasterize_heightmap(sim, target.origin, &argmax);
  for (int c = 0; c < HeightMap::kCells * HeightMap::kCells; ++c) {
    const double diff = hm.values(c) - target.values(c);
    if (argmax[c] >= 0 && diff != 0.0) grad[argmax[c]](2) += 1000.0 * (diff > 0.0 ? 1.0 : -1.0);
  }
  return heightmap_distance(hm, target);
}

// ---------------------------------------------------------------------------
// Observations and dispatch

/// What a datapoint provides as the end-state observation.
struct Observation {
  Points surface_cloud;  // noisy, downsampled surface points
  Points filled;         // particles re-filled from the cloud
  HeightMap heightmap;   // rasterized from the surface cloud
};

inline double loss_value(LossKind k, const Points& sim, const Observation& obs) {
  switch (k) {
    case LossKind::PcdCd: return chamfer(sim, obs.surface_cloud);
    case LossKind::PrtCd: return chamfer(sim, obs.filled);
    case LossKind::PcdEmd: return emd_distance(sim, obs.surface_cloud);
    case LossKind::PrtEmd: return emd_distance(sim, obs.filled);
    case LossKind::Heightmap: return heightmap_distance(rasterize_heightmap(sim, obs.heightmap.origin), obs.heightmap);
  }
  return 0.0;
}

inline double loss_with_grad(LossKind k, const Points& sim, const Observation& obs, Points& grad) {
  switch (k) {
    case LossKind::PcdCd: return chamfer_grad(sim, obs.surface_cloud, grad);
    case LossKind::PrtCd: return chamfer_grad(sim, obs.filled, grad);
    case LossKind::PcdEmd: return emd_grad(sim, obs.surface_cloud, grad);
    case LossKind::PrtEmd: return emd_grad(sim, obs.filled, grad);
    case LossKind::Heightmap: return heightmap_grad(sim, obs.heightmap, grad);
  }
  return 0.0;
}

/// A loss whose nearest-neighbour pairs, EMD matching or heightmap argmax
/// cells are fixed at `at`. It agrees with the true loss at `at` and is smooth
/// around it, which makes it the finite-difference reference for gradients.
inline std::function<double(const Points&, Points&)> frozen_loss(LossKind k, const Points& at,
                                                                 const Observation& obs) {
  struct Pair {
    int sim;
    Vec3 target;
  };
  std::vector<Pair> pairs;
  if (k == LossKind::Heightmap) {
    std::vector<int> argmax;
    const HeightMap hm = rasterize_heightmap(at, obs.heightmap.origin, &argmax);
    std::vector<std::pair<int, double>> cells;  // (particle, target height)
    double fixed = 0.0;
    for (int c = 0; c < HeightMap::kCells * HeightMap::kCells; ++c) {
      if (argmax[c] >= 0)
        cells.push_back({argmax[c], obs.heightmap.values(c)});
      else
        fixed += std::abs(hm.values(c) - obs.heightmap.values(c)) * 1000.0;
    }
    return [cells, fixed](const Points& x, Points& grad) {
      grad.assign(x.size(), Vec3::Zero());
      double s = fixed;
      for (const auto& [i, t] : cells) {
        const double d = x[i](2) - t;
        s += std::abs(d) * 1000.0;
        if (d != 0.0) grad[i](2) += d > 0.0 ? 1000.0 : -1000.0;
      }
      return s;
    };
  }
  const Points& target = uses_surface_cloud(k) ? obs.surface_cloud : obs.filled;
  detail::require_nonempty(at, target);
  if (k == LossKind::PcdCd || k == LossKind::PrtCd) {
    for (std::size_t i = 0; i < at.size(); ++i)
      pairs.push_back({static_cast<int>(i), target[detail::nearest(target, at[i])]});
    for (const Vec3& y : target) pairs.push_back({static_cast<int>(detail::nearest(at, y)), y});
  } else if (target.size() <= at.size()) {
    const Matching mt = emd(target, at);
    for (std::size_t i = 0; i < target.size(); ++i) pairs.push_back({mt.pairs[i], target[i]});
  } else {
    const Matching mt = emd(at, target);
    for (std::size_t i = 0; i < at.size(); ++i) pairs.push_back({static_cast<int>(i), target[mt.pairs[i]]});
  }
  return [pairs](const Points& x, Points& grad) {
    grad.assign(x.size(), Vec3::Zero());
    double s = 0.0;
    for (const Pair& p : pairs) {
      const Vec3 d = x[p.sim] - p.target;
      s += d.norm();
      grad[p.sim] += detail::unit_or_zero(d);
    }
    return s;
  };
}

}  // namespace dpsi
