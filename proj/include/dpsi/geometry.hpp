#pragma once

// Heightmaps, particle sampling inside solids, voxel volumes and synthetic
// observations of a simulated body.

#include "dpsi/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <unordered_map>
#include <variant>
#include <vector>

namespace dpsi {

// ---------------------------------------------------------------------------
// Heightmap

/// 32 x 32 top-down max-height image over a 0.11 m square centred at origin.
/// values(iy * kCells + ix), metres.
struct HeightMap {
  static constexpr int kCells = 32;
  static constexpr double kExtent = 0.11;
  static constexpr double kCellSize = kExtent / kCells;

  Eigen::VectorXd values = Eigen::VectorXd::Zero(kCells * kCells);
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();

  double at(int ix, int iy) const { return values(iy * kCells + ix); }

  /// Cell of a point, or -1 when it falls outside the extent.
  int cell_of(const Vec3& p) const {
    const double lx = p(0) - (origin(0) - 0.5 * kExtent);
    const double ly = p(1) - (origin(1) - 0.5 * kExtent);
    const int ix = static_cast<int>(std::floor(lx / kCellSize));
    const int iy = static_cast<int>(std::floor(ly / kCellSize));
    if (ix < 0 || iy < 0 || ix >= kCells || iy >= kCells) return -1;
    return iy * kCells + ix;
  }
};

inline Eigen::Vector2d xy_centroid(const Points& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const Vec3& p : pts) c += p.head<2>();
  return pts.empty() ? c : Eigen::Vector2d(c / static_cast<double>(pts.size()));
}

/// Per-cell maximum z; empty cells read 0. `argmax` (optional) receives the
/// index of the point that set each cell (-1 for empty cells; the lowest
/// index wins ties, so the image itself does not depend on point order).
inline HeightMap rasterize_heightmap(const Points& pts, const Eigen::Vector2d& origin,
                                     std::vector<int>* argmax = nullptr) {
  HeightMap hm;
  hm.origin = origin;
  std::vector<int> arg(HeightMap::kCells * HeightMap::kCells, -1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const int c = hm.cell_of(pts[i]);
    if (c < 0) continue;
    if (arg[c] < 0 || pts[i](2) > hm.values(c)) {
      hm.values(c) = pts[i](2);
      arg[c] = static_cast<int>(i);
    }
  }
  if (argmax) *argmax = std::move(arg);
  return hm;
}

inline HeightMap rasterize_heightmap(const Points& pts) { return rasterize_heightmap(pts, xy_centroid(pts)); }

// ---------------------------------------------------------------------------
// Solids and particle filling

struct BoxSolid {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.025);
};

struct SphereSolid {
  Vec3 center = Vec3::Zero();
  double radius = 0.025;
};

/// Upright cylinder standing on z = base_z.
struct CylinderSolid {
  Vec3 base_center = Vec3::Zero();
  double radius = 0.025;
  double height = 0.05;
};

/// Boolean occupancy on a regular voxel lattice.
struct VoxelVolume {
  Vec3 origin = Vec3::Zero();  // corner of voxel (0,0,0)
  double voxel = 0.005;
  Vec3i dims = Vec3i::Zero();
  std::vector<unsigned char> occ;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims(1) + j) * dims(2) + k;
  }
  bool inside_dims(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims(0) && j < dims(1) && k < dims(2);
  }
  bool contains(const Vec3& p) const {
    const Vec3 q = (p - origin) / voxel;
    const int i = static_cast<int>(std::floor(q(0))), j = static_cast<int>(std::floor(q(1))),
              k = static_cast<int>(std::floor(q(2)));
    return inside_dims(i, j, k) && occ[index(i, j, k)];
  }
  std::size_t count() const { return static_cast<std::size_t>(std::count(occ.begin(), occ.end(), 1)); }
  double volume() const { return count() * voxel * voxel * voxel; }
  Vec3 voxel_center(int i, int j, int k) const { return origin + (Vec3(i, j, k) + Vec3::Constant(0.5)) * voxel; }
  Vec3 voxel_center(const Vec3i& c) const { return voxel_center(c(0), c(1), c(2)); }
  Vec3i coords(std::size_t id) const {
    const int k = static_cast<int>(id % dims(2));
    const int j = static_cast<int>((id / dims(2)) % dims(1));
    return {static_cast<int>(id / (static_cast<std::size_t>(dims(1)) * dims(2))), j, k};
  }

  /// Solid bounded by a surface point cloud (morphological closing). Voxels
  /// within `close_radius` of a point form a shell that seals gaps between
  /// samples; everything the exterior flood cannot reach is solid; the solid
  /// is then eroded back by the same radius. Voxels below `floor_z` block the
  /// flood, so a cloud resting on a table may be open at the bottom.
  /// Throws DegenerateError("open surface") when nothing survives the erosion.
  static VoxelVolume from_surface(const Points& cloud, double voxel, double floor_z = -1e300,
                                  double close_radius = 0.0) {
    if (cloud.empty()) throw PreconditionError("empty surface cloud");
    if (close_radius <= 0.0) close_radius = voxel;
    Vec3 lo = cloud.front(), hi = cloud.front();
    for (const Vec3& p : cloud) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    VoxelVolume v;
    v.voxel = voxel;
    const int reach = static_cast<int>(std::ceil(close_radius / voxel));
    const int pad = reach + 2;
    // Lattice distances equal to the radius must compare equal in both passes.
    const double r_cmp = close_radius * (1.0 + 1e-9);
    v.origin = lo - Vec3::Constant(pad * voxel);
    for (int d = 0; d < 3; ++d) v.dims(d) = static_cast<int>(std::ceil((hi(d) - lo(d)) / voxel)) + 2 * pad + 1;
    const std::size_t n = static_cast<std::size_t>(v.dims.prod());
    std::vector<unsigned char> shell(n, 0);
    for (const Vec3& p : cloud) {
      const Vec3 q = (p - v.origin) / voxel;
      const int ci = static_cast<int>(std::floor(q(0))), cj = static_cast<int>(std::floor(q(1))),
                ck = static_cast<int>(std::floor(q(2)));
      for (int a = -reach; a <= reach; ++a)
        for (int b = -reach; b <= reach; ++b)
          for (int c = -reach; c <= reach; ++c) {
            const int i = ci + a, j = cj + b, k = ck + c;
            if (!v.inside_dims(i, j, k)) continue;
            if ((v.voxel_center(i, j, k) - p).norm() <= r_cmp) shell[v.index(i, j, k)] = 1;
          }
    }
    const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    auto below = [&](int i, int j, int k) { return v.voxel_center(i, j, k)(2) < floor_z; };
    // Exterior flood fill from the top corner of the padding.
    std::vector<int> depth(n, -1);  // 0: exterior, 1: eroded
    std::deque<Vec3i> queue{Vec3i(0, 0, v.dims(2) - 1)};
    depth[v.index(0, 0, v.dims(2) - 1)] = 0;
    while (!queue.empty()) {
      const Vec3i c = queue.front();
      queue.pop_front();
      for (const auto& d : nb) {
        const int i = c(0) + d[0], j = c(1) + d[1], k = c(2) + d[2];
        if (!v.inside_dims(i, j, k)) continue;
        const std::size_t id = v.index(i, j, k);
        if (depth[id] >= 0 || shell[id] || below(i, j, k)) continue;
        depth[id] = 0;
        queue.push_back(Vec3i(i, j, k));
      }
    }
    // Euclidean erosion by close_radius from every exterior voxel that
    // touches the closed solid.
    for (std::size_t id = 0; id < n; ++id) {
      if (depth[id] != 0) continue;
      const Vec3i c = v.coords(id);
      bool front = false;
      for (const auto& d : nb) {
        const int i = c(0) + d[0], j = c(1) + d[1], k = c(2) + d[2];
        if (v.inside_dims(i, j, k) && depth[v.index(i, j, k)] < 0) front = true;
      }
      if (!front) continue;
      const Vec3 cc = v.voxel_center(c(0), c(1), c(2));
      for (int a = -reach; a <= reach; ++a)
        for (int b = -reach; b <= reach; ++b)
          for (int e = -reach; e <= reach; ++e) {
            const int i = c(0) + a, j = c(1) + b, k = c(2) + e;
            if (!v.inside_dims(i, j, k)) continue;
            const std::size_t q = v.index(i, j, k);
            if (depth[q] < 0 && (v.voxel_center(i, j, k) - cc).norm() <= r_cmp) depth[q] = 1;
          }
    }
    v.occ.assign(n, 0);
    for (std::size_t id = 0; id < n; ++id)
      if (depth[id] < 0 && v.voxel_center(v.coords(id))(2) >= floor_z) v.occ[id] = 1;
    if (v.count() == 0) throw DegenerateError("open surface: the cloud encloses no volume");
    return v;
  }

  /// Occupancy of the voxels that contain at least one point.
  static VoxelVolume from_points(const Points& pts, double voxel) {
    if (pts.empty()) throw PreconditionError("empty point set");
    Vec3 lo = pts.front(), hi = pts.front();
    for (const Vec3& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    VoxelVolume v;
    v.voxel = voxel;
    v.origin = lo - Vec3::Constant(voxel);
    for (int d = 0; d < 3; ++d) v.dims(d) = static_cast<int>(std::ceil((hi(d) - lo(d)) / voxel)) + 3;
    v.occ.assign(static_cast<std::size_t>(v.dims.prod()), 0);
    for (const Vec3& p : pts) {
      const Vec3 q = (p - v.origin) / voxel;
      v.occ[v.index(static_cast<int>(q(0)), static_cast<int>(q(1)), static_cast<int>(q(2)))] = 1;
    }
    return v;
  }
};

using Solid = std::variant<BoxSolid, SphereSolid, CylinderSolid, VoxelVolume>;

namespace detail {
inline bool solid_contains(const BoxSolid& s, const Vec3& p) {
  return ((p - s.center).cwiseAbs().array() <= s.half.array()).all();
}
inline bool solid_contains(const SphereSolid& s, const Vec3& p) { return (p - s.center).norm() <= s.radius; }
inline bool solid_contains(const CylinderSolid& s, const Vec3& p) {
  const Vec3 d = p - s.base_center;
  return d.head<2>().norm() <= s.radius && d(2) >= 0.0 && d(2) <= s.height;
}
inline bool solid_contains(const VoxelVolume& s, const Vec3& p) { return s.contains(p); }

inline std::pair<Vec3, Vec3> solid_bounds(const BoxSolid& s) { return {s.center - s.half, s.center + s.half}; }
inline std::pair<Vec3, Vec3> solid_bounds(const SphereSolid& s) {
  return {s.center - Vec3::Constant(s.radius), s.center + Vec3::Constant(s.radius)};
}
inline std::pair<Vec3, Vec3> solid_bounds(const CylinderSolid& s) {
  return {s.base_center - Vec3(s.radius, s.radius, 0.0), s.base_center + Vec3(s.radius, s.radius, s.height)};
}
inline std::pair<Vec3, Vec3> solid_bounds(const VoxelVolume& s) {
  return {s.origin, s.origin + s.dims.cast<double>() * s.voxel};
}

inline double solid_volume(const BoxSolid& s) { return 8.0 * s.half.prod(); }
inline double solid_volume(const SphereSolid& s) { return 4.0 / 3.0 * M_PI * std::pow(s.radius, 3); }
inline double solid_volume(const CylinderSolid& s) { return M_PI * s.radius * s.radius * s.height; }
inline double solid_volume(const VoxelVolume& s) { return s.volume(); }
}  // namespace detail

inline bool contains(const Solid& s, const Vec3& p) {
  return std::visit([&](const auto& x) { return detail::solid_contains(x, p); }, s);
}
inline double volume(const Solid& s) {
  return std::visit([](const auto& x) { return detail::solid_volume(x); }, s);
}

/// Jittered lattice of spacing density^(-1/3), one point per lattice cell
/// of the solid's bounding box, keeping the points inside. Jitter is uniform in
/// +-jitter * spacing per axis.
inline Points fill_particles(const Solid& s, double density, std::uint64_t seed = 0, double jitter = 0.25) {
  if (!(density > 0.0)) throw PreconditionError("fill density must be positive");
  const double sp = std::cbrt(1.0 / density);
  const auto [lo, hi] = std::visit([](const auto& x) { return detail::solid_bounds(x); }, s);
  const Vec3 center = 0.5 * (lo + hi);
  Vec3i n;
  for (int d = 0; d < 3; ++d) n(d) = std::max(1, static_cast<int>(std::round((hi(d) - lo(d)) / sp)));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-jitter * sp, jitter * sp);
  Points out;
  for (int i = 0; i < n(0); ++i)
    for (int j = 0; j < n(1); ++j)
      for (int k = 0; k < n(2); ++k) {
        Vec3 p = center + (Vec3(i, j, k) - 0.5 * (n.cast<double>() - Vec3::Ones())) * sp;
        p += Vec3(u(rng), u(rng), u(rng));
        if (contains(s, p)) out.push_back(p);
      }
  return out;
}

namespace detail {
struct CellHash {
  std::size_t operator()(const Vec3i& v) const {
    return (static_cast<std::size_t>(v(0)) * 73856093u) ^ (static_cast<std::size_t>(v(1)) * 19349663u) ^
           (static_cast<std::size_t>(v(2)) * 83492791u);
  }
};
struct CellEq {
  bool operator()(const Vec3i& a, const Vec3i& b) const { return a == b; }
};
inline Vec3i cell_key(const Vec3& p, double size) {
  return Vec3i(static_cast<int>(std::floor(p(0) / size)), static_cast<int>(std::floor(p(1) / size)),
               static_cast<int>(std::floor(p(2) / size)));
}
}  // namespace detail

/// Greedy thinning: keeps points in input order unless a kept point lies
/// closer than `radius`. No two output points are closer than radius.
inline Points downsample(const Points& pts, double radius) {
  std::unordered_map<Vec3i, std::vector<int>, detail::CellHash, detail::CellEq> cells;
  Points out;
  auto key = [&](const Vec3& p) {
    return Vec3i(static_cast<int>(std::floor(p(0) / radius)), static_cast<int>(std::floor(p(1) / radius)),
                 static_cast<int>(std::floor(p(2) / radius)));
  };
  for (const Vec3& p : pts) {
    const Vec3i k = key(p);
    bool clash = false;
    for (int a = -1; a <= 1 && !clash; ++a)
      for (int b = -1; b <= 1 && !clash; ++b)
        for (int c = -1; c <= 1 && !clash; ++c) {
          const auto it = cells.find(Vec3i(k(0) + a, k(1) + b, k(2) + c));
          if (it == cells.end()) continue;
          for (int idx : it->second)
            if ((out[idx] - p).norm() < radius) {
              clash = true;
              break;
            }
        }
    if (clash) continue;
    cells[k].push_back(static_cast<int>(out.size()));
    out.push_back(p);
  }
  return out;
}

/// Particles missing a neighbour in at least one of the six axis directions.
/// A neighbour in direction d lies within 1.75 spacings and more than 0.4
/// spacings along d, which tolerates a jittered or mildly deformed lattice.
inline std::vector<int> surface_indices(const Points& pts, double spacing) {
  const double reach = 1.75 * spacing, along = 0.4 * spacing;
  std::unordered_map<Vec3i, std::vector<int>, detail::CellHash, detail::CellEq> cells;
  for (std::size_t i = 0; i < pts.size(); ++i) cells[detail::cell_key(pts[i], reach)].push_back(static_cast<int>(i));
  std::vector<int> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3i k = detail::cell_key(pts[i], reach);
    unsigned seen = 0;  // bit per direction
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c) {
          const auto it = cells.find(Vec3i(k(0) + a, k(1) + b, k(2) + c));
          if (it == cells.end()) continue;
          for (int j : it->second) {
            const Vec3 d = pts[j] - pts[i];
            if (d.squaredNorm() > reach * reach) continue;
            for (int ax = 0; ax < 3; ++ax) {
              if (d(ax) > along) seen |= 1u << (2 * ax);
              if (d(ax) < -along) seen |= 1u << (2 * ax + 1);
            }
          }
        }
    if (seen != 0x3fu) out.push_back(static_cast<int>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic observation

struct ObservationConfig {
  double noise_sigma = 0.001;       // per-point Gaussian, m
  double offset_max = 0.003;        // rigid offset, uniform per axis, m
  double bottom_threshold = 0.003;  // points below this height are unseen, m
  bool project_bottom = true;       // close the surface with a copy at the table
  double table_height = 0.0;
  double downsample_radius = 0.005;
  double surface_spacing = 0.0;     // 0: cube root of the particle volume
};

struct SyntheticCloud {
  Points cloud;
  Vec3 offset = Vec3::Zero();
};

/// Emulates a fused camera scan of a simulated body.
inline SyntheticCloud synthesize_observation(const Points& particles, double particle_volume,
                                             const ObservationConfig& cfg, std::mt19937_64& rng) {
  const double spacing = cfg.surface_spacing > 0.0 ? cfg.surface_spacing : std::cbrt(particle_volume);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-cfg.offset_max, cfg.offset_max);
  SyntheticCloud out;
  out.offset = Vec3(shift(rng), shift(rng), shift(rng));
  if (cfg.offset_max <= 0.0) out.offset.setZero();
  Points pts;
  for (int i : surface_indices(particles, spacing)) {
    Vec3 p = particles[i];
    if (cfg.noise_sigma > 0.0) p += cfg.noise_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    p += out.offset;
    if (cfg.project_bottom && p(2) < cfg.table_height + cfg.bottom_threshold) continue;
    pts.push_back(p);
  }
  if (cfg.project_bottom) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) pts.push_back(Vec3(pts[i](0), pts[i](1), cfg.table_height));
  }
  out.cloud = cfg.downsample_radius > 0.0 ? downsample(pts, cfg.downsample_radius) : pts;
  return out;
}

/// Particle set re-filled from a surface cloud, with the density lowered in
/// 5 % steps until it has at most max_count particles.
inline Points reconstruct_filled(const Points& cloud, double density, std::size_t max_count,
                                 double table_height = 0.0, std::uint64_t seed = 0,
                                 double close_radius = 0.01) {
  const VoxelVolume vol = VoxelVolume::from_surface(cloud, 0.0025, table_height, close_radius);
  for (double d = density; d > 1e-3 * density; d *= 0.95) {
    Points pts = fill_particles(vol, d, seed);
    if (pts.size() <= max_count && !pts.empty()) return pts;
  }
  throw NumericalError("could not fill the reconstructed volume below the particle budget");
}

}  // namespace dpsi
