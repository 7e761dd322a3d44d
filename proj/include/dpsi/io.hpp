#pragma once

// File formats: point sets (binary PLY, CSV), heightmaps (CSV in mm, 16-bit
// PGM), trajectories (CSV), plus small filesystem helpers.

#include "dpsi/core.hpp"
#include "dpsi/geometry.hpp"
#include "dpsi/trajectory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dpsi::io {

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& p, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f << std::setprecision(17);
  return f;
}

inline std::ifstream open_in(const fs::path& p, bool binary = false) {
  std::ifstream f(p, binary ? std::ios::binary : std::ios::in);
  if (!f) throw IoError("cannot read '" + p.string() + "'");
  return f;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f = open_in(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Creates `dir`, refusing to reuse one that already has content.
inline void prepare_output_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw IoError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir))
      throw IoError("output directory '" + dir.string() + "' is not empty; refusing to overwrite");
  }
  fs::create_directories(dir);
}

// ---------------------------------------------------------------------------
// Point sets

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

/// Binary little-endian PLY with double x, y, z.
inline void write_ply(const fs::path& p, const Points& pts) {
  std::ofstream f = open_out(p, true);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << pts.size()
    << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& v : pts) f.write(reinterpret_cast<const char*>(v.data()), 3 * sizeof(double));
  if (!f) throw IoError("failed writing '" + p.string() + "'");
}

inline Points read_ply(const fs::path& p) {
  std::ifstream f = open_in(p, true);
  std::string line;
  std::size_t n = 0;
  bool header_ok = false;
  std::vector<std::string> props;
  std::getline(f, line);
  if (line != "ply") throw IoError("'" + p.string() + "' is not a PLY file");
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw IoError("'" + p.string() + "': only binary_little_endian PLY is supported");
    } else if (word == "element") {
      std::string what;
      ls >> what >> n;
      if (what != "vertex") throw IoError("'" + p.string() + "': unexpected element '" + what + "'");
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "double") throw IoError("'" + p.string() + "': only double properties are supported");
      props.push_back(name);
    } else if (word == "end_header") {
      header_ok = true;
      break;
    }
  }
  if (!header_ok || props != std::vector<std::string>{"x", "y", "z"})
    throw IoError("'" + p.string() + "': expected a vertex element with double x, y, z");
  Points pts(n);
  for (Vec3& v : pts) f.read(reinterpret_cast<char*>(v.data()), 3 * sizeof(double));
  if (!f) throw IoError("'" + p.string() + "': truncated vertex data");
  return pts;
}

inline void write_points_csv(const fs::path& p, const Points& pts) {
  std::ofstream f = open_out(p);
  f << "x,y,z\n";
  for (const Vec3& v : pts) f << v(0) << ',' << v(1) << ',' << v(2) << '\n';
}

namespace detail {
inline std::vector<double> split_numbers(const std::string& line, const fs::path& p, std::size_t lineno) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw IoError("'" + p.string() + "' line " + std::to_string(lineno) + ": bad number '" + cell + "'");
    }
  }
  return out;
}
}  // namespace detail

inline Points read_points_csv(const fs::path& p) {
  std::ifstream f = open_in(p);
  std::string line;
  std::getline(f, line);  // header
  Points pts;
  for (std::size_t ln = 2; std::getline(f, line); ++ln) {
    if (line.empty()) continue;
    const auto v = detail::split_numbers(line, p, ln);
    if (v.size() != 3) throw IoError("'" + p.string() + "' line " + std::to_string(ln) + ": expected x,y,z");
    pts.emplace_back(v[0], v[1], v[2]);
  }
  return pts;
}

inline Points read_points(const fs::path& p) { return p.extension() == ".csv" ? read_points_csv(p) : read_ply(p); }
inline void write_points(const fs::path& p, const Points& pts) {
  if (p.extension() == ".csv")
    write_points_csv(p, pts);
  else
    write_ply(p, pts);
}

// ---------------------------------------------------------------------------
// Heightmaps

/// 32 rows (y) of 32 comma-separated heights (x) in millimetres. The origin
/// goes in a leading comment line.
inline void write_heightmap_csv(const fs::path& p, const HeightMap& hm) {
  std::ofstream f = open_out(p);
  f << "# origin_m " << hm.origin(0) << ' ' << hm.origin(1) << '\n';
  for (int iy = 0; iy < HeightMap::kCells; ++iy)
    for (int ix = 0; ix < HeightMap::kCells; ++ix)
      f << hm.at(ix, iy) * 1000.0 << (ix + 1 < HeightMap::kCells ? ',' : '\n');
}

inline HeightMap read_heightmap_csv(const fs::path& p) {
  std::ifstream f = open_in(p);
  HeightMap hm;
  std::string line;
  int row = 0;
  for (std::size_t ln = 1; std::getline(f, line); ++ln) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string tag;
      ls >> tag >> hm.origin(0) >> hm.origin(1);
      continue;
    }
    const auto v = detail::split_numbers(line, p, ln);
    if (v.size() != HeightMap::kCells || row >= HeightMap::kCells)
      throw IoError("'" + p.string() + "': heightmap must be 32 x 32");
    for (int ix = 0; ix < HeightMap::kCells; ++ix) hm.values(row * HeightMap::kCells + ix) = v[ix] / 1000.0;
    ++row;
  }
  if (row != HeightMap::kCells) throw IoError("'" + p.string() + "': heightmap must be 32 x 32");
  return hm;
}

/// Binary 16-bit PGM, one grey level per 0.1 mm, clamped to [0, 65535].
inline void write_pgm16(const fs::path& p, const Eigen::MatrixXd& mm_values) {
  std::ofstream f = open_out(p, true);
  f << "P5\n" << mm_values.cols() << ' ' << mm_values.rows() << "\n65535\n";
  for (Eigen::Index r = 0; r < mm_values.rows(); ++r)
    for (Eigen::Index c = 0; c < mm_values.cols(); ++c) {
      const double q = std::clamp(std::round(mm_values(r, c) * 10.0), 0.0, 65535.0);
      const auto u = static_cast<std::uint16_t>(q);
      const unsigned char be[2] = {static_cast<unsigned char>(u >> 8), static_cast<unsigned char>(u & 0xff)};
      f.write(reinterpret_cast<const char*>(be), 2);
    }
}

/// 16-bit PGM of an arbitrary matrix, min -> 0 and max -> 65535.
inline void write_pgm16_normalized(const fs::path& p, const Eigen::MatrixXd& m) {
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  const double scale = hi > lo ? 6553.5 / (hi - lo) : 0.0;
  write_pgm16(p, ((m.array() - lo) * scale).matrix());
}

inline void write_heightmap_pgm(const fs::path& p, const HeightMap& hm) {
  Eigen::MatrixXd mm(HeightMap::kCells, HeightMap::kCells);
  for (int iy = 0; iy < HeightMap::kCells; ++iy)
    for (int ix = 0; ix < HeightMap::kCells; ++ix) mm(iy, ix) = hm.at(ix, iy) * 1000.0;
  write_pgm16(p, mm);
}

// ---------------------------------------------------------------------------
// Trajectories

inline void write_trajectory_csv(const fs::path& p, const Trajectory& t) {
  std::ofstream f = open_out(p);
  f << "t,x,y,z,qx,qy,qz,qw\n";
  for (const Waypoint& w : t.waypoints) {
    const Quat& q = w.pose.orientation;
    f << w.t << ',' << w.pose.position(0) << ',' << w.pose.position(1) << ',' << w.pose.position(2) << ','
      << q.x() << ',' << q.y() << ',' << q.z() << ',' << q.w() << '\n';
  }
}

inline Trajectory read_trajectory_csv(const fs::path& p, TrajectoryForm form, double frame_dt) {
  std::ifstream f = open_in(p);
  std::string line;
  std::getline(f, line);
  Trajectory t;
  t.form = form;
  t.frame_dt = frame_dt;
  for (std::size_t ln = 2; std::getline(f, line); ++ln) {
    if (line.empty()) continue;
    const auto v = detail::split_numbers(line, p, ln);
    if (v.size() != 8) throw IoError("'" + p.string() + "' line " + std::to_string(ln) + ": expected 8 columns");
    t.waypoints.push_back({v[0], {Vec3(v[1], v[2], v[3]), Quat(v[7], v[4], v[5], v[6]).normalized()}});
  }
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

}  // namespace dpsi::io
