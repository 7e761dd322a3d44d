#pragma once

// Datasets on disk. One directory per datapoint:
//
//   initial_filled.ply   particles of the pre-interaction body
//   target_cloud.ply     observed surface after the interaction
//   target_filled.ply    particles re-filled from that surface
//   trajectory.csv       sim-form effector poses, one row per frame
//   meta.yaml            name, effector kind, frame_dt, particle volume
//
// A dataset directory holds dataset.yaml (datapoint list, generating
// parameters, seed) next to its datapoint directories.

#include "dpsi/config.hpp"
#include "dpsi/dataset.hpp"
#include "dpsi/io.hpp"
#include "dpsi/mpm.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dpsi {

inline std::string effector_name(EffectorShape e) {
  switch (e) {
    case EffectorShape::Rectangle: return "rectangle";
    case EffectorShape::Cylinder: return "cylinder";
    case EffectorShape::Bullet: return "bullet";
  }
  return "bullet";
}

inline EffectorShape effector_from_name(const std::string& s) {
  if (s == "rectangle") return EffectorShape::Rectangle;
  if (s == "cylinder") return EffectorShape::Cylinder;
  if (s == "bullet") return EffectorShape::Bullet;
  throw ConfigError("unknown effector '" + s + "' (rectangle, cylinder, bullet)");
}

// ---------------------------------------------------------------------------
// Parameter sections shared by configs and manifests

/// The six parameters as keys of `section`, defaulting to `p`.
inline std::vector<KeySpec> param_keys(const std::string& section, const PhysicsParams& p = {}) {
  auto num = [](double v) { return detail::format_double(v); };
  return {{section + ".E", ValueKind::Pressure, num(p.E) + " Pa"},
          {section + ".nu", ValueKind::Scalar, num(p.nu)},
          {section + ".rho", ValueKind::Density, num(p.rho) + " kg/m3"},
          {section + ".sigma_y", ValueKind::Pressure, num(p.sigma_y) + " Pa"},
          {section + ".eta_t", ValueKind::Scalar, num(p.eta_t)},
          {section + ".eta_m", ValueKind::Scalar, num(p.eta_m)}};
}

inline PhysicsParams params_from(const Config& c, const std::string& section) {
  PhysicsParams p;
  for (int i = 0; i < PhysicsParams::kCount; ++i) p[i] = c.number(section + "." + PhysicsParams::kNames[i]);
  return p;
}

inline void params_to(Config& c, const std::string& section, const PhysicsParams& p) {
  for (int i = 0; i < PhysicsParams::kCount; ++i) c.set_si(section + "." + PhysicsParams::kNames[i], p[i]);
}

/// Key-value SI text of one parameter set (the best-params file format).
inline std::string params_yaml(const PhysicsParams& p, const std::string& section = "material") {
  Config c(param_keys(section, p));
  return c.serialize();
}

inline PhysicsParams params_from_yaml(const std::string& text, const std::string& section = "material") {
  return params_from(Config::parse(text, param_keys(section)), section);
}

// ---------------------------------------------------------------------------
// Datapoints

inline std::vector<KeySpec> datapoint_meta_keys() {
  return {{"datapoint.name", ValueKind::Text, ""},
          {"datapoint.effector", ValueKind::Text, "bullet"},
          {"datapoint.frame_dt", ValueKind::Time, "0.01 s"},
          {"datapoint.particle_volume", ValueKind::Volume, "1 m3"}};
}

inline void save_datapoint(const std::filesystem::path& dir, const DataPoint& dp) {
  dp.validate();
  std::filesystem::create_directories(dir);
  io::write_ply(dir / "initial_filled.ply", dp.initial.x);
  io::write_ply(dir / "target_cloud.ply", dp.target.surface_cloud);
  io::write_ply(dir / "target_filled.ply", dp.target.filled);
  io::write_trajectory_csv(dir / "trajectory.csv", dp.trajectory);
  Config meta(datapoint_meta_keys());
  meta.set("datapoint.name", dp.name);
  meta.set("datapoint.effector", effector_name(dp.effector));
  meta.set_si("datapoint.frame_dt", dp.trajectory.frame_dt);
  meta.set_si("datapoint.particle_volume", dp.initial.volume);
  io::open_out(dir / "meta.yaml") << meta.serialize();
}

/// Loads a datapoint directory. The target heightmap is rasterised from the
/// target cloud around its own centroid.
inline DataPoint load_datapoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "meta.yaml"))
    throw IoError("'" + dir.string() + "' is not a datapoint directory (no meta.yaml)");
  const Config meta = Config::parse(io::read_text(dir / "meta.yaml"), datapoint_meta_keys());
  DataPoint dp;
  dp.name = meta.text("datapoint.name");
  if (dp.name.empty()) dp.name = dir.filename().string();
  dp.effector = effector_from_name(meta.text("datapoint.effector"));
  const double volume = meta.number("datapoint.particle_volume");
  dp.initial = ParticleSystem::at_rest(io::read_ply(dir / "initial_filled.ply"), volume);
  dp.target.surface_cloud = io::read_ply(dir / "target_cloud.ply");
  dp.target.filled = io::read_ply(dir / "target_filled.ply");
  dp.target.heightmap = rasterize_heightmap(dp.target.surface_cloud);
  dp.trajectory =
      io::read_trajectory_csv(dir / "trajectory.csv", TrajectoryForm::Sim, meta.number("datapoint.frame_dt"));
  dp.validate();
  return dp;
}

// ---------------------------------------------------------------------------
// Datasets

inline std::vector<KeySpec> dataset_manifest_keys() {
  std::vector<KeySpec> k{{"dataset.datapoints", ValueKind::List, ""}, {"dataset.seed", ValueKind::Integer, "0"}};
  for (KeySpec& s : param_keys("truth")) k.push_back(s);
  return k;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& data, const PhysicsParams& truth,
                         std::uint64_t seed) {
  Config m(dataset_manifest_keys());
  std::string names;
  for (const DataPoint& dp : data) {
    if (dp.name.empty() || dp.name.find_first_of("/\\,") != std::string::npos)
      throw PreconditionError("datapoint name '" + dp.name + "' cannot be used as a directory name");
    save_datapoint(dir / dp.name, dp);
    names += (names.empty() ? "" : ",") + dp.name;
  }
  m.set("dataset.datapoints", names);
  m.set("dataset.seed", std::to_string(seed));
  params_to(m, "truth", truth);
  io::open_out(dir / "dataset.yaml") << m.serialize();
}

/// Loads either a single datapoint directory or a dataset directory.
inline Dataset load_dataset(const std::filesystem::path& path) {
  if (std::filesystem::exists(path / "meta.yaml")) return {load_datapoint(path)};
  if (!std::filesystem::exists(path / "dataset.yaml"))
    throw IoError("'" + path.string() + "' holds neither dataset.yaml nor meta.yaml");
  const Config m = Config::parse(io::read_text(path / "dataset.yaml"), dataset_manifest_keys());
  Dataset out;
  for (const std::string& name : m.list("dataset.datapoints")) out.push_back(load_datapoint(path / name));
  if (out.empty()) throw IoError("dataset '" + path.string() + "' lists no datapoints");
  return out;
}

inline Dataset load_datasets(const std::vector<std::string>& paths) {
  Dataset out;
  for (const std::string& p : paths)
    for (DataPoint& dp : load_dataset(p)) out.push_back(std::move(dp));
  return out;
}

}  // namespace dpsi
