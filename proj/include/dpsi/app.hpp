#pragma once

// Command implementations behind the `dpsi` executable. Each command takes a
// parsed config and an output directory; the executable only handles
// argument parsing. Requires yaml-cpp (through config.hpp).

#include "dpsi/adjoint.hpp"
#include "dpsi/config.hpp"
#include "dpsi/io.hpp"
#include "dpsi/planner.hpp"
#include "dpsi/store.hpp"
#include "dpsi/synthetic.hpp"
#include "dpsi/sysid.hpp"

#include <Eigen/Core>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dpsi::app {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "make-synthetic", "identify", "landscape", "plan"};
  return names;
}

// ---------------------------------------------------------------------------
// Schemas

namespace keys {

inline std::vector<KeySpec> run() { return {{"run.seed", ValueKind::Integer, "0"}}; }

inline std::vector<KeySpec> scene() {
  return {{"scene.grid_size", ValueKind::Length, "0.5 m"},
          {"scene.grid_cells", ValueKind::Integer, "64"},
          {"scene.grid_center_x", ValueKind::Length, "0 m"},
          {"scene.grid_center_y", ValueKind::Length, "0 m"},
          {"scene.grid_center_z", ValueKind::Length, "0 m"},
          {"scene.frame_dt", ValueKind::Time, "0.01 s"},
          {"scene.min_substeps", ValueKind::Integer, "100"},
          {"scene.cfl", ValueKind::Scalar, "0.5"},
          {"scene.gravity", ValueKind::Acceleration, "9.81 m/s2"},
          {"scene.contact_band", ValueKind::Scalar, "0.5"},
          {"scene.boundary_nodes", ValueKind::Integer, "2"},
          {"scene.threads", ValueKind::Integer, "1"},
          {"scene.table_height", ValueKind::Length, "0 m"}};
}

inline std::vector<KeySpec> bounds(const ParamBox& box = {}) {
  std::vector<KeySpec> out;
  for (const auto& [suffix, p] : {std::pair{"_min", box.lo}, std::pair{"_max", box.hi}})
    for (KeySpec k : param_keys("bounds", p)) {
      k.key += suffix;
      out.push_back(k);
    }
  return out;
}

inline std::vector<KeySpec> body() {
  return {{"body.shape", ValueKind::Text, "box"},
          {"body.size_x", ValueKind::Length, "0.05 m"},
          {"body.size_y", ValueKind::Length, "0.05 m"},
          {"body.size_z", ValueKind::Length, "0.03 m"},
          {"body.radius", ValueKind::Length, "0.025 m"},
          {"body.height", ValueKind::Length, "0.03 m"},
          {"body.center_x", ValueKind::Length, "0 m"},
          {"body.center_y", ValueKind::Length, "0 m"},
          {"body.particles", ValueKind::Integer, "1000"},
          {"body.path", ValueKind::Text, ""},
          {"body.particle_volume", ValueKind::Volume, "0 m3"}};
}

inline std::vector<KeySpec> motion() {
  return {{"motion.preset", ValueKind::Text, "poking-1"},
          {"motion.effector", ValueKind::Text, "preset"},
          {"motion.offset_x", ValueKind::Length, "0 m"},
          {"motion.offset_y", ValueKind::Length, "0 m"},
          {"motion.trajectory", ValueKind::Text, ""}};
}

inline std::vector<KeySpec> observation() {
  return {{"observation.noise", ValueKind::Flag, "true"},
          {"observation.noise_sigma", ValueKind::Length, "1 mm"},
          {"observation.offset_max", ValueKind::Length, "3 mm"},
          {"observation.bottom_threshold", ValueKind::Length, "3 mm"},
          {"observation.project_bottom", ValueKind::Flag, "true"},
          {"observation.downsample_radius", ValueKind::Length, "5 mm"}};
}

inline std::vector<KeySpec> steps(const StepSizes& s = {}) {
  auto num = [](double v) { return detail::format_double(v); };
  return {{"steps.E", ValueKind::Pressure, num(s.step[0]) + " kPa"},
          {"steps.nu", ValueKind::Scalar, num(s.step[1])},
          {"steps.rho", ValueKind::Density, num(s.step[2]) + " kg/m3"},
          {"steps.sigma_y", ValueKind::Pressure, num(s.step[3]) + " kPa"},
          {"steps.eta_t", ValueKind::Scalar, num(s.step[4])},
          {"steps.eta_m", ValueKind::Scalar, num(s.step[5])}};
}

}  // namespace keys

inline std::vector<KeySpec> schema_for(const std::string& command) {
  std::vector<KeySpec> s;
  auto add = [&](std::vector<KeySpec> more) { s.insert(s.end(), more.begin(), more.end()); };
  add(keys::run());
  add(keys::scene());
  if (command == "simulate") {
    add(keys::body());
    add(keys::motion());
    add(param_keys("material"));
    add(keys::bounds());
    add({{"output.format", ValueKind::Text, "ply"}, {"output.every_frame", ValueKind::Flag, "false"}});
  } else if (command == "make-synthetic") {
    add(keys::body());
    add(param_keys("truth"));
    add(keys::bounds());
    add({{"dataset.motions", ValueKind::List, "poking-shifting-1"},
         {"dataset.effectors", ValueKind::List, "preset"},
         {"dataset.repeats", ValueKind::Integer, "1"}});
    add(keys::observation());
  } else if (command == "identify") {
    add({{"data.train", ValueKind::List, ""}, {"data.validation", ValueKind::List, ""}});
    add({{"identify.loss", ValueKind::Text, "prt-emd"},
         {"identify.iterations", ValueKind::Integer, "100"},
         {"identify.init", ValueKind::Text, "random"},
         {"identify.allow_heightmap_loss", ValueKind::Flag, "false"},
         {"identify.heightmaps", ValueKind::Flag, "false"}});
    add(param_keys("material"));
    add(keys::steps());
    add({{"adam.beta1", ValueKind::Scalar, "0.9"},
         {"adam.beta2", ValueKind::Scalar, "0.999"},
         {"adam.eps", ValueKind::Scalar, "1e-8"}});
    add(keys::bounds());
  } else if (command == "landscape") {
    add({{"data.train", ValueKind::List, ""}});
    add({{"landscape.pairs", ValueKind::List, "E:nu, sigma_y:rho, eta_t:eta_m"},
         {"landscape.intervals", ValueKind::Integer, "30"},
         {"landscape.loss", ValueKind::Text, "prt-emd"}});
    add(param_keys("material"));
    add(keys::bounds());
  } else if (command == "plan") {
    add(keys::body());
    add(param_keys("material"));
    add(keys::bounds());
    add({{"planner.n_actions", ValueKind::Integer, "8"},
         {"planner.offset_unit", ValueKind::Length, "0.03 m"},
         {"planner.skills", ValueKind::List, "poking-shifting-1, poking-shifting-2"},
         {"planner.target", ValueKind::Text, "initial"}});
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Config readers

inline Scene scene_from(const Config& c, bool deterministic) {
  Scene sc;
  SimConfig& s = sc.sim;
  const int cells = static_cast<int>(c.integer("scene.grid_cells"));
  if (cells < 8) throw ConfigError("scene.grid_cells must be >= 8");
  const double size = c.number("scene.grid_size");
  if (!(size > 0.0)) throw ConfigError("scene.grid_size must be positive");
  s.grid = GridSpec::centered(
      Vec3(c.number("scene.grid_center_x"), c.number("scene.grid_center_y"), c.number("scene.grid_center_z")), size,
      cells);
  s.frame_dt = c.number("scene.frame_dt");
  if (!(s.frame_dt > 0.0)) throw ConfigError("scene.frame_dt must be positive");
  s.min_substeps = static_cast<int>(c.integer("scene.min_substeps"));
  if (s.min_substeps < 1) throw ConfigError("scene.min_substeps must be >= 1");
  s.cfl = c.number("scene.cfl");
  s.gravity = c.number("scene.gravity");
  s.contact_band = c.number("scene.contact_band");
  s.boundary_nodes = static_cast<int>(c.integer("scene.boundary_nodes"));
  s.threads = std::max(1, static_cast<int>(c.integer("scene.threads")));
  s.deterministic = deterministic;
  sc.table_height = c.number("scene.table_height");
  return sc;
}

inline ParamBox box_from(const Config& c) {
  ParamBox b;
  for (int i = 0; i < PhysicsParams::kCount; ++i) {
    const std::string n = std::string("bounds.") + PhysicsParams::kNames[i];
    b.lo[i] = c.number(n + "_min");
    b.hi[i] = c.number(n + "_max");
    if (!(b.lo[i] <= b.hi[i])) throw ConfigError(n + "_min exceeds " + n + "_max");
  }
  return b;
}

inline std::string describe(const PhysicsParams& p) {
  std::string s;
  for (int i = 0; i < PhysicsParams::kCount; ++i)
    s += std::string(i ? " " : "") + PhysicsParams::kNames[i] + "=" + detail::format_double(p[i]);
  return s;
}

/// Rejects parameters outside the box before anything is simulated.
inline void require_in_box(const PhysicsParams& p, const ParamBox& box, const std::string& what) {
  for (int i = 0; i < PhysicsParams::kCount; ++i)
    if (!(p[i] >= box.lo[i] && p[i] <= box.hi[i]))
      throw ConfigError(what + "." + PhysicsParams::kNames[i] + " = " + detail::format_double(p[i]) +
                        " lies outside [" + detail::format_double(box.lo[i]) + ", " +
                        detail::format_double(box.hi[i]) + "]");
}

/// Body resting on the table, centred at (center_x, center_y).
inline ParticleSystem body_from(const Config& c, double table_height, std::uint64_t seed) {
  const std::string shape = c.text("body.shape");
  if (shape == "ply") {
    const std::string path = c.text("body.path");
    if (path.empty()) throw ConfigError("body.shape = ply needs body.path");
    const double vol = c.number("body.particle_volume");
    if (!(vol > 0.0)) throw ConfigError("body.shape = ply needs a positive body.particle_volume");
    return ParticleSystem::at_rest(io::read_points(path), vol);
  }
  const double cx = c.number("body.center_x"), cy = c.number("body.center_y");
  const int n = static_cast<int>(c.integer("body.particles"));
  Solid solid;
  if (shape == "box") {
    const Vec3 half(0.5 * c.number("body.size_x"), 0.5 * c.number("body.size_y"), 0.5 * c.number("body.size_z"));
    if (!(half.minCoeff() > 0.0)) throw ConfigError("body sizes must be positive");
    solid = BoxSolid{Vec3(cx, cy, table_height + half(2)), half};
  } else if (shape == "sphere") {
    const double r = c.number("body.radius");
    if (!(r > 0.0)) throw ConfigError("body.radius must be positive");
    solid = SphereSolid{Vec3(cx, cy, table_height + r), r};
  } else if (shape == "cylinder") {
    const double r = c.number("body.radius"), h = c.number("body.height");
    if (!(r > 0.0 && h > 0.0)) throw ConfigError("body.radius and body.height must be positive");
    solid = CylinderSolid{Vec3(cx, cy, table_height), r, h};
  } else {
    throw ConfigError("unknown body.shape '" + shape + "' (box, sphere, cylinder, ply)");
  }
  return make_body(solid, n, seed);
}

struct MotionChoice {
  Trajectory trajectory;  // sim form
  EffectorShape effector = EffectorShape::Bullet;
  std::string name;
};

/// The configured motion, started at the top centre of `body` (plus offset).
inline MotionChoice motion_from(const Config& c, const Points& body, double frame_dt) {
  MotionChoice m;
  const std::string preset = c.text("motion.preset");
  const std::string eff = c.text("motion.effector");
  const std::string path = c.text("motion.trajectory");
  if (!path.empty()) {
    if (eff == "preset") throw ConfigError("motion.trajectory needs an explicit motion.effector");
    m.effector = effector_from_name(eff);
    m.trajectory = resample_trajectory(io::read_trajectory_csv(path, TrajectoryForm::Real, 0.0), frame_dt);
    m.name = fs::path(path).stem().string();
    return m;
  }
  if (preset == "none") {
    m.effector = eff == "preset" ? EffectorShape::Bullet : effector_from_name(eff);
    m.trajectory.form = TrajectoryForm::Sim;
    m.trajectory.frame_dt = frame_dt;
    m.name = "none";
    return m;
  }
  const MotionPreset mp = motions::by_name(preset);
  m.effector = eff == "preset" ? mp.effector : effector_from_name(eff);
  const Vec2d offset(c.number("motion.offset_x"), c.number("motion.offset_y"));
  m.trajectory = motion_trajectory(mp, motion_start(body, offset), frame_dt);
  m.name = mp.name;
  return m;
}

inline ObservationConfig observation_from(const Config& c, double table_height) {
  ObservationConfig o;
  const bool noise = c.flag("observation.noise");
  o.noise_sigma = noise ? c.number("observation.noise_sigma") : 0.0;
  o.offset_max = noise ? c.number("observation.offset_max") : 0.0;
  o.bottom_threshold = c.number("observation.bottom_threshold");
  o.project_bottom = c.flag("observation.project_bottom");
  o.downsample_radius = c.number("observation.downsample_radius");
  o.table_height = table_height;
  return o;
}

inline StepSizes steps_from(const Config& c) {
  StepSizes s;
  for (int i = 0; i < PhysicsParams::kCount; ++i)
    s.step[i] = c.number(std::string("steps.") + PhysicsParams::kNames[i]) / kOptimizerUnit[i];
  return s;
}

// ---------------------------------------------------------------------------
// Runs

struct Run {
  std::string command;
  Config config;
  fs::path out;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::ostream* log = &std::clog;
};

/// Parses `text` (possibly empty) for `command`; the seed from the command
/// line, when given, replaces the configured one.
inline Run make_run(const std::string& command, const std::string& text, const fs::path& out,
                    std::optional<std::uint64_t> seed, bool deterministic) {
  Run r{command, Config::parse(text, schema_for(command)), out, 0, deterministic};
  if (seed) r.config.set("run.seed", std::to_string(*seed));
  const long long s = r.config.integer("run.seed");
  if (s < 0) throw ConfigError("run.seed must be non-negative");
  r.seed = static_cast<std::uint64_t>(s);
  return r;
}

/// Canonical config plus a manifest with its hash, the seed and versions.
inline void write_manifest(const Run& r) {
  const std::string canon = r.config.serialize();
  io::open_out(r.out / "config.yaml") << canon;
  YAML::Emitter m;
  m << YAML::BeginMap;
  m << YAML::Key << "command" << YAML::Value << r.command;
  m << YAML::Key << "version" << YAML::Value << kVersion;
  m << YAML::Key << "config" << YAML::Value << "config.yaml";
  m << YAML::Key << "config_hash" << YAML::Value << ("fnv1a64:" + io::hex64(io::fnv1a(canon)));
  m << YAML::Key << "seed" << YAML::Value << r.seed;
  m << YAML::Key << "deterministic" << YAML::Value << r.deterministic;
  m << YAML::Key << "eigen" << YAML::Value
    << (std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
        std::to_string(EIGEN_MINOR_VERSION));
#if defined(__VERSION__)
  m << YAML::Key << "compiler" << YAML::Value << __VERSION__;
#endif
  m << YAML::EndMap;
  io::open_out(r.out / "manifest.yaml") << m.c_str() << "\n";
}

inline void write_heightmap(const fs::path& stem, const HeightMap& hm) {
  io::write_heightmap_csv(stem.string() + ".csv", hm);
  io::write_heightmap_pgm(stem.string() + ".pgm", hm);
}

// ---------------------------------------------------------------------------
// simulate

inline void cmd_simulate(const Run& r) {
  const Config& c = r.config;
  const Scene base = scene_from(c, r.deterministic);
  const PhysicsParams params = params_from(c, "material");
  require_in_box(params, box_from(c), "material");
  const ParticleSystem body = body_from(c, base.table_height, r.seed);
  const MotionChoice m = motion_from(c, body.x, base.sim.frame_dt);
  Scene scene = base;
  scene.effector = m.effector;

  const std::string ext = c.text("output.format");
  if (ext != "ply" && ext != "csv") throw ConfigError("output.format must be ply or csv");
  RolloutOptions opt;
  if (c.flag("output.every_frame"))
    opt.on_frame = [&](int k, const ParticleSystem& s) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.", k);
      io::write_points(r.out / "frames" / (name + ext), s.x);
    };
  *r.log << "simulate: " << body.size() << " particles, " << m.trajectory.size() << " frames (" << m.name
         << ", " << effector_name(m.effector) << ")\n";
  io::write_points(r.out / ("initial." + ext), body.x);
  io::write_trajectory_csv(r.out / "trajectory.csv", m.trajectory);
  const RolloutResult res = rollout(body, m.trajectory, params, scene, opt);
  io::write_points(r.out / ("final." + ext), res.final_state.x);
  write_heightmap(r.out / "heightmap", rasterize_heightmap(res.final_state.x));
  *r.log << "simulate: " << res.frames << " frames, " << res.n_substeps << " substeps per frame\n";
}

// ---------------------------------------------------------------------------
// make-synthetic

/// Generates the configured datapoints from the `truth` parameters.
inline Dataset synthesize_dataset(const Config& c, const Scene& base, std::uint64_t seed, std::ostream& log) {
  const PhysicsParams truth = params_from(c, "truth");
  require_in_box(truth, box_from(c), "truth");
  const ObservationConfig obs = observation_from(c, base.table_height);
  const int repeats = static_cast<int>(c.integer("dataset.repeats"));
  if (repeats < 1) throw ConfigError("dataset.repeats must be >= 1");
  const auto& motion_names = c.list("dataset.motions");
  const auto& effectors = c.list("dataset.effectors");
  if (motion_names.empty() || effectors.empty()) throw ConfigError("dataset.motions and dataset.effectors are required");
  std::mt19937_64 rng(seed);
  Dataset data;
  for (const std::string& mname : motion_names) {
    const MotionPreset motion = motions::by_name(mname);
    for (const std::string& ename : effectors) {
      const EffectorShape eff = ename == "preset" ? motion.effector : effector_from_name(ename);
      for (int rep = 0; rep < repeats; ++rep) {
        const ParticleSystem body = body_from(c, base.table_height, rng());
        const std::string name = mname + "-" + effector_name(eff) + "-" + std::to_string(rep);
        log << "make-synthetic: " << name << " (" << body.size() << " particles)\n";
        data.push_back(make_synthetic_datapoint(name, body, motion, eff, truth, base, obs, rng));
      }
    }
  }
  return data;
}

inline void cmd_make_synthetic(const Run& r) {
  const Scene base = scene_from(r.config, r.deterministic);
  const Dataset data = synthesize_dataset(r.config, base, r.seed, *r.log);
  save_dataset(r.out, data, params_from(r.config, "truth"), r.seed);
}

// ---------------------------------------------------------------------------
// identify

inline void write_history_csv(const fs::path& p, const IdentifyResult& res) {
  std::ofstream f = io::open_out(p);
  f << "iteration";
  for (const char* n : PhysicsParams::kNames) f << ',' << n;
  for (LossKind k : kAllLossKinds) f << ',' << to_string(k);
  f << ",train_loss\n";
  for (const HistoryRow& row : res.history) {
    f << row.iteration;
    for (int i = 0; i < PhysicsParams::kCount; ++i) f << ',' << row.params[i];
    for (double v : row.metrics.value) f << ',' << v;
    f << ',' << row.train_loss << '\n';
  }
}

inline IdentifyConfig identify_config_from(const Config& c) {
  IdentifyConfig ic;
  ic.loss = loss_kind_from_string(c.text("identify.loss"));
  ic.iterations = static_cast<int>(c.integer("identify.iterations"));
  ic.allow_heightmap_loss = c.flag("identify.allow_heightmap_loss");
  ic.steps = steps_from(c);
  ic.box = box_from(c);
  ic.adam = {c.number("adam.beta1"), c.number("adam.beta2"), c.number("adam.eps")};
  ic.validation = load_datasets(c.list("data.validation"));
  return ic;
}

inline PhysicsParams initial_params(const Config& c, const ParamBox& box, std::uint64_t seed) {
  const std::string init = c.text("identify.init");
  if (init == "warm") {
    const PhysicsParams p = params_from(c, "material");
    require_in_box(p, box, "material");
    return p;
  }
  if (init != "random") throw ConfigError("identify.init must be random or warm");
  std::mt19937_64 rng(seed);
  return random_params(box, rng);
}

inline void cmd_identify(const Run& r) {
  const Config& c = r.config;
  const Scene base = scene_from(c, r.deterministic);
  const Dataset train = load_datasets(c.list("data.train"));
  if (train.empty()) throw ConfigError("data.train lists no datasets");
  IdentifyConfig ic = identify_config_from(c);
  const PhysicsParams init = initial_params(c, ic.box, r.seed);
  const Dataset& shown = ic.validation.empty() ? train : ic.validation;
  const bool heightmaps = c.flag("identify.heightmaps");
  const auto t0 = std::chrono::steady_clock::now();
  ic.on_iteration = [&](int it, const PhysicsParams& p, const Metrics& m) {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    *r.log << "identify: iteration " << it << "  heightmap " << m.heightmap() << "  prt-emd "
           << m[LossKind::PrtEmd] << "  (" << sec << " s)\n";
    if (!heightmaps) return;
    for (const DataPoint& dp : shown) {
      const RolloutResult rr = rollout(dp.initial, dp.trajectory, p, scene_for(base, dp));
      char name[64];
      std::snprintf(name, sizeof name, "iter_%04d_", it);
      io::write_heightmap_pgm(r.out / "heightmaps" / (name + dp.name + ".pgm"),
                              rasterize_heightmap(rr.final_state.x, dp.target.heightmap.origin));
    }
  };
  *r.log << "identify: " << train.size() << " training datapoints, init " << describe(init) << "\n";
  const IdentifyResult res = identify(train, init, base, ic);
  write_history_csv(r.out / "history.csv", res);
  io::open_out(r.out / "best_params.yaml") << params_yaml(res.best);
  io::open_out(r.out / "initial_params.yaml") << params_yaml(res.initial);
  std::ofstream s = io::open_out(r.out / "summary.csv");
  s << "which";
  for (LossKind k : kAllLossKinds) s << ',' << to_string(k);
  s << '\n';
  for (const auto& [name, m] : {std::pair{"initial", res.initial_metrics}, std::pair{"best", res.best_metrics}}) {
    s << name;
    for (double v : m.value) s << ',' << v;
    s << '\n';
  }
  *r.log << "identify: best " << describe(res.best) << "  heightmap " << res.best_metrics.heightmap() << "\n";
}

// ---------------------------------------------------------------------------
// landscape

inline int param_index(const std::string& name) {
  for (int i = 0; i < PhysicsParams::kCount; ++i)
    if (name == PhysicsParams::kNames[i]) return i;
  throw ConfigError("unknown parameter '" + name + "'");
}

inline void write_landscape_csv(const fs::path& p, const Landscape& L) {
  std::ofstream f = io::open_out(p);
  f << PhysicsParams::kNames[L.param_a] << '\\' << PhysicsParams::kNames[L.param_b];
  for (Eigen::Index j = 0; j < L.values_b.size(); ++j) f << ',' << L.values_b(j);
  f << '\n';
  for (Eigen::Index i = 0; i < L.values_a.size(); ++i) {
    f << L.values_a(i);
    for (Eigen::Index j = 0; j < L.values_b.size(); ++j) f << ',' << L.loss(i, j);
    f << '\n';
  }
}

inline void cmd_landscape(const Run& r) {
  const Config& c = r.config;
  const Scene base = scene_from(c, r.deterministic);
  const Dataset data = load_datasets(c.list("data.train"));
  if (data.empty()) throw ConfigError("data.train lists no datasets");
  const ParamBox box = box_from(c);
  const PhysicsParams others = params_from(c, "material");
  require_in_box(others, box, "material");
  const LossKind kind = loss_kind_from_string(c.text("landscape.loss"));
  const int n = static_cast<int>(c.integer("landscape.intervals"));
  for (const std::string& pair : c.list("landscape.pairs")) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw ConfigError("landscape pair '" + pair + "' must be written a:b");
    const int a = param_index(detail::trim(pair.substr(0, colon)));
    const int b = param_index(detail::trim(pair.substr(colon + 1)));
    *r.log << "landscape: " << pair << ", " << n << " x " << n << " rollouts per datapoint\n";
    const Landscape L = landscape_sweep(a, b, others, data, kind, n, base, box);
    const std::string stem = std::string("landscape_") + PhysicsParams::kNames[a] + "_" + PhysicsParams::kNames[b];
    write_landscape_csv(r.out / (stem + ".csv"), L);
    io::write_pgm16_normalized(r.out / (stem + ".pgm"), L.loss);
  }
}

// ---------------------------------------------------------------------------
// plan

/// Target heightmap: the body itself ("initial"), the result of a preset
/// motion ("motion:<name>"), or a heightmap CSV.
inline HeightMap plan_target(const std::string& spec, const ParticleSystem& body, const PhysicsParams& params,
                             const Scene& base) {
  if (spec == "initial") return rasterize_heightmap(body.x);
  if (spec.rfind("motion:", 0) == 0) {
    const MotionPreset mp = motions::by_name(spec.substr(7));
    Scene scene = base;
    scene.effector = mp.effector;
    const Trajectory t = motion_trajectory(mp, motion_start(body.x), base.sim.frame_dt);
    return rasterize_heightmap(rollout(body, t, params, scene).final_state.x);
  }
  return io::read_heightmap_csv(spec);
}

inline PlannerConfig planner_config_from(const Config& c) {
  PlannerConfig pc;
  pc.n_actions = static_cast<int>(c.integer("planner.n_actions"));
  if (pc.n_actions < 0) throw ConfigError("planner.n_actions must be >= 0");
  pc.offset_unit = c.number("planner.offset_unit");
  pc.skills.clear();
  for (const std::string& s : c.list("planner.skills")) pc.skills.push_back(motions::by_name(s));
  if (pc.skills.empty()) throw ConfigError("planner.skills is empty");
  return pc;
}

inline void write_plan_csv(const fs::path& p, const Plan& plan) {
  std::ofstream f = io::open_out(p);
  f << "step,skill,j,k,start_z,loss\n";
  for (std::size_t s = 0; s < plan.steps.size(); ++s) {
    const Action& a = plan.steps[s].action;
    f << s + 1 << ',' << a.skill << ',' << a.j << ',' << a.k << ',' << a.start_z << ',' << plan.steps[s].loss
      << '\n';
  }
}

inline void write_candidates_csv(const fs::path& p, const Plan& plan) {
  std::ofstream f = io::open_out(p);
  f << "step,candidate,skill,j,k,loss,feasible,error\n";
  for (std::size_t s = 0; s < plan.steps.size(); ++s)
    for (std::size_t i = 0; i < plan.steps[s].candidates.size(); ++i) {
      const CandidateResult& cr = plan.steps[s].candidates[i];
      std::string err = cr.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      f << s + 1 << ',' << i << ',' << cr.action.skill << ',' << cr.action.j << ',' << cr.action.k << ','
        << cr.loss << ',' << (cr.feasible ? 1 : 0) << ',' << err << '\n';
    }
}

inline void cmd_plan(const Run& r) {
  const Config& c = r.config;
  const Scene base = scene_from(c, r.deterministic);
  const PhysicsParams params = params_from(c, "material");
  require_in_box(params, box_from(c), "material");
  const ParticleSystem body = body_from(c, base.table_height, r.seed);
  const PlannerConfig pc = planner_config_from(c);
  const HeightMap target = plan_target(c.text("planner.target"), body, params, base);
  write_heightmap(r.out / "target", target);
  write_heightmap(r.out / "heightmaps" / "step_00", rasterize_heightmap(body.x, target.origin));
  *r.log << "plan: " << pc.n_actions << " actions, " << candidate_actions(pc, 0.0).size()
         << " candidates per step\n";
  const Plan plan = greedy_plan(body, target, params, base, pc);
  for (std::size_t s = 0; s < plan.steps.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%02zu", s + 1);
    write_heightmap(r.out / "heightmaps" / name, plan.steps[s].heightmap);
    for (const CandidateResult& cr : plan.steps[s].candidates)
      if (!cr.feasible)
        *r.log << "plan: step " << s + 1 << " candidate (" << cr.action.skill << "," << cr.action.j << ","
               << cr.action.k << ") infeasible: " << cr.error << "\n";
  }
  write_plan_csv(r.out / "plan.csv", plan);
  write_candidates_csv(r.out / "candidates.csv", plan);
  io::write_ply(r.out / "final.ply", plan.final_state.x);
  *r.log << "plan: loss " << plan.initial_loss << " -> "
         << (plan.steps.empty() ? plan.initial_loss : plan.steps.back().loss) << "\n";
}

// ---------------------------------------------------------------------------

/// Validates the config, claims the output directory, writes the manifest
/// and runs the command.
inline void execute(const Run& r) {
  // Fail on config errors before touching the output directory.
  scene_from(r.config, r.deterministic);
  const ParamBox box = box_from(r.config);
  if (r.command == "make-synthetic")
    require_in_box(params_from(r.config, "truth"), box, "truth");
  else if (r.command != "identify" || r.config.text("identify.init") == "warm")
    require_in_box(params_from(r.config, "material"), box, "material");
  io::prepare_output_dir(r.out);
  write_manifest(r);
  if (r.command == "simulate") return cmd_simulate(r);
  if (r.command == "make-synthetic") return cmd_make_synthetic(r);
  if (r.command == "identify") return cmd_identify(r);
  if (r.command == "landscape") return cmd_landscape(r);
  if (r.command == "plan") return cmd_plan(r);
  throw ConfigError("unknown command '" + r.command + "'");
}

}  // namespace dpsi::app
