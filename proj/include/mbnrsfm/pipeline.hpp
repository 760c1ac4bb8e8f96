#pragma once

// Run manifests and the synth / solve / eval / pipeline drivers.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mbnrsfm/admm.hpp"
#include "mbnrsfm/clustering.hpp"
#include "mbnrsfm/error.hpp"
#include "mbnrsfm/io.hpp"
#include "mbnrsfm/metrics.hpp"
#include "mbnrsfm/scene.hpp"
#include "mbnrsfm/synth.hpp"

namespace mbnrsfm {

enum class Command { synth, solve, eval, pipeline };

inline constexpr const char* kRigidInit = "rigid-init";

struct ManifestInputs {
  std::optional<std::filesystem::path> tracks;     // W, 2F x P
  std::optional<std::filesystem::path> rotations;  // stacked R, 2F x 3
  bool rigid_init = false;                         // rotations from rigid_rotation_init(W)
  std::optional<std::filesystem::path> init_shape;
  std::optional<std::filesystem::path> shape_gt;
  std::optional<std::filesystem::path> labels_gt;
  std::optional<std::filesystem::path> shape;   // eval: estimated S
  std::optional<std::filesystem::path> labels;  // eval: estimated labels
  std::map<std::string, std::filesystem::path> baselines;
};

struct RunManifest {
  Command command = Command::pipeline;
  std::filesystem::path output_dir;
  ManifestInputs inputs;
  std::optional<SynthConfig> synth;
  SolverConfig solver;
  int clusters = 2;
  std::optional<std::pair<Index, Index>> grid;  // height, width; dense spatial term
};

/// Error raised inside a named pipeline stage; carries the process exit code.
class StageError : public Error {
 public:
  StageError(std::string stage, int exit_code, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int parse = 2;
inline constexpr int numerical = 3;
inline constexpr int manifest = 4;
}  // namespace exit_code

/// Exit code for an exception escaping a run.
inline int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return exit_code::parse;
  }
  if (dynamic_cast<const NumericalError*>(&e)) return exit_code::numerical;
  if (dynamic_cast<const ManifestError*>(&e) || dynamic_cast<const ValueError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return exit_code::manifest;
  }
  return exit_code::failure;
}

/// Runs `fn`, rethrowing any failure as a StageError tagged with `stage`.
template <typename Fn>
decltype(auto) run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, exit_code_for(e), e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest parsing

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ManifestError(where + ": unknown key \"" + item.key() + "\"");
    }
  }
}

inline const json& require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ManifestError(where + " must be an object");
  return j;
}

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ManifestError(where + " has the wrong type");
  }
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ManifestError(where + " must be a number");
  return j.get<double>();
}

inline long long get_integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ManifestError(where + " must be an integer");
  return j.get<long long>();
}

inline std::uint64_t get_seed(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const long long v = get_integer(j, where);
  if (v < 0) throw ManifestError(where + " must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const json& j,
                                     const std::string& where) {
  if (!j.is_string()) throw ManifestError(where + " must be a path string");
  std::filesystem::path p = j.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

inline CameraMode parse_camera_mode(const std::string& s) {
  if (s == "identity") return CameraMode::identity;
  if (s == "smooth_random") return CameraMode::smooth_random;
  throw ManifestError("synth.camera must be \"identity\" or \"smooth_random\", got \"" + s + "\"");
}

inline BodySpec parse_body(const json& j, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, {"points", "basis_rank", "centroid", "scale", "rigid"}, where);
  BodySpec b;
  if (j.contains("points")) b.points = static_cast<Index>(get_integer(j["points"], where + ".points"));
  if (j.contains("basis_rank")) {
    b.basis_rank = static_cast<int>(get_integer(j["basis_rank"], where + ".basis_rank"));
  }
  if (j.contains("centroid")) {
    const json& c = j["centroid"];
    if (!c.is_array() || c.size() != 3) throw ManifestError(where + ".centroid must be 3 numbers");
    for (int i = 0; i < 3; ++i) b.centroid(i) = get_number(c[static_cast<std::size_t>(i)], where + ".centroid");
  }
  if (j.contains("scale")) b.scale = get_number(j["scale"], where + ".scale");
  if (j.contains("rigid")) b.rigid = get_as<bool>(j["rigid"], where + ".rigid");
  return b;
}

inline SynthConfig parse_synth(const json& j) {
  require_object(j, "synth");
  reject_unknown(j,
                 {"preset", "frames", "bodies", "noise_sigma", "noise_relative", "camera",
                  "max_step_deg", "seed"},
                 "synth");
  const std::uint64_t seed = j.contains("seed") ? get_seed(j["seed"], "synth.seed") : 0;
  SynthConfig c = SynthConfig::two_body(seed);
  if (j.contains("preset")) {
    const std::string preset = get_as<std::string>(j["preset"], "synth.preset");
    if (preset == "two_body") {
      c = SynthConfig::two_body(seed);
    } else if (preset == "three_body") {
      c = SynthConfig::three_body(seed);
    } else {
      throw ManifestError("synth.preset must be \"two_body\" or \"three_body\"");
    }
  }
  if (j.contains("frames")) c.frames = static_cast<Index>(get_integer(j["frames"], "synth.frames"));
  if (j.contains("bodies")) {
    if (!j["bodies"].is_array()) throw ManifestError("synth.bodies must be an array");
    c.bodies.clear();
    for (std::size_t i = 0; i < j["bodies"].size(); ++i) {
      c.bodies.push_back(parse_body(j["bodies"][i], "synth.bodies[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("noise_sigma")) c.noise_sigma = get_number(j["noise_sigma"], "synth.noise_sigma");
  if (j.contains("noise_relative")) {
    c.noise_relative = get_as<bool>(j["noise_relative"], "synth.noise_relative");
  }
  if (j.contains("camera")) c.camera_mode = parse_camera_mode(get_as<std::string>(j["camera"], "synth.camera"));
  if (j.contains("max_step_deg")) c.max_step_deg = get_number(j["max_step_deg"], "synth.max_step_deg");
  try {
    c.validate();
  } catch (const ValueError& e) {
    throw ManifestError(e.what());
  }
  return c;
}

inline SolverConfig parse_solver(const json& j) {
  require_object(j, "solver");
  reject_unknown(j,
                 {"lambda1", "lambda2", "beta0", "rho", "beta_max", "epsilon", "max_iters", "seed"},
                 "solver");
  SolverConfig c;
  if (j.contains("lambda1")) c.lambda1 = get_number(j["lambda1"], "solver.lambda1");
  if (j.contains("lambda2") && !j["lambda2"].is_null()) {
    c.lambda2 = get_number(j["lambda2"], "solver.lambda2");
  }
  if (j.contains("beta0")) c.beta0 = get_number(j["beta0"], "solver.beta0");
  if (j.contains("rho")) c.rho = get_number(j["rho"], "solver.rho");
  if (j.contains("beta_max")) c.beta_max = get_number(j["beta_max"], "solver.beta_max");
  if (j.contains("epsilon")) c.epsilon = get_number(j["epsilon"], "solver.epsilon");
  if (j.contains("max_iters")) c.max_iters = static_cast<int>(get_integer(j["max_iters"], "solver.max_iters"));
  if (j.contains("seed")) c.seed = get_seed(j["seed"], "solver.seed");
  try {
    c.validate();
  } catch (const ValueError& e) {
    throw ManifestError(e.what());
  }
  return c;
}

}  // namespace detail

/// "HxW" -> (H, W)
inline std::pair<Index, Index> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  long long h = 0, w = 0;
  if (x == std::string::npos || !io::detail::parse_count(std::string_view(s).substr(0, x), h) ||
      !io::detail::parse_count(std::string_view(s).substr(x + 1), w) || h < 1 || w < 1) {
    throw ManifestError("grid must look like HxW with positive sizes, got \"" + s + "\"");
  }
  return {static_cast<Index>(h), static_cast<Index>(w)};
}

inline Command parse_command(const std::string& s) {
  if (s == "synth") return Command::synth;
  if (s == "solve") return Command::solve;
  if (s == "eval") return Command::eval;
  if (s == "pipeline") return Command::pipeline;
  throw ManifestError("unknown command \"" + s + "\"");
}

/// Builds a manifest from JSON; relative paths resolve against `base_dir`.
/// Checks that every referenced input file exists.
inline RunManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using detail::get_as;
  detail::require_object(j, "manifest");
  detail::reject_unknown(j,
                         {"format", "command", "output_dir", "inputs", "synth", "solver",
                          "clusters", "grid", "sparse"},
                         "manifest");
  if (!j.contains("format") || j["format"] != io::kFormatTag) {
    throw ManifestError("manifest format tag must be \"MBNR1\"");
  }
  RunManifest m;
  if (!j.contains("command")) throw ManifestError("manifest has no command");
  m.command = parse_command(get_as<std::string>(j["command"], "command"));
  if (!j.contains("output_dir")) throw ManifestError("manifest has no output_dir");
  m.output_dir = detail::resolve(base_dir, j["output_dir"], "output_dir");

  if (j.contains("inputs")) {
    const auto& in = detail::require_object(j["inputs"], "inputs");
    detail::reject_unknown(in,
                           {"tracks", "rotations", "init_shape", "shape_gt", "labels_gt", "shape",
                            "labels", "baselines"},
                           "inputs");
    auto path_of = [&](const char* key) -> std::optional<std::filesystem::path> {
      if (!in.contains(key)) return std::nullopt;
      return detail::resolve(base_dir, in[key], std::string("inputs.") + key);
    };
    m.inputs.tracks = path_of("tracks");
    if (in.contains("rotations") && in["rotations"] == kRigidInit) {
      m.inputs.rigid_init = true;
    } else {
      m.inputs.rotations = path_of("rotations");
    }
    m.inputs.init_shape = path_of("init_shape");
    m.inputs.shape_gt = path_of("shape_gt");
    m.inputs.labels_gt = path_of("labels_gt");
    m.inputs.shape = path_of("shape");
    m.inputs.labels = path_of("labels");
    if (in.contains("baselines")) {
      const auto& b = detail::require_object(in["baselines"], "inputs.baselines");
      for (const auto& item : b.items()) {
        m.inputs.baselines[item.key()] =
            detail::resolve(base_dir, item.value(), "inputs.baselines." + item.key());
      }
    }
  }
  if (j.contains("synth")) m.synth = detail::parse_synth(j["synth"]);
  if (j.contains("solver")) m.solver = detail::parse_solver(j["solver"]);
  if (j.contains("clusters")) {
    const long long k = detail::get_integer(j["clusters"], "clusters");
    if (k < 1) throw ManifestError("clusters must be >= 1");
    m.clusters = static_cast<int>(k);
  }
  const bool sparse = j.contains("sparse") && get_as<bool>(j["sparse"], "sparse");
  if (j.contains("grid") && !sparse) {
    const auto& g = j["grid"];
    if (g.is_string()) {
      m.grid = parse_grid(g.get<std::string>());
    } else if (g.is_array() && g.size() == 2) {
      const long long h = detail::get_integer(g[0], "grid[0]");
      const long long w = detail::get_integer(g[1], "grid[1]");
      if (h < 1 || w < 1) throw ManifestError("grid sizes must be positive");
      m.grid = std::make_pair(static_cast<Index>(h), static_cast<Index>(w));
    } else {
      throw ManifestError("grid must be \"HxW\" or [H, W]");
    }
  }

  // Required inputs per command.
  const bool has_scene = m.synth.has_value() || m.inputs.tracks.has_value();
  switch (m.command) {
    case Command::synth:
      if (!m.synth) throw ManifestError("synth command needs a synth block");
      break;
    case Command::solve:
    case Command::pipeline:
      if (!has_scene) throw ManifestError("manifest needs inputs.tracks or a synth block");
      if (!m.synth && !m.inputs.rotations && !m.inputs.rigid_init) {
        throw ManifestError("manifest needs inputs.rotations (a path or \"rigid-init\")");
      }
      break;
    case Command::eval:
      if (!(m.inputs.shape && m.inputs.shape_gt) && !(m.inputs.labels && m.inputs.labels_gt)) {
        throw ManifestError("eval needs shape + shape_gt and/or labels + labels_gt");
      }
      break;
  }

  auto must_exist = [](const std::optional<std::filesystem::path>& p, const char* key) {
    if (p && !std::filesystem::is_regular_file(*p)) {
      throw ManifestError(std::string("inputs.") + key + ": no such file " + p->string());
    }
  };
  must_exist(m.inputs.tracks, "tracks");
  must_exist(m.inputs.rotations, "rotations");
  must_exist(m.inputs.init_shape, "init_shape");
  must_exist(m.inputs.shape_gt, "shape_gt");
  must_exist(m.inputs.labels_gt, "labels_gt");
  must_exist(m.inputs.shape, "shape");
  must_exist(m.inputs.labels, "labels");
  for (const auto& [name, p] : m.inputs.baselines) must_exist(p, ("baselines." + name).c_str());
  return m;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Drivers

/// Subtracts each row mean (one per image coordinate per frame); returns the means.
inline DenseVector center_rows(DenseMatrix& m) {
  DenseVector means = m.rowwise().mean();
  m.colwise() -= means;
  return means;
}

struct MetricRow {
  std::string name;
  std::string value;
};

inline std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = "metric,value\n";
  for (const auto& r : rows) out += r.name + "," + r.value + "\n";
  return out;
}

/// pointcloud/frame_NNNN.txt with "x y z label" rows.
inline void write_pointcloud(const std::filesystem::path& dir, const Eigen::Ref<const DenseMatrix>& s,
                             const SegmentLabels& labels) {
  std::filesystem::create_directories(dir);
  const Index frames = s.rows() / 3;
  for (Index f = 0; f < frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.txt", static_cast<int>(f));
    std::string text;
    for (Index p = 0; p < s.cols(); ++p) {
      text += io::format_double(s(3 * f, p)) + " " + io::format_double(s(3 * f + 1, p)) + " " +
              io::format_double(s(3 * f + 2, p)) + " " +
              std::to_string(labels[static_cast<std::size_t>(p)]) + "\n";
    }
    io::detail::write_text(dir / name, text);
  }
}

struct LoadedScene {
  MeasurementMatrix W;
  CameraMotion R;
  std::optional<DenseMatrix> S_gt;
  std::optional<SegmentLabels> labels_gt;
};

inline void write_scene(const std::filesystem::path& dir, const SynthScene& scene) {
  std::filesystem::create_directories(dir);
  io::write_matrix(dir / "W.mtx", scene.W.data());
  io::write_matrix(dir / "W_clean.mtx", scene.W_clean.data());
  io::write_matrix(dir / "R.mtx", scene.R.stacked());
  io::write_matrix(dir / "S_gt.mtx", scene.S_gt);
  io::write_labels(dir / "labels_gt.txt", scene.labels_gt);
}

// Scene for solve / pipeline: synthesized in memory or read from inputs.
// Tracks are centered per row and the means written to centering.mtx.
inline LoadedScene load_scene(const RunManifest& m) {
  DenseMatrix w;
  std::optional<CameraMotion> r;
  LoadedScene out{MeasurementMatrix(DenseMatrix::Zero(2, 1)), CameraMotion::identity(1), {}, {}};
  if (m.synth && !m.inputs.tracks) {
    const SynthScene scene = run_stage("synth", [&] { return generate_scene(*m.synth); });
    run_stage("write", [&] { write_scene(m.output_dir / "scene", scene); });
    w = scene.W.data();
    r = scene.R;
    out.S_gt = scene.S_gt;
    out.labels_gt = scene.labels_gt;
  } else {
    w = run_stage("load", [&] { return io::read_matrix(*m.inputs.tracks); });
  }
  const DenseVector means = center_rows(w);
  run_stage("write", [&] { io::write_matrix(m.output_dir / "centering.mtx", means); });
  out.W = run_stage("load", [&] { return MeasurementMatrix(w); });

  if (!r) {
    if (m.inputs.rigid_init) {
      r = run_stage("rotations", [&] { return rigid_rotation_init(out.W); });
    } else {
      r = run_stage("load", [&] {
        CameraMotion cm = CameraMotion::from_stacked(io::read_matrix(*m.inputs.rotations));
        if (cm.frames() != out.W.frames()) {
          throw DimensionError("rotations cover " + std::to_string(cm.frames()) +
                               " frames, tracks have " + std::to_string(out.W.frames()));
        }
        return cm;
      });
    }
  }
  out.R = *r;
  run_stage("load", [&] {
    if (m.inputs.shape_gt) {
      DenseMatrix gt = io::read_matrix(*m.inputs.shape_gt);
      if (gt.rows() != 3 * out.W.frames() || gt.cols() != out.W.points()) {
        throw DimensionError("shape_gt is " + dims(gt.rows(), gt.cols()) + ", expected " +
                             dims(3 * out.W.frames(), out.W.points()));
      }
      center_rows(gt);  // same translation convention as the tracks
      out.S_gt = std::move(gt);
    }
    if (m.inputs.labels_gt) {
      SegmentLabels l = io::read_labels(*m.inputs.labels_gt);
      if (static_cast<Index>(l.size()) != out.W.points()) {
        throw DimensionError("labels_gt has " + std::to_string(l.size()) + " entries, tracks have " +
                             std::to_string(out.W.points()) + " points");
      }
      out.labels_gt = std::move(l);
    }
  });
  return out;
}

inline std::optional<NeighborMatrix> manifest_grid(const RunManifest& m, Index points) {
  if (!m.grid) return std::nullopt;
  if (m.grid->first * m.grid->second != points) {
    throw ManifestError("grid " + std::to_string(m.grid->first) + "x" +
                        std::to_string(m.grid->second) + " does not cover " +
                        std::to_string(points) + " points");
  }
  return build_neighbor_matrix(m.grid->first, m.grid->second);
}

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

inline void append_baselines(const RunManifest& m, const std::optional<SegmentLabels>& gt,
                             std::vector<MetricRow>& rows) {
  if (m.inputs.baselines.empty()) return;
  if (!gt) throw ManifestError("baseline labels need ground-truth labels");
  for (const auto& [name, path] : m.inputs.baselines) {
    const SegmentLabels b = io::read_labels(path);
    rows.push_back({"ems_baseline_" + name, io::format_double(ems(b, *gt))});
  }
}

inline void run_synth(const RunManifest& m) {
  const SynthScene scene = run_stage("synth", [&] { return generate_scene(*m.synth); });
  run_stage("write", [&] { write_scene(m.output_dir, scene); });
}

struct SolveArtifacts {
  LoadedScene scene;
  SolveResult result;
  double lambda2 = 0.0;
};

inline SolveArtifacts run_solve_stage(const RunManifest& m) {
  SolveArtifacts a{load_scene(m), {}, 0.0};
  const auto grid = run_stage("load", [&] { return manifest_grid(m, a.scene.W.points()); });
  std::optional<DenseMatrix> init;
  if (m.inputs.init_shape) init = run_stage("load", [&] { return io::read_matrix(*m.inputs.init_shape); });
  a.lambda2 = m.solver.resolved_lambda2(a.scene.W.frames(), a.scene.W.points());
  a.result = run_stage("solve", [&] { return solve(a.scene.W, a.scene.R, grid, m.solver, init); });
  run_stage("write", [&] {
    io::write_matrix(m.output_dir / "S.mtx", a.result.shape.S);
    io::write_matrix(m.output_dir / "Ssharp.mtx", a.result.shape.Ssharp);
    io::write_matrix(m.output_dir / "C.mtx", a.result.C.values());
    io::write_trace(m.output_dir / "trace.csv", a.result.trace);
  });
  return a;
}

inline std::vector<MetricRow> solve_metrics(const SolveArtifacts& a) {
  return {{"iterations", std::to_string(a.result.trace.iterations())},
          {"converged", bool_text(a.result.trace.converged)},
          {"lambda2", io::format_double(a.lambda2)},
          {"reprojection_error",
           io::format_double(reprojection_error(a.scene.W, a.scene.R, a.result.shape.S))}};
}

inline void run_solve(const RunManifest& m) {
  const SolveArtifacts a = run_solve_stage(m);
  const auto rows = run_stage("eval", [&] { return solve_metrics(a); });
  run_stage("write", [&] { io::detail::write_text(m.output_dir / "metrics.csv", metrics_to_csv(rows)); });
}

inline void run_full_pipeline(const RunManifest& m) {
  const SolveArtifacts a = run_solve_stage(m);
  const DenseMatrix affinity = run_stage("affinity", [&] { return build_affinity(a.result.C); });
  const SegmentLabels labels =
      run_stage("cluster", [&] { return spectral_cluster(affinity, m.clusters, m.solver.seed); });
  const auto rows = run_stage("eval", [&] {
    std::vector<MetricRow> r = solve_metrics(a);
    if (a.scene.S_gt) {
      const ReconstructionError e = reconstruction_error(a.result.shape.S, *a.scene.S_gt);
      r.push_back({"e3d_mean_frame", io::format_double(e.per_frame_mean)});
      r.push_back({"e3d_whole", io::format_double(e.whole)});
    }
    if (a.scene.labels_gt) r.push_back({"ems", io::format_double(ems(labels, *a.scene.labels_gt))});
    append_baselines(m, a.scene.labels_gt, r);
    return r;
  });
  run_stage("write", [&] {
    io::write_matrix(m.output_dir / "A.mtx", affinity);
    io::write_labels(m.output_dir / "labels.txt", labels);
    io::detail::write_text(m.output_dir / "metrics.csv", metrics_to_csv(rows));
    write_pointcloud(m.output_dir / "pointcloud", a.result.shape.S, labels);
  });
}

inline void run_eval(const RunManifest& m) {
  const auto rows = run_stage("eval", [&] {
    std::vector<MetricRow> r;
    std::optional<SegmentLabels> gt_labels;
    if (m.inputs.shape && m.inputs.shape_gt) {
      const DenseMatrix est = io::read_matrix(*m.inputs.shape);
      const DenseMatrix gt = io::read_matrix(*m.inputs.shape_gt);
      const ReconstructionError e = reconstruction_error(est, gt);
      r.push_back({"e3d_mean_frame", io::format_double(e.per_frame_mean)});
      r.push_back({"e3d_whole", io::format_double(e.whole)});
      if (m.inputs.tracks && m.inputs.rotations) {
        const MeasurementMatrix w(io::read_matrix(*m.inputs.tracks));
        const CameraMotion cam = CameraMotion::from_stacked(io::read_matrix(*m.inputs.rotations));
        r.push_back({"reprojection_error", io::format_double(reprojection_error(w, cam, est))});
      }
    }
    if (m.inputs.labels_gt) gt_labels = io::read_labels(*m.inputs.labels_gt);
    if (m.inputs.labels && gt_labels) {
      r.push_back({"ems", io::format_double(ems(io::read_labels(*m.inputs.labels), *gt_labels))});
    }
    append_baselines(m, gt_labels, r);
    return r;
  });
  run_stage("write", [&] { io::detail::write_text(m.output_dir / "metrics.csv", metrics_to_csv(rows)); });
}

/// Executes a manifest. Returns the process exit code; failures are reported
/// on `err` as one stage-tagged line. Non-convergence is not a failure.
inline int run_manifest(const RunManifest& m, std::ostream& err) {
  try {
    run_stage("write", [&] { std::filesystem::create_directories(m.output_dir); });
    switch (m.command) {
      case Command::synth:
        run_synth(m);
        break;
      case Command::solve:
        run_solve(m);
        break;
      case Command::eval:
        run_eval(m);
        break;
      case Command::pipeline:
        run_full_pipeline(m);
        break;
    }
    return exit_code::ok;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace mbnrsfm
