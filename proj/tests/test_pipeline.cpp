#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mbnrsfm/mbnrsfm.hpp"

using namespace mbnrsfm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("mbnrsfm_pipe_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  json base(const std::string& command, const std::string& out) const {
    return json{{"format", "MBNR1"}, {"command", command}, {"output_dir", (dir_ / out).string()}};
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> metrics(const fs::path& p) {
  std::map<std::string, std::string> out;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MBNRSFM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(PipelineTest, ManifestValidation) {
  auto code_of = [&](const json& j) {
    try {
      parse_manifest(j, dir_);
    } catch (const std::exception& e) {
      return exit_code_for(e);
    }
    return 0;
  };
  json j = base("pipeline", "out");
  j["synth"] = json::object();
  EXPECT_EQ(code_of(j), 0);

  json bad = j;
  bad["format"] = "MBNR2";
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad.erase("format");
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["command"] = "dance";
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["surprise"] = 1;
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["solver"] = {{"rho", 0.5}};
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["solver"] = {{"max_iters", "many"}};
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["clusters"] = 0;
  EXPECT_EQ(code_of(bad), exit_code::manifest);
  bad = j;
  bad["grid"] = "6by10";
  EXPECT_EQ(code_of(bad), exit_code::manifest);

  json missing = base("solve", "out");
  missing["inputs"] = {{"tracks", "nope.mtx"}, {"rotations", "rigid-init"}};
  EXPECT_EQ(code_of(missing), exit_code::manifest);
  json no_rot = base("solve", "out");
  std::ofstream(dir_ / "W.mtx") << "MBNR1 matrix 2 2\n1 2\n3 4\n";
  no_rot["inputs"] = {{"tracks", "W.mtx"}};
  EXPECT_EQ(code_of(no_rot), exit_code::manifest);
  no_rot["inputs"]["rotations"] = "rigid-init";
  EXPECT_EQ(code_of(no_rot), 0);
  EXPECT_TRUE(parse_manifest(no_rot, dir_).inputs.rigid_init);
}

TEST_F(PipelineTest, RelativePathsResolveAgainstManifestDirectory) {
  std::ofstream(dir_ / "W.mtx") << "MBNR1 matrix 2 2\n1 2\n3 4\n";
  json j = {{"format", "MBNR1"}, {"command", "solve"}, {"output_dir", "out"},
            {"inputs", {{"tracks", "W.mtx"}, {"rotations", "W.mtx"}}}};
  std::ofstream(dir_ / "m.json") << j.dump();
  const RunManifest m = load_manifest(dir_ / "m.json");
  EXPECT_EQ(m.output_dir, dir_ / "out");
  EXPECT_EQ(*m.inputs.tracks, dir_ / "W.mtx");
}

TEST_F(PipelineTest, DefaultTwoBodySegmentsPerfectly) {
  json j = base("pipeline", "run");
  j["synth"] = {{"preset", "two_body"}};
  std::ostringstream err;
  ASSERT_EQ(run_manifest(parse_manifest(j, dir_), err), 0) << err.str();
  const fs::path out = dir_ / "run";
  for (const char* f : {"S.mtx", "Ssharp.mtx", "C.mtx", "A.mtx", "labels.txt", "trace.csv", "metrics.csv",
                        "centering.mtx", "scene/W.mtx", "scene/labels_gt.txt", "pointcloud/frame_0000.txt",
                        "pointcloud/frame_0029.txt"}) {
    EXPECT_TRUE(fs::is_regular_file(out / f)) << f;
  }
  const SegmentLabels labels = io::read_labels(out / "labels.txt");
  const SegmentLabels gt = io::read_labels(out / "scene/labels_gt.txt");
  EXPECT_EQ(ems(labels, gt), 0.0);
  const auto m = metrics(out / "metrics.csv");
  EXPECT_EQ(m.at("ems"), "0");
  EXPECT_TRUE(m.count("e3d_mean_frame") && m.count("e3d_whole") && m.count("reprojection_error"));

  // trace rows match the iteration count; the converged flag agrees with the last row.
  const SolverTrace trace = io::read_trace(out / "trace.csv");
  EXPECT_EQ(std::to_string(trace.records.size()), m.at("iterations"));
  const Residuals& last = trace.records.back().residuals;
  const double worst = std::max({last.r1, last.r2, last.r3, last.r4});
  EXPECT_EQ(worst <= 1e-4, trace.converged);
  EXPECT_EQ(m.at("converged"), trace.converged ? "true" : "false");

  // Point cloud rows are "x y z label".
  std::istringstream frame(slurp(out / "pointcloud/frame_0000.txt"));
  double x, y, z;
  int label;
  ASSERT_TRUE(frame >> x >> y >> z >> label);
  EXPECT_EQ(label, labels[0]);
}

TEST_F(PipelineTest, ZeroIterationsWritesInitialState) {
  json j = base("pipeline", "run");
  j["synth"] = json::object();
  j["solver"] = {{"max_iters", 0}};
  std::ostringstream err;
  ASSERT_EQ(run_manifest(parse_manifest(j, dir_), err), 0) << err.str();
  const SolverTrace t = io::read_trace(dir_ / "run/trace.csv");
  EXPECT_FALSE(t.converged);
  EXPECT_TRUE(t.records.empty());
  EXPECT_EQ(slurp(dir_ / "run/trace.csv").rfind("# converged=false iterations=0\n", 0), 0u);
  EXPECT_EQ(io::read_matrix(dir_ / "run/C.mtx").norm(), 0.0);
}

TEST_F(PipelineTest, RerunsAreByteIdentical) {
  json a = base("pipeline", "a");
  a["synth"] = {{"preset", "three_body"}, {"seed", 4}, {"noise_sigma", 0.01}, {"noise_relative", true}};
  a["clusters"] = 3;
  a["solver"] = {{"max_iters", 60}};
  json b = a;
  b["output_dir"] = (dir_ / "b").string();
  std::ostringstream err;
  ASSERT_EQ(run_manifest(parse_manifest(a, dir_), err), 0) << err.str();
  ASSERT_EQ(run_manifest(parse_manifest(b, dir_), err), 0) << err.str();
  const auto ta = tree(dir_ / "a"), tb = tree(dir_ / "b");
  EXPECT_GT(ta.size(), 30u);
  EXPECT_TRUE(ta == tb);
}

TEST_F(PipelineTest, SolveFromFilesCentersTracks) {
  json s = base("synth", "scene");
  s["synth"] = {{"seed", 2}};
  std::ostringstream err;
  ASSERT_EQ(run_manifest(parse_manifest(s, dir_), err), 0) << err.str();

  // Shift the tracks; centering at load must undo it.
  DenseMatrix w = io::read_matrix(dir_ / "scene/W.mtx");
  w.array() += 5.0;
  io::write_matrix(dir_ / "W_shift.mtx", w);
  json j = base("pipeline", "run");
  j["inputs"] = {{"tracks", (dir_ / "W_shift.mtx").string()},
                 {"rotations", (dir_ / "scene/R.mtx").string()},
                 {"shape_gt", (dir_ / "scene/S_gt.mtx").string()},
                 {"labels_gt", (dir_ / "scene/labels_gt.txt").string()},
                 {"baselines", {{"truth", (dir_ / "scene/labels_gt.txt").string()}}}};
  ASSERT_EQ(run_manifest(parse_manifest(j, dir_), err), 0) << err.str();
  const DenseMatrix means = io::read_matrix(dir_ / "run/centering.mtx");
  EXPECT_LE((means.array() - 5.0).abs().maxCoeff(), 1e-12);
  const auto m = metrics(dir_ / "run/metrics.csv");
  EXPECT_EQ(m.at("ems_baseline_truth"), "0");
  EXPECT_TRUE(m.count("e3d_mean_frame"));
}

TEST_F(PipelineTest, StageTaggedFailures) {
  std::ofstream(dir_ / "W.mtx") << "MBNR1 matrix 4 3\n1 2 3\n4 5 6\n7 8 9\n1 0 0\n";
  std::ofstream(dir_ / "R.mtx") << "MBNR1 matrix 2 3\n1 0 0\n0 1 0\n";
  json j = base("solve", "run");
  j["inputs"] = {{"tracks", (dir_ / "W.mtx").string()}, {"rotations", (dir_ / "R.mtx").string()}};
  std::ostringstream err;
  EXPECT_EQ(run_manifest(parse_manifest(j, dir_), err), exit_code::manifest);
  EXPECT_NE(err.str().find("[load]"), std::string::npos) << err.str();

  std::ofstream(dir_ / "bad.mtx") << "MBNR1 matrix 4 3\n1 2 3\n";
  j["inputs"]["tracks"] = (dir_ / "bad.mtx").string();
  err.str("");
  EXPECT_EQ(run_manifest(parse_manifest(j, dir_), err), exit_code::parse);
  EXPECT_NE(err.str().find("[load]"), std::string::npos) << err.str();
  EXPECT_NE(err.str().find("bad.mtx"), std::string::npos) << err.str();

  // Rank-deficient tracks make the rotation initializer fail numerically.
  std::ofstream(dir_ / "flat.mtx") << "MBNR1 matrix 4 3\n1 2 3\n1 2 3\n1 2 3\n1 2 3\n";
  j["inputs"] = {{"tracks", (dir_ / "flat.mtx").string()}, {"rotations", "rigid-init"}};
  err.str("");
  EXPECT_EQ(run_manifest(parse_manifest(j, dir_), err), exit_code::numerical);
  EXPECT_NE(err.str().find("[rotations]"), std::string::npos) << err.str();
}

TEST_F(PipelineTest, EvalCommand) {
  DenseMatrix gt(3, 2);
  gt << 1, 2, 3, 4, 5, 6;
  io::write_matrix(dir_ / "gt.mtx", gt);
  io::write_matrix(dir_ / "est.mtx", 1.1 * gt);
  io::write_labels(dir_ / "l.txt", SegmentLabels(std::vector<int>{1, 0}));
  io::write_labels(dir_ / "g.txt", SegmentLabels(std::vector<int>{0, 1}));
  json j = base("eval", "ev");
  j["inputs"] = {{"shape", "est.mtx"}, {"shape_gt", "gt.mtx"}, {"labels", "l.txt"}, {"labels_gt", "g.txt"}};
  std::ostringstream err;
  ASSERT_EQ(run_manifest(parse_manifest(j, dir_), err), 0) << err.str();
  const auto m = metrics(dir_ / "ev/metrics.csv");
  EXPECT_NEAR(std::stod(m.at("e3d_mean_frame")), 0.1, 1e-12);
  EXPECT_EQ(m.at("ems"), "0");
}

TEST_F(PipelineTest, CliExitCodes) {
  const fs::path log = dir_ / "log.txt";
  EXPECT_EQ(run_cli("synth --out " + (dir_ / "s").string() + " --seed 1", log), 0) << slurp(log);
  EXPECT_TRUE(fs::is_regular_file(dir_ / "s/W.mtx"));

  const std::string scene = (dir_ / "s").string();
  EXPECT_EQ(run_cli("solve --tracks " + scene + "/W.mtx --rotations " + scene + "/R.mtx --max-iters 5 --out " +
                        (dir_ / "solve").string(),
                    log),
            0)
      << slurp(log);
  EXPECT_EQ(metrics(dir_ / "solve/metrics.csv").at("iterations"), "5");

  std::ofstream(dir_ / "bad.mtx") << "MBNR1 matrix 2 2\n1 2 3\n4 5\n";
  EXPECT_EQ(run_cli("solve --tracks " + (dir_ / "bad.mtx").string() + " --rotations rigid-init --out " +
                        (dir_ / "x").string(),
                    log),
            exit_code::parse);
  EXPECT_NE(slurp(log).find("line 2"), std::string::npos) << slurp(log);

  EXPECT_EQ(run_cli("solve --tracks " + scene + "/W.mtx --rotations " + scene + "/R.mtx --rho 0.5 --out " +
                        (dir_ / "x").string(),
                    log),
            exit_code::manifest);
  EXPECT_EQ(run_cli("frobnicate", log), exit_code::manifest);
  EXPECT_EQ(run_cli("run " + (dir_ / "missing.json").string(), log), exit_code::manifest);
  std::ofstream(dir_ / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli("run " + (dir_ / "broken.json").string(), log), exit_code::manifest);

  json j = base("pipeline", "viajson");
  j["synth"] = {{"seed", 3}};
  j["solver"] = {{"max_iters", 3}};
  std::ofstream(dir_ / "m.json") << j.dump(2);
  EXPECT_EQ(run_cli("run " + (dir_ / "m.json").string(), log), 0) << slurp(log);
  EXPECT_TRUE(fs::is_regular_file(dir_ / "viajson/labels.txt"));
}
