#include "deepc/cli.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace deepc;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(DEEPC_SOURCE_DIR) / "configs";

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "deepc_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("deepc_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json base_config() { return cli::load_config((kConfigs / "scenario.json").string()); }

fs::path write_config(const fs::path& dir, const json& cfg) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

/// Shorter storyline so QP-mode runs stay quick.
json short_config() {
  json cfg = base_config();
  cfg["deepc"]["data_length"] = 200;
  cfg["schedule"] = {{"collect_start", 10}, {"collect_end", 210}, {"activate", 260},
                     {"step_time", 280},    {"end", 340},         {"p0", 0.3},
                     {"q0", 0.0}};
  return cfg;
}

}  // namespace

TEST(Cli, RequiresSubcommandAndConfig) {
  EXPECT_EQ(run_cli({"--config", (kConfigs / "scenario.json").string()}).code, 2);
  EXPECT_EQ(run_cli({"simulate"}).code, 2);
  EXPECT_EQ(run_cli({"--config", "/nonexistent.json", "simulate"}).code, 2);
}

TEST(CliSimulate, ZeroInputDecays) {
  const fs::path d = scratch("sim_zero");
  json cfg = base_config();
  cfg["simulate"] = {{"steps", 400}, {"input", "zero"}, {"x0", {1, -1, 0.5, 0.2, 0.1}}};
  const CliRun r = run_cli({"--config", write_config(d, cfg).string(), "--out", d.string(), "simulate"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(d / "trajectory.csv");
  const TrajectoryData t = read_trajectory_csv(in);
  ASSERT_EQ(t.length(), 400);
  EXPECT_GT(t.y.front().norm(), 0.5);
  EXPECT_LT(t.y.back().norm(), 1e-4 * t.y.front().norm());
}

TEST(CliSimulate, SeededNoiseAndGoldenAgreement) {
  const fs::path d = scratch("sim_noise");
  json cfg = base_config();
  cfg["noise"]["output_noise_power"] = 1e-4;
  const std::string path = write_config(d, cfg).string();
  ASSERT_EQ(run_cli({"--config", path, "--out", (d / "a").string(), "simulate"}).code, 0);
  ASSERT_EQ(run_cli({"--config", path, "--out", (d / "b").string(), "simulate"}).code, 0);
  ASSERT_EQ(run_cli({"--config", path, "--out", (d / "c").string(), "--seed", "9", "simulate"}).code, 0);
  const std::string a = slurp(d / "a" / "trajectory.csv");
  EXPECT_EQ(a, slurp(d / "b" / "trajectory.csv"));
  EXPECT_NE(a, slurp(d / "c" / "trajectory.csv"));

  // same computation through the library
  const StateSpaceModel plant = converter_surrogate();
  const Signal u = generate_excitation(NoiseSpec{0, 0.0, 1e-3}, 3, 200, Signal(200, Vector{{0.0, 0.2, 0.0}}));
  const SimulationResult sim = simulate(plant, Vector::Zero(5), u, NoiseSpec{0, 1e-4, 0.0});
  std::ostringstream golden;
  write_trajectory_csv(golden, TrajectoryData{u, sim.y});
  EXPECT_EQ(a, golden.str());
}

TEST(CliSimulate, ModelFileMatchesBuiltin) {
  const fs::path d = scratch("sim_model");
  json cfg = base_config();
  cfg["plant"] = {{"file", (kConfigs / "surrogate.model").string()}};
  ASSERT_EQ(run_cli({"--config", write_config(d, cfg).string(), "--out", (d / "f").string(), "simulate"}).code, 0);
  ASSERT_EQ(run_cli({"--config", (kConfigs / "scenario.json").string(), "--out", (d / "b").string(), "simulate"}).code, 0);
  EXPECT_EQ(slurp(d / "f" / "trajectory.csv"), slurp(d / "b" / "trajectory.csv"));
}

TEST(CliCollect, DefaultRankReportAndZeroExcitation) {
  const fs::path d = scratch("collect");
  const std::string cfg = (kConfigs / "scenario.json").string();
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "a").string(), "collect"}).code, 0);
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "b").string(), "collect"}).code, 0);
  const json rank = json::parse(slurp(d / "a" / "rank.json"));
  EXPECT_TRUE(rank.at("pass").get<bool>());
  EXPECT_EQ(rank.at("rank").get<int>(), 3 * 18 + 5);
  EXPECT_EQ(rank.at("target").get<int>(), 3 * 18 + 5);
  EXPECT_EQ(slurp(d / "a" / "data.csv"), slurp(d / "b" / "data.csv"));

  json zero = base_config();
  zero["noise"]["excitation_power"] = 0.0;
  const CliRun r = run_cli({"--config", write_config(d, zero).string(), "--out", (d / "z").string(), "collect"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(json::parse(slurp(d / "z" / "rank.json")).at("pass").get<bool>());
  EXPECT_NE(r.out.find("\"pass\":false"), std::string::npos);
}

TEST(CliControl, MissingKeyIsNamed) {
  const fs::path d = scratch("control_missing");
  json cfg = base_config();
  cfg["deepc"].erase("lambda_g");
  const CliRun r = run_cli({"--config", write_config(d, cfg).string(), "--out", d.string(), "control"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("deepc.lambda_g"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("schema"), std::string::npos);
}

TEST(CliControl, DefaultsTrackReference) {
  const fs::path d = scratch("control_default");
  const CliRun r = run_cli({"--config", (kConfigs / "scenario.json").string(), "--out", d.string(), "--emit-plot-data",
                         "control"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(slurp(d / "metrics.json"));
  EXPECT_LT(m.at("steady_state_error").at(1).get<double>(), 1e-3);
  EXPECT_TRUE(fs::exists(d / "plot_step.csv"));
  std::string header;
  std::getline(std::istringstream(slurp(d / "log.csv")), header);
  EXPECT_EQ(header, "step,u1,u2,u3,y1,y2,y3,r1,r2,r3,beta,objective,status,solve_ms");
}

TEST(CliControl, SolverModesAgreeWhenUnconstrained) {
  const fs::path d = scratch("control_modes");
  const std::string cfg = write_config(d, short_config()).string();
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "cf").string(), "--solver", "closed-form", "control"}).code, 0);
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "qp").string(), "--solver", "qp", "control"}).code, 0);
  std::ifstream a(d / "cf" / "log.csv"), b(d / "qp" / "log.csv");
  std::string la, lb;
  std::getline(a, la);
  std::getline(b, lb);
  int rows = 0;
  while (std::getline(a, la) && std::getline(b, lb)) {
    std::istringstream sa(la), sb(lb);
    std::string ca, cb;
    for (int col = 0; col < 4; ++col) {  // step, u1..u3
      std::getline(sa, ca, ',');
      std::getline(sb, cb, ',');
      EXPECT_NEAR(parse_double(ca), parse_double(cb), 1e-6);
    }
    ++rows;
  }
  EXPECT_EQ(rows, 80);
}

TEST(CliVerify, BatchPassesAndMutationFails) {
  const fs::path d = scratch("verify");
  const std::string cfg = (kConfigs / "scenario.json").string();
  const CliRun ok = run_cli({"--config", cfg, "--out", (d / "ok").string(), "verify"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  const json reports = json::parse(slurp(d / "ok" / "reports.json"));
  EXPECT_EQ(reports.size(), 50u * 7u);
  for (const auto& j : reports) EXPECT_EQ(to_json(report_from_json(j)), j);

  json small = base_config();
  small["verify"]["instances"] = 5;
  const CliRun bad = run_cli({"--config", write_config(d, small).string(), "--out", (d / "bad").string(),
                           "--mutate-beta", "0.5", "verify"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(slurp(d / "bad" / "summary.txt").find("FAIL theorem1"), std::string::npos);
}

TEST(CliSweep, ThreeRowsMonotoneAndDeterministic) {
  const fs::path d = scratch("sweep");
  const std::string cfg = (kConfigs / "scenario.json").string();
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "a").string(), "--emit-plot-data", "sweep"}).code, 0);
  ASSERT_EQ(run_cli({"--config", cfg, "--out", (d / "b").string(), "--emit-plot-data", "sweep"}).code, 0);
  const std::string a = slurp(d / "a" / "sweep.csv");
  EXPECT_EQ(a, slurp(d / "b" / "sweep.csv"));
  EXPECT_EQ(slurp(d / "a" / "plot_sweep.csv"), slurp(d / "b" / "plot_sweep.csv"));
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  std::vector<double> rise;
  while (std::getline(in, line)) rise.push_back(parse_double(line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1)));
  ASSERT_EQ(rise.size(), 3u);
  EXPECT_LT(rise[0], rise[1]);
  EXPECT_LT(rise[1], rise[2]);
}
