#pragma once

#include "deepc/instances.hpp"
#include "deepc/io.hpp"
#include "deepc/robustness.hpp"
#include "deepc/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace deepc::cli {

namespace fs = std::filesystem;

/// Command-line overrides applied on top of the config file.
struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<double> tol;
  std::optional<std::string> solver;
  bool emit_plot_data = false;
  bool timing = false;
  double mutate_beta = 1.0;  // test hook: scales every certified beta in `verify`
};

struct CommandResult {
  bool pass = true;
  std::vector<std::string> failures;
};

// ---- config access with key paths in error messages

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  const json& at(const std::string& key) const {
    if (!has(key)) throw Error(ErrorCode::schema, "missing config key '" + full(key) + "'");
    return j_.at(key);
  }

  Section section(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_object()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be an object");
    return Section(v, full(key));
  }

  double number(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be an integer");
    return v.get<std::int64_t>();
  }

  std::int64_t integer_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::string string(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Vector vector(const std::string& key) const {
    const auto v = numbers(key);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  Matrix matrix(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array() || v.empty() || !v[0].is_array()) {
      throw Error(ErrorCode::schema, "config key '" + full(key) + "' must be an array of rows");
    }
    Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (v[r].size() != v[0].size()) throw Error(ErrorCode::schema, "config key '" + full(key) + "' is ragged");
      for (std::size_t c = 0; c < v[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
    }
    return m;
  }

 private:
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
};

inline json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_input, "cannot open config file '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, std::string("config is not valid JSON: ") + e.what());
  }
}

inline std::uint64_t config_seed(const Section& root, const CliOptions& opt) {
  if (opt.seed) return *opt.seed;
  const std::int64_t s = root.integer("seed");
  if (s < 0) throw Error(ErrorCode::schema, "config key 'seed' must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

/// "plant" is optional: absent or {"builtin": "converter_surrogate"} gives
/// the surrogate; {"file": path} reads a model file (relative to the
/// config); otherwise A, B, C, D are given inline as arrays of rows.
inline StateSpaceModel plant_from_config(const Section& root, const fs::path& base_dir) {
  if (!root.has("plant")) return converter_surrogate();
  const Section p = root.section("plant");
  if (p.has("builtin")) {
    const std::string name = p.string("builtin");
    if (name != "converter_surrogate") throw Error(ErrorCode::schema, "unknown builtin plant '" + name + "'");
    return converter_surrogate();
  }
  if (p.has("file")) {
    fs::path f = p.string("file");
    if (f.is_relative()) f = base_dir / f;
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::invalid_input, "cannot open model file '" + f.string() + "'");
    return read_model(in);
  }
  return StateSpaceModel(p.matrix("A"), p.matrix("B"), p.matrix("C"), p.matrix("D"));
}

inline ScenarioConfig scenario_from_config(const json& j, const CliOptions& opt, const fs::path& base_dir) {
  const Section root(j, "");
  ScenarioConfig cfg;
  cfg.plant = plant_from_config(root, base_dir);

  const Section d = root.section("deepc");
  cfg.params.t_ini = d.integer("t_ini");
  cfg.params.horizon = d.integer("horizon");
  cfg.params.data_length = d.integer("data_length");
  cfg.params.lambda_y = d.number("lambda_y");
  cfg.params.lambda_g = d.number("lambda_g");
  cfg.params.r_weight = d.number("r_weight");
  cfg.params.q_weight = d.number("q_weight");
  cfg.params.k = d.integer("k");
  cfg.mode = parse_solver_mode(opt.solver ? *opt.solver : (d.has("solver") ? d.string("solver") : "closed-form"));
  cfg.order_bound = d.integer_or("order_bound", cfg.plant.n());
  cfg.lag_bound = d.integer_or("lag_bound", 1);

  const Section n = root.section("noise");
  cfg.noise.seed = config_seed(root, opt);
  cfg.noise.output_noise_power = n.number("output_noise_power");
  cfg.noise.input_dither_power = n.number("excitation_power");
  if (n.has("excitation_offset")) cfg.excitation_offset = n.vector("excitation_offset");

  const Section s = root.section("schedule");
  cfg.schedule.collect_start = s.integer("collect_start");
  cfg.schedule.collect_end = s.integer("collect_end");
  cfg.schedule.activate = s.integer("activate");
  cfg.schedule.step_time = s.integer("step_time");
  cfg.schedule.end = s.integer("end");
  cfg.schedule.p0 = s.number("p0");
  cfg.schedule.q0 = s.number("q0");
  cfg.schedule.p0_before = s.number_or("p0_before", 0.0);
  cfg.schedule.q0_before = s.number_or("q0_before", 0.0);
  cfg.sample_time = s.number_or("sample_time", 1e-3);
  if (root.has("x0")) cfg.x0 = root.vector("x0");
  cfg.validate();
  return cfg;
}

// ---- output helpers

inline fs::path out_file(const CliOptions& opt, const std::string& name) {
  fs::create_directories(opt.out_dir);
  return fs::path(opt.out_dir) / name;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write '" + path.string() + "'");
  out << text;
}

inline json metrics_json(const ScenarioMetrics& m, double lambda_g) {
  return {{"lambda_g", lambda_g},
          {"steady_state_error", to_json(m.steady_state_error)},
          {"rise_time_samples", number_to_json(m.rise_time_samples)},
          {"rise_time_s", number_to_json(m.rise_time_s)},
          {"beta_at_step", m.beta_at_step},
          {"fallback_steps", m.fallback_steps}};
}

inline json rank_json(const RankReport& r) {
  return {{"rank", r.rank}, {"target", r.target}, {"exact", r.satisfied}, {"pass", r.rank >= r.target},
          {"diagnostic", r.diagnostic}};
}

// ---- commands

/// simulate.steps samples of the plant under a zero, constant or
/// excitation input; writes trajectory.csv.
inline CommandResult cmd_simulate(const json& j, const CliOptions& opt, const fs::path& base_dir) {
  const Section root(j, "");
  const StateSpaceModel plant = plant_from_config(root, base_dir);
  const Section sim = root.section("simulate");
  const Section noise = root.section("noise");
  const std::int64_t steps = sim.integer("steps");
  if (steps < 1) throw Error(ErrorCode::schema, "config key 'simulate.steps' must be positive");
  const std::string kind = sim.string("input");
  const std::uint64_t seed = config_seed(root, opt);
  Signal u;
  if (kind == "zero") {
    u.assign(static_cast<std::size_t>(steps), Vector::Zero(plant.m()));
  } else if (kind == "constant") {
    const Vector v = sim.vector("value");
    if (v.size() != plant.m()) throw Error(ErrorCode::schema, "config key 'simulate.value' must have m entries");
    u.assign(static_cast<std::size_t>(steps), v);
  } else if (kind == "excitation") {
    const Vector off = noise.has("excitation_offset") ? noise.vector("excitation_offset") : Vector(Vector::Zero(plant.m()));
    if (off.size() != plant.m()) throw Error(ErrorCode::schema, "config key 'noise.excitation_offset' must have m entries");
    u = generate_excitation(NoiseSpec{seed, 0.0, noise.number("excitation_power")}, plant.m(), steps,
                            Signal(static_cast<std::size_t>(steps), off));
  } else {
    throw Error(ErrorCode::schema, "config key 'simulate.input' must be zero, constant or excitation");
  }
  const Vector x0 = sim.has("x0") ? sim.vector("x0") : Vector(Vector::Zero(plant.n()));
  const SimulationResult res = simulate(plant, x0, u, NoiseSpec{seed, noise.number("output_noise_power"), 0.0});
  std::ostringstream os;
  write_trajectory_csv(os, TrajectoryData{u, res.y});
  write_text(out_file(opt, "trajectory.csv"), os.str());
  return {};
}

/// Collection phase of the scenario; writes data.csv and rank.json.
inline CommandResult cmd_collect(const json& j, const CliOptions& opt, const fs::path& base_dir) {
  ScenarioConfig cfg = scenario_from_config(j, opt, base_dir);
  const CollectResult col = collect_data(cfg);
  std::ostringstream os;
  write_trajectory_csv(os, col.data, cfg.schedule.collect_start);
  write_text(out_file(opt, "data.csv"), os.str());
  write_text(out_file(opt, "rank.json"), rank_json(col.rank).dump(2) + "\n");
  CommandResult r;
  if (col.rank.rank < col.rank.target) {
    r.pass = false;
    r.failures.push_back("rank condition: " + col.rank.diagnostic);
  }
  return r;
}

inline void write_scenario_plot(const CliOptions& opt, const ScenarioConfig& cfg, const ScenarioResult& res,
                                const std::string& name) {
  std::ostringstream os;
  os << "time_s,p_ref,p_e,p_e_measured\n";
  const auto& s = cfg.schedule;
  for (std::size_t t = 0; t < res.open_loop.y.size(); ++t) {
    const double y = res.open_loop.y[t](1);
    os << format_double(static_cast<double>(t) * cfg.sample_time) << ',' << format_double(s.p0_before) << ','
       << format_double(y) << ',' << format_double(y) << '\n';
  }
  for (const auto& rec : res.log.records) {
    const auto t = s.activate + rec.step;
    os << format_double(static_cast<double>(t) * cfg.sample_time) << ',' << format_double(rec.r(1)) << ','
       << format_double(rec.y_true(1)) << ',' << format_double(rec.y(1)) << '\n';
  }
  write_text(out_file(opt, name), os.str());
}

/// Full scenario; writes log.csv and metrics.json.
inline CommandResult cmd_control(const json& j, const CliOptions& opt, const fs::path& base_dir) {
  const ScenarioConfig cfg = scenario_from_config(j, opt, base_dir);
  const ScenarioResult res = run_scenario(cfg);
  std::ostringstream os;
  write_log_csv(os, res.log, opt.timing, cfg.schedule.activate);
  write_text(out_file(opt, "log.csv"), os.str());
  json m = metrics_json(res.metrics, cfg.params.lambda_g);
  m["solver"] = to_string(cfg.mode);
  m["rank"] = rank_json(res.rank);
  write_text(out_file(opt, "metrics.json"), m.dump(2) + "\n");
  if (opt.emit_plot_data) write_scenario_plot(opt, cfg, res, "plot_step.csv");
  CommandResult r;
  if (res.metrics.fallback_steps > 0) {
    r.pass = false;
    r.failures.push_back(std::to_string(res.metrics.fallback_steps) + " steps fell back to the previous input");
  }
  return r;
}

/// Metrics table over sweep.lambda_g; writes sweep.csv.
inline CommandResult cmd_sweep(const json& j, const CliOptions& opt, const fs::path& base_dir) {
  const ScenarioConfig cfg = scenario_from_config(j, opt, base_dir);
  const Section root(j, "");
  const std::vector<double> grid = root.section("sweep").numbers("lambda_g");
  if (grid.empty()) throw Error(ErrorCode::schema, "config key 'sweep.lambda_g' must not be empty");
  std::vector<ScenarioResult> runs;
  const auto rows = sweep(cfg, grid, opt.emit_plot_data ? &runs : nullptr);
  std::ostringstream os;
  os << "lambda_g,rise_time_samples,rise_time_s";
  for (Eigen::Index i = 0; i < cfg.plant.p(); ++i) os << ",sse_y" << i + 1;
  os << ",beta_at_step,fallback_steps\n";
  CommandResult r;
  for (const auto& row : rows) {
    os << format_double(row.lambda_g) << ',' << format_double(row.metrics.rise_time_samples) << ','
       << format_double(row.metrics.rise_time_s);
    for (Eigen::Index i = 0; i < row.metrics.steady_state_error.size(); ++i) {
      os << ',' << format_double(row.metrics.steady_state_error(i));
    }
    os << ',' << format_double(row.metrics.beta_at_step) << ',' << row.metrics.fallback_steps << '\n';
    if (row.metrics.fallback_steps > 0) {
      r.pass = false;
      r.failures.push_back("lambda_g " + format_double(row.lambda_g) + ": solver fallback");
    }
  }
  write_text(out_file(opt, "sweep.csv"), os.str());
  if (opt.emit_plot_data) {
    std::ostringstream ps;
    ps << "time_s,p_ref";
    for (double lg : grid) ps << ",p_e_lambda_" << format_double(lg);
    ps << '\n';
    const auto& s = cfg.schedule;
    for (std::size_t k = 0; k < runs.front().log.records.size(); ++k) {
      const auto& r0 = runs.front().log.records[k];
      ps << format_double(static_cast<double>(s.activate + r0.step) * cfg.sample_time) << ',' << format_double(r0.r(1));
      for (const auto& run : runs) ps << ',' << format_double(run.log.records[k].y_true(1));
      ps << '\n';
    }
    write_text(out_file(opt, "plot_sweep.csv"), ps.str());
  }
  return r;
}

/// Shape of verification instance i: H in [5, 30], boxes on odd i,
/// two equality rows on every third.
inline InstanceShape verify_shape(std::int64_t i, std::int64_t max_columns) {
  InstanceShape shape;
  const std::int64_t span = std::max<std::int64_t>(1, max_columns - 4);
  shape.columns = 5 + (i * 7) % span;
  shape.rows = shape.columns + 10;
  shape.box_rows = (i % 2 == 1) ? shape.columns / 2 : 0;
  shape.equalities = (i % 3 == 0) ? 2 : 0;
  return shape;
}

/// Robustness checks over seeded random instances; writes reports.json
/// and summary.txt.
inline CommandResult cmd_verify(const json& j, const CliOptions& opt) {
  const Section root(j, "");
  const Section v = root.section("verify");
  const std::uint64_t seed = config_seed(root, opt);
  const std::int64_t instances = v.integer("instances");
  const std::vector<double> lambdas = v.numbers("lambda_g");
  const std::vector<double> grid = v.numbers("grid");
  VerifyOptions vo;
  vo.tol = opt.tol ? *opt.tol : v.number_or("tol", 1e-6);
  vo.samples = static_cast<int>(v.integer("samples"));
  vo.beta_scale = opt.mutate_beta;
  const std::int64_t max_cols = v.integer_or("max_columns", 30);

  json reports = json::array();
  std::ostringstream summary;
  CommandResult res;
  auto record = [&](RobustnessReport rep, std::uint64_t inst_seed) {
    rep.instance_seed = inst_seed;
    summary << summary_line(rep) << '\n';
    if (!rep.pass) {
      res.pass = false;
      res.failures.push_back(summary_line(rep));
    }
    reports.push_back(to_json(rep));
  };
  for (std::int64_t i = 0; i < instances; ++i) {
    const std::uint64_t inst_seed = seed + static_cast<std::uint64_t>(i);
    const AssembledProblem prob = random_instance(inst_seed, verify_shape(i, max_cols));
    for (double lg : lambdas) {
      vo.seed = inst_seed;
      record(verify_theorem1(prob, lg, vo), inst_seed);
      record(verify_corollary1(prob, lg, vo), inst_seed);
    }
    if (!grid.empty()) record(beta_sweep(prob, grid), inst_seed);
  }
  write_text(out_file(opt, "reports.json"), reports.dump(2) + "\n");
  write_text(out_file(opt, "summary.txt"), summary.str());
  return res;
}

/// Parses argv and dispatches. Exit codes: 0 all checks pass, 1 a check
/// failed, 2 usage/config/runtime error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"DeePC toolkit: data collection, closed-loop runs, robustness verification and sweeps"};
  CliOptions opt;
  std::uint64_t seed = 0;
  double tol = 0.0;
  std::string solver;
  app.add_option("--config", opt.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
  auto* tol_opt = app.add_option("--tol", tol, "tolerance override (verify value tolerance)");
  auto* solver_opt = app.add_option("--solver", solver, "qp or closed-form")->check(CLI::IsMember({"qp", "closed-form"}));
  app.add_flag("--emit-plot-data", opt.emit_plot_data, "write step-response CSV for plotting");
  app.add_flag("--timing", opt.timing, "fill the solve_ms column (breaks byte-identical output)");
  app.add_option("--mutate-beta", opt.mutate_beta, "test hook: scale certified beta in verify")->group("");
  app.fallthrough();
  app.require_subcommand(1, 1);
  for (const char* name : {"simulate", "collect", "control", "verify", "sweep"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();
  if (*seed_opt) opt.seed = seed;
  if (*tol_opt) opt.tol = tol;
  if (*solver_opt) opt.solver = solver;

  json summary = {{"command", opt.subcommand}};
  try {
    const json cfg = load_config(opt.config_path);
    const fs::path base = fs::path(opt.config_path).parent_path();
    CommandResult r;
    if (opt.subcommand == "simulate") r = cmd_simulate(cfg, opt, base);
    else if (opt.subcommand == "collect") r = cmd_collect(cfg, opt, base);
    else if (opt.subcommand == "control") r = cmd_control(cfg, opt, base);
    else if (opt.subcommand == "verify") r = cmd_verify(cfg, opt);
    else r = cmd_sweep(cfg, opt, base);
    summary["pass"] = r.pass;
    summary["failures"] = r.failures;
    out << summary.dump() << '\n';
    return r.pass ? 0 : 1;
  } catch (const Error& e) {
    summary["pass"] = false;
    summary["error"] = to_string(e.code());
    summary["failures"] = {e.what()};
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    out << summary.dump() << '\n';
    return 2;
  }
}

}  // namespace deepc::cli
