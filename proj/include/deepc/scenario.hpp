#pragma once

#include "deepc/controller.hpp"
#include "deepc/hankel.hpp"
#include "deepc/plant.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace deepc {

/// I_N kron (0, P0, Q0); output order is (V_q, P_E, Q_E).
inline Vector build_reference(double p0, double q0, Eigen::Index horizon) {
  if (horizon < 1) throw Error(ErrorCode::invalid_input, "N must be positive");
  Vector r(3 * horizon);
  for (Eigen::Index i = 0; i < horizon; ++i) r.segment(3 * i, 3) << 0.0, p0, q0;
  return r;
}

struct DeePCParams {
  Eigen::Index t_ini = 6;
  Eigen::Index horizon = 12;
  Eigen::Index data_length = 500;  // T
  double lambda_y = 1e4;
  double r_weight = 1.0;    // R = r_weight I
  double q_weight = 400.0;  // Q = q_weight I
  double lambda_g = 10.0;
  Eigen::Index k = 1;
};

inline DeePCParams default_params() { return {}; }

/// Sample-indexed storyline. With a 1 ms sample time the defaults put
/// collection at 0.5 s, activation at 1.5 s and the step at 2 s.
struct ScenarioSchedule {
  std::int64_t collect_start = 500;
  std::int64_t collect_end = 1000;
  std::int64_t activate = 1500;
  std::int64_t step_time = 2000;
  std::int64_t end = 3000;
  double p0_before = 0.0;
  double q0_before = 0.0;
  double p0 = 0.3;
  double q0 = 0.0;
};

struct ScenarioConfig {
  StateSpaceModel plant = converter_surrogate();
  Vector x0;  // empty means zero
  double sample_time = 1e-3;
  DeePCParams params;
  SolverMode mode = SolverMode::closed_form;
  Eigen::Index order_bound = 5;
  Eigen::Index lag_bound = 2;
  NoiseSpec noise{0, 0.0, 1e-3};
  Vector excitation_offset;  // empty means (0, 0.2, 0, ...)
  ScenarioSchedule schedule;
  std::optional<BoxBounds> box_u;
  std::optional<BoxBounds> box_y;

  void validate() const {
    plant.validate();
    noise.validate();
    const auto& s = schedule;
    if (!(0 <= s.collect_start && s.collect_start < s.collect_end && s.collect_end <= s.activate &&
          s.activate < s.step_time && s.step_time < s.end)) {
      throw Error(ErrorCode::invalid_input, "schedule times must be increasing: collect_start < collect_end <= "
                                            "activate < step_time < end");
    }
    if (s.collect_end - s.collect_start < params.data_length) {
      throw Error(ErrorCode::invalid_input, "collect window is shorter than T");
    }
    if (s.activate - s.collect_start < params.t_ini) throw Error(ErrorCode::invalid_input, "activation too early");
    if (plant.p() != 3) throw Error(ErrorCode::invalid_input, "reference construction assumes p = 3");
    if (x0.size() != 0 && x0.size() != plant.n()) throw Error(ErrorCode::invalid_input, "x0 has wrong dimension");
    if (excitation_offset.size() != 0 && excitation_offset.size() != plant.m()) {
      throw Error(ErrorCode::invalid_input, "excitation offset has wrong width");
    }
  }
};

struct ScenarioMetrics {
  Vector steady_state_error;  // per output, mean |y - r| over the final 20% of the closed-loop run
  double rise_time_samples = std::numeric_limits<double>::infinity();
  double rise_time_s = std::numeric_limits<double>::infinity();
  double beta_at_step = 0.0;
  std::int64_t fallback_steps = 0;
};

struct ScenarioResult {
  TrajectoryData open_loop;  // samples [0, activate)
  TrajectoryData data;       // collected window fed to the controller
  RankReport rank;
  ClosedLoopLog log;         // samples [activate, end)
  ScenarioMetrics metrics;
};

namespace detail {

inline ScenarioMetrics scenario_metrics(const ScenarioConfig& cfg, const ClosedLoopLog& log) {
  ScenarioMetrics mt;
  const auto& s = cfg.schedule;
  const std::size_t n = log.records.size();
  const std::size_t tail = std::max<std::size_t>(1, n / 5);
  const Eigen::Index p = cfg.plant.p();
  mt.steady_state_error = Vector::Zero(p);
  for (std::size_t i = n - tail; i < n; ++i) {
    mt.steady_state_error += (log.records[i].y_true - log.records[i].r).cwiseAbs();
  }
  mt.steady_state_error /= static_cast<double>(tail);

  // samples from the step to the first crossing of 90% of its magnitude
  const double delta = s.p0 - s.p0_before;
  const std::size_t first = static_cast<std::size_t>(s.step_time - s.activate);
  if (delta != 0.0) {
    for (std::size_t i = first; i < n; ++i) {
      if ((log.records[i].y_true(1) - s.p0_before) / delta >= 0.9) {
        mt.rise_time_samples = static_cast<double>(i - first);
        mt.rise_time_s = mt.rise_time_samples * cfg.sample_time;
        break;
      }
    }
  }
  if (first < n) mt.beta_at_step = log.records[first].beta;
  for (const auto& r : log.records) mt.fallback_steps += r.fallback;
  return mt;
}

}  // namespace detail

struct CollectResult {
  TrajectoryData open_loop;  // samples [0, activate)
  TrajectoryData data;       // the T collected samples
  RankReport rank;
  Vector final_state;        // plant state at activation
};

/// Open-loop phase: zero input except for the excitation window starting
/// at collect_start, measured with output noise.
inline CollectResult collect_data(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto& s = cfg.schedule;
  const auto& par = cfg.params;
  const Eigen::Index m = cfg.plant.m();
  const Eigen::Index L = par.t_ini + par.horizon;

  Vector offset = cfg.excitation_offset;
  if (offset.size() == 0) {
    offset = Vector::Zero(m);
    if (m > 1) offset(1) = 0.2;
  }
  const Signal base(static_cast<std::size_t>(par.data_length), offset);
  // without dither the rank check below reports the deficit
  const Signal excitation = cfg.noise.input_dither_power > 0.0
                                ? generate_excitation(cfg.noise, m, par.data_length, base, L + cfg.order_bound)
                                : generate_excitation(cfg.noise, m, par.data_length, base);

  Signal u_open(static_cast<std::size_t>(s.activate), Vector::Zero(m));
  for (Eigen::Index i = 0; i < par.data_length; ++i) u_open[static_cast<std::size_t>(s.collect_start + i)] = excitation[i];
  const Vector x0 = cfg.x0.size() ? cfg.x0 : Vector(Vector::Zero(cfg.plant.n()));
  SimulationResult sim = simulate(cfg.plant, x0, u_open, NoiseSpec{cfg.noise.seed, cfg.noise.output_noise_power, 0.0});

  CollectResult out;
  const auto b = static_cast<std::ptrdiff_t>(s.collect_start);
  const auto e = b + static_cast<std::ptrdiff_t>(par.data_length);
  out.data.u.assign(u_open.begin() + b, u_open.begin() + e);
  out.data.y.assign(sim.y.begin() + b, sim.y.begin() + e);
  out.open_loop.u = std::move(u_open);
  out.open_loop.y = std::move(sim.y);
  out.final_state = std::move(sim.final_state);
  out.rank = rank_condition(out.data, L, cfg.order_bound);
  return out;
}

/// Collect -> activate -> reference step on the configured plant.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  CollectResult col = collect_data(cfg);
  const auto& s = cfg.schedule;
  const auto& par = cfg.params;
  const Eigen::Index m = cfg.plant.m();
  ScenarioResult out;
  out.open_loop = std::move(col.open_loop);
  out.data = std::move(col.data);
  out.rank = col.rank;
  // noisy data is full rank, so only a deficit aborts
  if (out.rank.rank < out.rank.target) {
    throw Error(ErrorCode::data_insufficiency, "collected data fails the rank condition: " + out.rank.diagnostic);
  }

  ControllerOptions opt;
  opt.t_ini = par.t_ini;
  opt.horizon = par.horizon;
  opt.k = par.k;
  opt.weights.R = par.r_weight * Matrix::Identity(m * par.horizon, m * par.horizon);
  opt.weights.Q = par.q_weight * Matrix::Identity(3 * par.horizon, 3 * par.horizon);
  opt.weights.lambda_y = par.lambda_y;
  opt.weights.lambda_g = par.lambda_g;
  opt.weights.r = build_reference(s.p0_before, s.q0_before, par.horizon);
  opt.box_u = cfg.box_u;
  opt.box_y = cfg.box_y;
  opt.mode = cfg.mode;
  opt.order_bound = cfg.order_bound;
  opt.lag_bound = cfg.lag_bound;
  Controller ctrl(out.data, opt);

  const auto a = static_cast<std::ptrdiff_t>(s.activate);
  const auto& ou = out.open_loop.u;
  const auto& oy = out.open_loop.y;
  ctrl.warm_start(Signal(ou.begin() + a - par.t_ini, ou.end()), Signal(oy.begin() + a - par.t_ini, oy.end()));

  ReferenceSchedule sched;
  sched.changes.push_back({0, build_reference(s.p0_before, s.q0_before, par.horizon)});
  sched.changes.push_back({s.step_time - s.activate, build_reference(s.p0, s.q0, par.horizon)});
  out.log = run_closed_loop(cfg.plant, ctrl, sched, s.end - s.activate, NoiseSpec{cfg.noise.seed, cfg.noise.output_noise_power, 0.0},
                            col.final_state);
  out.metrics = detail::scenario_metrics(cfg, out.log);
  return out;
}

struct SweepRow {
  double lambda_g = 0.0;
  ScenarioMetrics metrics;
};

/// run_scenario per grid point with identical seeds.
inline std::vector<SweepRow> sweep(const ScenarioConfig& cfg, const std::vector<double>& grid,
                                   std::vector<ScenarioResult>* runs = nullptr) {
  std::vector<SweepRow> rows;
  for (double lg : grid) {
    ScenarioConfig c = cfg;
    c.params.lambda_g = lg;
    ScenarioResult res = run_scenario(c);
    rows.push_back({lg, res.metrics});
    if (runs) runs->push_back(std::move(res));
  }
  return rows;
}

}  // namespace deepc
