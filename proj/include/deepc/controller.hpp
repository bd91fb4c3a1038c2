#pragma once

#include "deepc/common.hpp"
#include "deepc/hankel.hpp"
#include "deepc/plant.hpp"
#include "deepc/solver.hpp"

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace deepc {

enum class SolverMode { qp, closed_form };

inline const char* to_string(SolverMode m) { return m == SolverMode::qp ? "qp" : "closed-form"; }

inline SolverMode parse_solver_mode(const std::string& s) {
  if (s == "qp") return SolverMode::qp;
  if (s == "closed-form" || s == "closed_form") return SolverMode::closed_form;
  throw Error(ErrorCode::invalid_input, "unknown solver mode '" + s + "' (expected qp or closed-form)");
}

struct ControllerOptions {
  Eigen::Index t_ini = 6;
  Eigen::Index horizon = 12;
  Eigen::Index k = 1;            // inputs applied per solve
  DeePCWeights weights;
  std::optional<BoxBounds> box_u;
  std::optional<BoxBounds> box_y;
  SolverMode mode = SolverMode::closed_form;
  Eigen::Index order_bound = 0;  // upper bound on the state dimension
  Eigen::Index lag_bound = 1;
  double rank_tol = 1e-9;
};

struct PredictResult {
  Signal y;
  double residual = 0.0;  // || [U_p; Y_p; U_f] g - [u_ini; y_ini; u_f] ||
};

/// Output prediction from the minimum-norm g consistent with past data and
/// the future inputs.
inline PredictResult predict(const HankelPartition& part, const Vector& u_ini, const Vector& y_ini,
                             const Signal& u_future, double tol = 1e-9) {
  const Eigen::Index m = part.m(), p = part.p();
  if (u_ini.size() != part.U_p.rows() || y_ini.size() != part.Y_p.rows()) {
    throw Error(ErrorCode::invalid_input, "initial trajectory has wrong length");
  }
  if (static_cast<Eigen::Index>(u_future.size()) != part.horizon) {
    throw Error(ErrorCode::invalid_input, "u_future must have N entries");
  }
  const Vector uf = stack(u_future);
  if (uf.size() != m * part.horizon) throw Error(ErrorCode::invalid_input, "u_future has wrong width");
  Matrix lhs(part.U_p.rows() + part.Y_p.rows() + part.U_f.rows(), part.columns());
  lhs << part.U_p, part.Y_p, part.U_f;
  Vector rhs(lhs.rows());
  rhs << u_ini, y_ini, uf;
  const Vector g = min_norm_solve(lhs, rhs, tol);
  PredictResult out;
  out.residual = (lhs * g - rhs).norm();
  out.y = unstack(part.Y_f * g, p);
  return out;
}

struct StepDiagnostics {
  bool resolved = false;  // a new plan was computed this step
  SolveStatus status = SolveStatus::solved;
  bool fallback = false;  // held the previous input
  double objective = 0.0;
  double beta = 0.0;
  double kkt = 0.0;
  double solve_ms = 0.0;
  std::string message;
};

struct StepResult {
  Vector u;
  StepDiagnostics diag;
};

/// Receding-horizon DeePC controller.
///
/// Call sequence per plant sample: `step()` returns the input for the
/// current sample; once the plant output for that sample is measured it
/// is pushed with `observe()`. A new plan is computed whenever the k
/// inputs of the previous one are used up.
class Controller {
 public:
  Controller(const TrajectoryData& data, ControllerOptions opt) : opt_(std::move(opt)) {
    data.validate();
    const Eigen::Index L = opt_.t_ini + opt_.horizon;
    if (opt_.t_ini < 1 || opt_.horizon < 1) throw Error(ErrorCode::invalid_window, "T_ini and N must be positive");
    if (opt_.k < 1 || opt_.k > opt_.horizon) throw Error(ErrorCode::invalid_input, "k must lie in [1, N]");
    if (opt_.t_ini < opt_.lag_bound) {
      std::ostringstream os;
      os << "T_ini = " << opt_.t_ini << " is below the lag bound " << opt_.lag_bound
         << "; the initial state is not uniquely determined";
      throw Error(ErrorCode::ambiguous_initialization, os.str());
    }
    if (data.length() < L) {
      std::ostringstream os;
      os << "T = " << data.length() << " is shorter than T_ini + N = " << L;
      throw Error(ErrorCode::data_insufficiency, os.str());
    }
    // Noisy data makes H_L full rank, so the achieved rank is checked from below.
    const RankReport rank = rank_condition(data, L, opt_.order_bound, opt_.rank_tol);
    if (rank.rank < rank.target || rank.target > data.length() - L + 1) {
      std::ostringstream os;
      os << "rank of H_" << L << "(u, y) is " << rank.rank << ", required " << rank.target << " (= m(T_ini+N) + n)";
      if (rank.target > data.length() - L + 1) os << "; " << rank.diagnostic;
      throw Error(ErrorCode::data_insufficiency, os.str());
    }
    part_ = partition(data, opt_.t_ini, opt_.horizon);
    opt_.weights.validate(m() * opt_.horizon, p() * opt_.horizon);
    last_u_ = Vector::Zero(m());
  }

  Eigen::Index m() const { return part_.m(); }
  Eigen::Index p() const { return part_.p(); }
  Eigen::Index t_ini() const { return opt_.t_ini; }
  Eigen::Index horizon() const { return opt_.horizon; }
  Eigen::Index k() const { return opt_.k; }
  SolverMode mode() const { return opt_.mode; }
  const HankelPartition& partition_data() const { return part_; }
  const ControllerOptions& options() const { return opt_; }
  std::int64_t step_count() const { return step_count_; }
  bool ready() const { return static_cast<Eigen::Index>(u_buf_.size()) == opt_.t_ini; }
  const std::deque<Vector>& u_buffer() const { return u_buf_; }
  const std::deque<Vector>& y_buffer() const { return y_buf_; }
  const Vector& reference() const { return opt_.weights.r; }

  void warm_start(const Signal& recent_u, const Signal& recent_y) {
    if (static_cast<Eigen::Index>(recent_u.size()) != opt_.t_ini ||
        static_cast<Eigen::Index>(recent_y.size()) != opt_.t_ini) {
      std::ostringstream os;
      os << "warm start needs exactly T_ini = " << opt_.t_ini << " samples, got " << recent_u.size() << " inputs and "
         << recent_y.size() << " outputs";
      throw Error(ErrorCode::invalid_input, os.str());
    }
    for (std::size_t i = 0; i < recent_u.size(); ++i) {
      if (recent_u[i].size() != m() || recent_y[i].size() != p()) {
        throw Error(ErrorCode::invalid_input, "warm-start sample has wrong width");
      }
    }
    u_buf_.assign(recent_u.begin(), recent_u.end());
    y_buf_.assign(recent_y.begin(), recent_y.end());
    plan_.clear();
    pending_.reset();
    last_u_ = recent_u.back();
  }

  void set_reference(const Vector& r) {
    if (r.size() != p() * opt_.horizon) throw Error(ErrorCode::invalid_weights, "reference must have length pN");
    opt_.weights.r = r;
  }

  /// Input for the current sample.
  StepResult step(const std::optional<Vector>& new_r = std::nullopt) {
    if (!ready()) throw Error(ErrorCode::invalid_input, "controller is not warm-started");
    if (pending_) throw Error(ErrorCode::invalid_input, "previous input has no measured output yet");
    if (new_r) set_reference(*new_r);
    StepResult out;
    if (plan_.empty()) {
      out.diag = replan();
    } else {
      out.diag = last_diag_;
      out.diag.resolved = false;
      out.diag.solve_ms = 0.0;
    }
    out.u = plan_.front();
    plan_.pop_front();
    pending_ = out.u;
    last_u_ = out.u;
    return out;
  }

  /// Pushes the measured output that belongs to the last returned input.
  void observe(const Vector& y) {
    if (!pending_) throw Error(ErrorCode::invalid_input, "no input awaiting a measurement");
    if (y.size() != p()) throw Error(ErrorCode::invalid_input, "measurement has wrong width");
    u_buf_.pop_front();
    y_buf_.pop_front();
    u_buf_.push_back(*pending_);
    y_buf_.push_back(y);
    pending_.reset();
    ++step_count_;
  }

  /// observe(new_y) when given, then step(new_r).
  StepResult control_step(const std::optional<Vector>& new_y, const std::optional<Vector>& new_r = std::nullopt) {
    if (new_y) observe(*new_y);
    return step(new_r);
  }

  PredictResult predict(const Signal& u_future) const {
    if (!ready()) throw Error(ErrorCode::invalid_input, "controller is not warm-started");
    return deepc::predict(part_, stack(Signal(u_buf_.begin(), u_buf_.end())),
                          stack(Signal(y_buf_.begin(), y_buf_.end())), u_future, opt_.rank_tol);
  }

  /// Problem for the current buffers and reference.
  AssembledProblem current_problem() const {
    return assemble(part_, opt_.weights, stack(Signal(u_buf_.begin(), u_buf_.end())),
                    stack(Signal(y_buf_.begin(), y_buf_.end())), opt_.box_u, opt_.box_y);
  }

 private:
  StepDiagnostics replan() {
    StepDiagnostics d;
    d.resolved = true;
    const auto t0 = std::chrono::steady_clock::now();
    const AssembledProblem prob = current_problem();
    Solution sol;
    try {
      if (opt_.mode == SolverMode::closed_form) {
        if (!gain_) gain_.emplace(prob.A, prob.constraints.E, opt_.weights.lambda_g);
        sol = closed_form(prob, opt_.weights.lambda_g, &*gain_);
      } else {
        sol = solve_qp(prob, opt_.weights.lambda_g);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::invalid_input) throw;
      sol.status = SolveStatus::infeasible;
      d.message = e.what();
    }
    d.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    d.status = sol.status;
    if (sol.status == SolveStatus::solved) {
      d.objective = sol.objective;
      d.beta = sol.beta;
      d.kkt = sol.kkt.max();
      for (Eigen::Index j = 0; j < opt_.k; ++j) plan_.push_back(sol.u_plan.segment(j * m(), m()));
    } else {
      d.fallback = true;
      if (d.message.empty()) d.message = std::string("solver status ") + to_string(sol.status);
      plan_.push_back(last_u_);
    }
    last_diag_ = d;
    return d;
  }

  ControllerOptions opt_;
  HankelPartition part_;
  std::deque<Vector> u_buf_, y_buf_;
  std::deque<Vector> plan_;
  std::optional<Vector> pending_;
  Vector last_u_;
  std::optional<ClosedFormGain> gain_;  // A depends only on data and weights
  StepDiagnostics last_diag_;
  std::int64_t step_count_ = 0;
};

inline Controller init_controller(const TrajectoryData& data, const ControllerOptions& opt) {
  return Controller(data, opt);
}

/// Piecewise-constant reference: entry i takes effect from step `first` on.
struct ReferenceSchedule {
  std::vector<std::pair<std::int64_t, Vector>> changes;

  static ReferenceSchedule constant(const Vector& r) { return {{{0, r}}}; }

  const Vector* at(std::int64_t t) const {
    const Vector* cur = nullptr;
    for (const auto& [first, r] : changes) {
      if (first <= t) cur = &r;
    }
    return cur;
  }
};

struct ClosedLoopRecord {
  std::int64_t step = 0;
  Vector u;
  Vector y;       // measured
  Vector y_true;  // noise-free plant output
  Vector r;       // reference for the first predicted sample
  double beta = 0.0;
  double objective = 0.0;
  SolveStatus status = SolveStatus::solved;
  bool fallback = false;
  double solve_ms = 0.0;
};

struct ClosedLoopLog {
  std::vector<ClosedLoopRecord> records;
  Vector final_state;
};

/// Simulates `steps` samples of plant + controller. Measurement noise
/// comes from its own stream of `noise.seed`.
inline ClosedLoopLog run_closed_loop(const StateSpaceModel& plant, Controller& ctrl,
                                     const ReferenceSchedule& schedule, std::int64_t steps, const NoiseSpec& noise,
                                     const Vector& x0) {
  plant.validate();
  noise.validate();
  if (plant.m() != ctrl.m() || plant.p() != ctrl.p()) {
    throw Error(ErrorCode::invalid_input, "plant and controller dimensions differ");
  }
  if (x0.size() != plant.n()) throw Error(ErrorCode::invalid_input, "x0 has wrong dimension");
  WhiteNoise gen(noise.seed, stream::closed_loop);
  ClosedLoopLog log;
  log.records.reserve(static_cast<std::size_t>(std::max<std::int64_t>(steps, 0)));
  Vector x = x0;
  for (std::int64_t t = 0; t < steps; ++t) {
    const Vector* r = schedule.at(t);
    const StepResult res = r ? ctrl.step(*r) : ctrl.step();
    ClosedLoopRecord rec;
    rec.step = t;
    rec.u = res.u;
    rec.y_true = plant.C * x + plant.D * res.u;
    rec.y = rec.y_true;
    if (noise.output_noise_power > 0.0) rec.y += gen.draw(plant.p(), noise.output_noise_power);
    x = plant.A * x + plant.B * res.u;
    ctrl.observe(rec.y);
    rec.r = ctrl.reference().head(plant.p());
    rec.beta = res.diag.beta;
    rec.objective = res.diag.objective;
    rec.status = res.diag.status;
    rec.fallback = res.diag.fallback;
    rec.solve_ms = res.diag.solve_ms;
    log.records.push_back(std::move(rec));
  }
  log.final_state = x;
  return log;
}

}  // namespace deepc
