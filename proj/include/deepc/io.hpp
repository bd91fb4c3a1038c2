#pragma once

#include "deepc/controller.hpp"
#include "deepc/hankel.hpp"
#include "deepc/plant.hpp"
#include "deepc/robustness.hpp"
#include "deepc/solver.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace deepc {

using json = nlohmann::json;

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorCode::schema, "not a number: '" + s + "'");
  }
  if (pos != s.size()) throw Error(ErrorCode::schema, "trailing characters in number '" + s + "'");
  return v;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// ---- TrajectoryData CSV: t,u1..um,y1..yp

inline void write_trajectory_csv(std::ostream& os, const TrajectoryData& data, std::int64_t t0 = 0) {
  data.validate();
  os << 't';
  for (Eigen::Index i = 0; i < data.m(); ++i) os << ",u" << i + 1;
  for (Eigen::Index i = 0; i < data.p(); ++i) os << ",y" << i + 1;
  os << '\n';
  for (std::size_t t = 0; t < data.u.size(); ++t) {
    os << t0 + static_cast<std::int64_t>(t);
    for (Eigen::Index i = 0; i < data.m(); ++i) os << ',' << format_double(data.u[t](i));
    for (Eigen::Index i = 0; i < data.p(); ++i) os << ',' << format_double(data.y[t](i));
    os << '\n';
  }
}

inline TrajectoryData read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::schema, "trajectory CSV is empty");
  const auto head = detail::split(detail::trim(line), ',');
  if (head.empty() || head[0] != "t") throw Error(ErrorCode::schema, "trajectory CSV must start with column 't'");
  Eigen::Index m = 0, p = 0;
  for (std::size_t i = 1; i < head.size(); ++i) {
    const std::string want_u = "u" + std::to_string(m + 1);
    const std::string want_y = "y" + std::to_string(p + 1);
    if (p == 0 && head[i] == want_u) {
      ++m;
    } else if (head[i] == want_y) {
      ++p;
    } else {
      throw Error(ErrorCode::schema, "unexpected trajectory column '" + head[i] + "'");
    }
  }
  if (m == 0 || p == 0) throw Error(ErrorCode::schema, "trajectory CSV needs u and y columns");
  TrajectoryData data;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (static_cast<Eigen::Index>(cells.size()) != 1 + m + p) {
      throw Error(ErrorCode::schema, "trajectory CSV row " + std::to_string(row) + " has wrong column count");
    }
    Vector u(m), y(p);
    for (Eigen::Index i = 0; i < m; ++i) u(i) = parse_double(cells[1 + i]);
    for (Eigen::Index i = 0; i < p; ++i) y(i) = parse_double(cells[1 + m + i]);
    data.u.push_back(std::move(u));
    data.y.push_back(std::move(y));
  }
  return data;
}

// ---- StateSpaceModel key/value text
//
//   # comment
//   n = 2
//   m = 1
//   p = 1
//   A = a11 a12 a21 a22      (row-major, whitespace separated)
//   B = ...
//   C = ...
//   D = ...

inline void write_model(std::ostream& os, const StateSpaceModel& model) {
  model.validate();
  os << "n = " << model.n() << "\nm = " << model.m() << "\np = " << model.p() << '\n';
  auto put = [&](const char* key, const Matrix& mat) {
    os << key << " =";
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) os << ' ' << format_double(mat(r, c));
    os << '\n';
  };
  put("A", model.A);
  put("B", model.B);
  put("C", model.C);
  put("D", model.D);
}

inline StateSpaceModel read_model(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::schema, "model line without '=': " + line);
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::schema, "model file is missing key '" + key + "'");
    return it->second;
  };
  auto dim = [&](const std::string& key) {
    const double v = parse_double(get(key));
    if (v < 1 || v != std::floor(v)) throw Error(ErrorCode::schema, "model key '" + key + "' must be a positive integer");
    return static_cast<Eigen::Index>(v);
  };
  const Eigen::Index n = dim("n"), m = dim("m"), p = dim("p");
  auto mat = [&](const std::string& key, Eigen::Index r, Eigen::Index c) {
    std::istringstream vs(get(key));
    std::vector<double> vals;
    std::string tok;
    while (vs >> tok) vals.push_back(parse_double(tok));
    if (static_cast<Eigen::Index>(vals.size()) != r * c) {
      throw Error(ErrorCode::schema, "model key '" + key + "' needs " + std::to_string(r * c) + " entries");
    }
    Matrix out(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) out(i, j) = vals[static_cast<std::size_t>(i * c + j)];
    return out;
  };
  return StateSpaceModel(mat("A", n, n), mat("B", n, m), mat("C", p, n), mat("D", p, m));
}

// ---- JSON helpers. Matrices are {"rows", "cols", "data"} with row-major data.

inline json to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline json to_json(const Vector& v) {
  json data = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  return data;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error(ErrorCode::schema, "matrix data has wrong length");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

/// JSON has no infinity; non-finite values travel as strings.
inline json number_to_json(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

inline double number_from_json(const json& j) {
  return j.is_string() ? parse_double(j.get<std::string>()) : j.get<double>();
}

inline json to_json(const AssembledProblem& p) {
  return {{"A", to_json(p.A)},
          {"b", to_json(p.b)},
          {"G", to_json(p.constraints.G)},
          {"q", to_json(p.constraints.q)},
          {"E", to_json(p.constraints.E)},
          {"f", to_json(p.constraints.f)}};
}

inline AssembledProblem problem_from_json(const json& j) {
  ConstraintSet cs;
  cs.G = matrix_from_json(j.at("G"));
  cs.q = vector_from_json(j.at("q"));
  cs.E = matrix_from_json(j.at("E"));
  cs.f = vector_from_json(j.at("f"));
  return make_problem(matrix_from_json(j.at("A")), vector_from_json(j.at("b")), std::move(cs));
}

inline json to_json(const Solution& s) {
  return {{"g", to_json(s.g)},
          {"u_plan", to_json(s.u_plan)},
          {"y_plan", to_json(s.y_plan)},
          {"objective", s.objective},
          {"lambda_g", s.lambda_g},
          {"beta", s.beta},
          {"beta_prime", s.beta_prime},
          {"ineq_dual", to_json(s.ineq_dual)},
          {"eq_dual", to_json(s.eq_dual)},
          {"status", to_string(s.status)},
          {"kkt_residual", s.kkt.max()}};
}

inline json to_json(const RobustnessReport& r) {
  json table = json::array();
  for (const auto& row : r.monotonicity_table) table.push_back({row.lambda_g, row.beta, row.g_norm});
  return {{"kind", r.kind},
          {"instance_seed", r.instance_seed},
          {"lambda_g", r.lambda_g},
          {"beta", r.beta},
          {"beta_prime", r.beta_prime},
          {"beta_augmented", r.beta_augmented},
          {"eq14_value_at_gstar", r.eq14_value_at_gstar},
          {"eq14_oracle_value", r.eq14_oracle_value},
          {"minimizer_gap", r.minimizer_gap},
          {"worstcase_attainment_gap", r.worstcase_attainment_gap},
          {"monte_carlo_max_excess", r.monte_carlo_max_excess},
          {"monotonicity_table", table},
          {"pass", r.pass},
          {"failures", r.failures}};
}

inline RobustnessReport report_from_json(const json& j) {
  RobustnessReport r;
  r.kind = j.at("kind").get<std::string>();
  r.instance_seed = j.at("instance_seed").get<std::uint64_t>();
  r.lambda_g = j.at("lambda_g").get<double>();
  r.beta = j.at("beta").get<double>();
  r.beta_prime = j.at("beta_prime").get<double>();
  r.beta_augmented = j.at("beta_augmented").get<double>();
  r.eq14_value_at_gstar = j.at("eq14_value_at_gstar").get<double>();
  r.eq14_oracle_value = j.at("eq14_oracle_value").get<double>();
  r.minimizer_gap = j.at("minimizer_gap").get<double>();
  r.worstcase_attainment_gap = j.at("worstcase_attainment_gap").get<double>();
  r.monte_carlo_max_excess = j.at("monte_carlo_max_excess").get<double>();
  for (const auto& row : j.at("monotonicity_table")) {
    r.monotonicity_table.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
  }
  r.pass = j.at("pass").get<bool>();
  r.failures = j.at("failures").get<std::vector<std::string>>();
  return r;
}

/// One line for CI logs: "PASS theorem1 seed=3 lambda_g=1 beta=0.52 ...".
inline std::string summary_line(const RobustnessReport& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS " : "FAIL ") << r.kind << " seed=" << r.instance_seed;
  if (r.kind == "sweep") {
    os << " points=" << r.monotonicity_table.size();
  } else {
    os << " lambda_g=" << format_double(r.lambda_g) << " beta=" << format_double(r.beta);
  }
  if (r.kind == "theorem1") {
    os << " value_gap=" << format_double(std::abs(r.eq14_value_at_gstar - r.eq14_oracle_value));
  } else if (r.kind == "corollary1") {
    os << " beta_prime=" << format_double(r.beta_prime);
  }
  if (!r.failures.empty()) os << " reason=\"" << r.failures.front() << '"';
  return os.str();
}

// ---- ClosedLoopLog CSV: step,u*,y*,r*,beta,objective,status,solve_ms

inline void write_log_csv(std::ostream& os, const ClosedLoopLog& log, bool timing, std::int64_t step0 = 0) {
  if (log.records.empty()) {
    os << "step,beta,objective,status,solve_ms\n";
    return;
  }
  const auto& f = log.records.front();
  os << "step";
  for (Eigen::Index i = 0; i < f.u.size(); ++i) os << ",u" << i + 1;
  for (Eigen::Index i = 0; i < f.y.size(); ++i) os << ",y" << i + 1;
  for (Eigen::Index i = 0; i < f.r.size(); ++i) os << ",r" << i + 1;
  os << ",beta,objective,status,solve_ms\n";
  for (const auto& rec : log.records) {
    os << step0 + rec.step;
    for (Eigen::Index i = 0; i < rec.u.size(); ++i) os << ',' << format_double(rec.u(i));
    for (Eigen::Index i = 0; i < rec.y.size(); ++i) os << ',' << format_double(rec.y(i));
    for (Eigen::Index i = 0; i < rec.r.size(); ++i) os << ',' << format_double(rec.r(i));
    os << ',' << format_double(rec.beta) << ',' << format_double(rec.objective) << ','
       << (rec.fallback ? "fallback" : to_string(rec.status)) << ','
       << (timing ? format_double(rec.solve_ms) : std::string("0")) << '\n';
  }
}

}  // namespace deepc
