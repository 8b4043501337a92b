#pragma once

// Compartmental model core: n storages exchanging a conserved quantity
// through donor-controlled flows, with environmental inputs and outputs.
//
// Flows and outputs are declared as intensities: q_ij(t,x) is the flow
// from compartment j into i per unit donor storage (f_ij = q_ij * x_j),
// w_i(t,x) is the output per unit storage (y_i = w_i * x_i). Declaring
// intensities instead of raw flows keeps every per-unit rate well defined
// at x_j = 0, which the decomposed system depends on.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "expr.hpp"

namespace ecoflux {

/// File/OS-level failure (missing file, unwritable output).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string message;
  std::string location;  // e.g. "flows 2<-1", "initial 3"
};

inline bool has_errors(const std::vector<Diagnostic>& ds) {
  for (const Diagnostic& d : ds)
    if (d.severity == Severity::error) return true;
  return false;
}

inline std::string format_diagnostics(const std::vector<Diagnostic>& ds) {
  std::string out;
  for (const Diagnostic& d : ds) {
    out += d.severity == Severity::error ? "error" : "warning";
    if (!d.location.empty()) out += " [" + d.location + "]";
    out += ": " + d.message + "\n";
  }
  return out;
}

/// Simulation defaults carried by a model file's [simulate] section.
/// Zero-valued fields mean "not set"; the CLI fills in its own defaults.
struct SimulateDefaults {
  double t0 = 0.0;
  double t1 = 0.0;
  int samples = 0;
  double rtol = 0.0;
  double atol = 0.0;
  double max_step = 0.0;
  bool has_span = false;  // t0/t1 were given
};

class CompartmentalModel {
 public:
  int n = 0;
  std::vector<std::string> names;
  bool allow_self_flows = false;
  std::vector<std::string> param_names;
  std::vector<double> param_values;
  Eigen::VectorXd x0;
  SimulateDefaults defaults;

  void resize(int count) {
    n = count;
    names.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      if (names[static_cast<std::size_t>(i)].empty())
        names[static_cast<std::size_t>(i)] = std::to_string(i + 1);
    x0 = Eigen::VectorXd::Zero(count);
    intensity_.assign(static_cast<std::size_t>(count * count), Expr{});
    output_.assign(static_cast<std::size_t>(count), Expr{});
    input_.assign(static_cast<std::size_t>(count), Expr{});
  }

  // Flow intensity for the flow j -> i; empty Expr means no such flow.
  Expr& intensity(int i, int j) {
    return intensity_[static_cast<std::size_t>(i * n + j)];
  }
  const Expr& intensity(int i, int j) const {
    return intensity_[static_cast<std::size_t>(i * n + j)];
  }
  Expr& output_intensity(int i) { return output_[static_cast<std::size_t>(i)]; }
  const Expr& output_intensity(int i) const {
    return output_[static_cast<std::size_t>(i)];
  }
  Expr& input(int i) { return input_[static_cast<std::size_t>(i)]; }
  const Expr& input(int i) const { return input_[static_cast<std::size_t>(i)]; }

  int param_index(std::string_view name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void set_param(const std::string& name, double value) {
    int idx = param_index(name);
    if (idx >= 0) {
      param_values[static_cast<std::size_t>(idx)] = value;
    } else {
      param_names.push_back(name);
      param_values.push_back(value);
    }
  }

  /// Accepts a 1-based number or a compartment name; returns 0-based index
  /// or -1.
  int compartment_index(std::string_view key) const {
    for (int i = 0; i < n; ++i)
      if (names[static_cast<std::size_t>(i)] == key) return i;
    int idx = 0;
    auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
    if (ec == std::errc{} && ptr == key.data() + key.size() && idx >= 1 &&
        idx <= n)
      return idx - 1;
    return -1;
  }

  /// Resolve identifiers in every expression against the parameter table.
  /// Returns one diagnostic per unresolved name or out-of-range state.
  std::vector<Diagnostic> bind() {
    std::map<std::string, int> table;
    for (std::size_t i = 0; i < param_names.size(); ++i)
      table[param_names[i]] = static_cast<int>(i);
    std::vector<Diagnostic> out;
    auto bind_one = [&](Expr& e, const std::string& where) {
      for (const std::string& name : e.bind(n, table))
        out.push_back({Severity::error, "unknown identifier '" + name + "'",
                       where});
    };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j)
        if (!intensity(i, j).empty())
          bind_one(intensity(i, j), "flows " + std::to_string(i + 1) + "<-" +
                                        std::to_string(j + 1));
      if (!output_intensity(i).empty())
        bind_one(output_intensity(i), "outputs " + std::to_string(i + 1));
      if (!input(i).empty())
        bind_one(input(i), "inputs " + std::to_string(i + 1));
    }
    return out;
  }

 private:
  std::vector<Expr> intensity_;
  std::vector<Expr> output_;
  std::vector<Expr> input_;
};

/// One full evaluation of a model at (t, x): intensities, flows, inputs,
/// outputs, throughflows.
struct StateEval {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::MatrixXd intensity;          // q_ij
  Eigen::MatrixXd flow;               // F_ij = q_ij x_j
  Eigen::VectorXd input;              // z_i
  Eigen::VectorXd output_intensity;   // w_i
  Eigen::VectorXd output;             // y_i = w_i x_i
  Eigen::VectorXd total_inflow;       // tau_in_i  = z_i + sum_j F_ij
  Eigen::VectorXd total_outflow;      // tau_out_i = y_i + sum_j F_ji
  Eigen::VectorXd outflow_intensity;  // rho_i = w_i + sum_j q_ji

  void resize(int n) {
    x.resize(n);
    intensity.resize(n, n);
    flow.resize(n, n);
    input.resize(n);
    output_intensity.resize(n);
    output.resize(n);
    total_inflow.resize(n);
    total_outflow.resize(n);
    outflow_intensity.resize(n);
  }
};

namespace detail {

[[noreturn]] inline void eval_failure(const std::string& what,
                                      const std::string& where, double t) {
  throw EvalError(what + " in " + where + " at t=" + format_double(t));
}

inline double eval_coefficient(const Expr& e, const Expr::Env& env,
                               std::vector<double>& stack,
                               const std::string& where) {
  double v = 0.0;
  try {
    v = e.eval(env, stack);
  } catch (const EvalError& err) {
    eval_failure(err.what(), where, env.t);
  }
  if (!std::isfinite(v)) eval_failure("non-finite value", where, env.t);
  if (v < 0.0) eval_failure("negative intensity/input", where, env.t);
  return v;
}

}  // namespace detail

/// Evaluate all model coefficients at (t, x) into `out` without allocating
/// (after the first call with this `out`/`stack`). Throws EvalError with
/// the offending coefficient named if an expression fails, produces a
/// non-finite value, or goes negative.
inline void eval_state_into(const CompartmentalModel& m, double t,
                            const Eigen::VectorXd& x, StateEval& out,
                            std::vector<double>& stack) {
  const int n = m.n;
  out.resize(n);
  out.t = t;
  out.x = x;
  Expr::Env env;
  env.t = t;
  env.x = std::span<const double>(x.data(), static_cast<std::size_t>(n));
  env.params = std::span<const double>(m.param_values.data(),
                                       m.param_values.size());
  out.intensity.setZero();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Expr& e = m.intensity(i, j);
      if (e.empty()) continue;
      out.intensity(i, j) = detail::eval_coefficient(
          e, env, stack,
          "flow intensity " + std::to_string(i + 1) + "<-" +
              std::to_string(j + 1));
    }
    out.output_intensity(i) =
        m.output_intensity(i).empty()
            ? 0.0
            : detail::eval_coefficient(m.output_intensity(i), env, stack,
                                       "output intensity " +
                                           std::to_string(i + 1));
    out.input(i) = m.input(i).empty()
                       ? 0.0
                       : detail::eval_coefficient(
                             m.input(i), env, stack,
                             "input " + std::to_string(i + 1));
  }
  out.flow.noalias() = out.intensity * x.asDiagonal();
  out.output = out.output_intensity.cwiseProduct(x);
  out.total_inflow = out.input + out.flow.rowwise().sum();
  out.total_outflow = out.output + out.flow.colwise().sum().transpose();
  out.outflow_intensity =
      out.output_intensity + out.intensity.colwise().sum().transpose();
}

inline StateEval eval_state(const CompartmentalModel& m, double t,
                            const Eigen::VectorXd& x) {
  StateEval out;
  std::vector<double> stack;
  eval_state_into(m, t, x, out, stack);
  return out;
}

/// Net balance dx/dt = inflows - outflows.
inline Eigen::VectorXd net_balance(const StateEval& s) {
  return s.total_inflow - s.total_outflow;
}

/// System-wide balance with every internal flow cancelled against itself,
/// term by term, so the result equals sum(z) - sum(y) exactly in IEEE
/// arithmetic; the naive sum of net_balance agrees to rounding.
inline double system_net_balance(const StateEval& s) {
  double b = 0.0;
  for (Eigen::Index i = 0; i < s.x.size(); ++i)
    b += s.input(i) - s.output(i);
  for (Eigen::Index i = 0; i < s.x.size(); ++i)
    for (Eigen::Index j = 0; j < s.x.size(); ++j)
      b += s.flow(i, j) - s.flow(i, j);
  return b;
}

namespace detail {

inline bool looks_like_state_name(const std::string& s) {
  return s.size() > 1 && s[0] == 'x' && s[1] != '0' &&
         s.find_first_not_of("0123456789", 1) == std::string::npos;
}

}  // namespace detail

/// Structural and value-level validation. Binds expressions as a side
/// effect. Empty result means the model satisfies every invariant and all
/// expressions reference only t, x1..xn, and declared parameters.
inline std::vector<Diagnostic> validate_model(CompartmentalModel& m) {
  std::vector<Diagnostic> out;
  auto err = [&](std::string msg, std::string where) {
    out.push_back({Severity::error, std::move(msg), std::move(where)});
  };

  if (m.n < 1) {
    err("model needs at least one compartment", "model");
    return out;
  }
  if (static_cast<int>(m.names.size()) != m.n) {
    err("expected " + std::to_string(m.n) + " compartment names", "model");
    return out;
  }
  for (int i = 0; i < m.n; ++i) {
    const std::string& name = m.names[static_cast<std::size_t>(i)];
    if (name.empty()) err("empty compartment name", "model names");
    for (int j = 0; j < i; ++j)
      if (m.names[static_cast<std::size_t>(j)] == name)
        err("duplicate compartment name '" + name + "'", "model names");
  }

  if (m.param_names.size() != m.param_values.size()) {
    err("parameter table is inconsistent", "params");
    return out;
  }
  for (std::size_t i = 0; i < m.param_names.size(); ++i) {
    const std::string& name = m.param_names[i];
    if (name == "t" || detail::looks_like_state_name(name))
      err("parameter '" + name + "' shadows a built-in identifier", "params");
    for (std::size_t j = 0; j < i; ++j)
      if (m.param_names[j] == name)
        err("duplicate parameter '" + name + "'", "params");
    if (!std::isfinite(m.param_values[i]))
      err("parameter '" + name + "' is not finite", "params");
  }

  if (m.x0.size() != m.n) {
    err("expected " + std::to_string(m.n) + " initial values", "initial");
    return out;
  }
  for (int i = 0; i < m.n; ++i) {
    if (!std::isfinite(m.x0(i)))
      err("initial stock is not finite", "initial " + std::to_string(i + 1));
    else if (m.x0(i) < 0.0)
      err("negative initial stock", "initial " + std::to_string(i + 1));
  }

  if (!m.allow_self_flows)
    for (int i = 0; i < m.n; ++i)
      if (!m.intensity(i, i).empty())
        err("self-flow declared but self_flows is off",
            "flows " + std::to_string(i + 1) + "<-" + std::to_string(i + 1));

  const SimulateDefaults& d = m.defaults;
  if (d.has_span && !(d.t1 > d.t0))
    err("simulation span must have t1 > t0", "simulate");
  if (d.samples != 0 && d.samples < 5)
    err("need at least 5 samples", "simulate");
  if (d.rtol < 0.0 || d.atol < 0.0 || d.max_step < 0.0)
    err("tolerances must be positive", "simulate");

  for (Diagnostic& bd : m.bind()) out.push_back(std::move(bd));
  if (has_errors(out)) return out;

  // Value-level probe at the initial state.
  double t0 = d.has_span ? d.t0 : 0.0;
  try {
    eval_state(m, t0, m.x0);
  } catch (const EvalError& e) {
    err(std::string(e.what()) + " (evaluated at the initial state)",
        "initial state");
  }
  return out;
}

}  // namespace ecoflux
