#pragma once

// Adaptive explicit Runge-Kutta kernel: Dormand-Prince 5(4) with the
// classic 4th-order continuous extension and PI step-size control.
// Samples are taken from the continuous extension, never by stepping
// exactly onto grid points, so the step sequence (and thus the result)
// does not depend on the requested grid.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "expr.hpp"  // detail::format_double

namespace ecoflux::ode {

struct IntegrationSpec {
  double t0 = 0.0;
  double t1 = 1.0;
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  std::vector<double> sample_grid;  // strictly increasing, within [t0, t1];
                                    // empty means {t0, t1}
  bool nonneg_clip = false;         // snap values in [-atol, 0) to 0
};

struct Stats {
  std::int64_t steps = 0;
  std::int64_t rejected = 0;
  std::int64_t rhs_evals = 0;
};

struct Trajectory {
  std::vector<double> grid;
  std::vector<Eigen::VectorXd> values;
  Stats stats;
};

/// `count` evenly spaced points from `a` to `b` inclusive; the endpoints
/// are exact. Intended for IntegrationSpec::sample_grid.
inline std::vector<double> linspace(double a, double b, int count) {
  if (count < 2) throw std::invalid_argument("linspace needs at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s)
    g[static_cast<std::size_t>(s)] = a + (b - a) * s / (count - 1);
  g.front() = a;
  g.back() = b;
  return g;
}

/// Integration failure; carries the last time the solver had a valid state.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_good)
      : std::runtime_error(what + " (last good t=" +
                           detail::format_double(last_good) + ")"),
        last_good_(last_good) {}
  double last_good_time() const { return last_good_; }

 private:
  double last_good_;
};

using Rhs = std::function<void(double, const Eigen::VectorXd&,
                               Eigen::VectorXd&)>;

inline void validate(const IntegrationSpec& spec) {
  auto bad = [](const std::string& msg) {
    throw std::invalid_argument("integration spec: " + msg);
  };
  if (!std::isfinite(spec.t0) || !std::isfinite(spec.t1)) bad("non-finite span");
  if (!(spec.t1 > spec.t0)) bad("t1 must be greater than t0");
  if (!(spec.rtol > 0.0) || !(spec.atol > 0.0)) bad("tolerances must be positive");
  if (!(spec.max_step > 0.0)) bad("max_step must be positive");
  for (std::size_t i = 0; i < spec.sample_grid.size(); ++i) {
    double g = spec.sample_grid[i];
    if (!std::isfinite(g) || g < spec.t0 || g > spec.t1)
      bad("sample point outside [t0, t1]");
    if (i > 0 && !(g > spec.sample_grid[i - 1]))
      bad("sample grid must be strictly increasing");
  }
}

namespace dopri5 {
// Butcher tableau (Dormand & Prince 1980), error weights, and the dense
// output weights of the 4th-order continuous extension.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                        c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                        e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0,
                        d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0,
                        d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0,
                        d7 = 69997945.0 / 29380423.0;
inline constexpr double safe = 0.9, beta = 0.04;
inline constexpr double expo1 = 0.2 - beta * 0.75;
inline constexpr double fac_min = 0.2, fac_max = 10.0;  // 1/FACC2, 1/FACC1
}  // namespace dopri5

inline Trajectory integrate(const Rhs& rhs, Eigen::VectorXd y0,
                            const IntegrationSpec& spec) {
  using namespace dopri5;
  validate(spec);
  const auto dim = y0.size();
  const double uround = std::numeric_limits<double>::epsilon();

  Trajectory traj;
  std::vector<double> grid = spec.sample_grid;
  if (grid.empty()) grid = {spec.t0, spec.t1};
  traj.grid = grid;
  traj.values.reserve(grid.size());
  Stats& st = traj.stats;

  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim),
      k7(dim), ytmp(dim), y1(dim), yerr(dim);
  Eigen::VectorXd rc1(dim), rc2(dim), rc3(dim), rc4(dim), rc5(dim), ys(dim);

  auto eval = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    rhs(t, y, dy);
    ++st.rhs_evals;
  };
  auto clip = [&](Eigen::VectorXd& y) {
    if (!spec.nonneg_clip) return false;
    bool changed = false;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) < 0.0 && y(i) >= -spec.atol) {
        y(i) = 0.0;
        changed = true;
      }
    return changed;
  };

  double t = spec.t0;
  Eigen::VectorXd y = std::move(y0);
  clip(y);
  eval(t, y, k1);
  if (!k1.allFinite())
    throw SolverError("non-finite right-hand side at the initial state", t);

  // Emit grid points at t0 before stepping.
  std::size_t gi = 0;
  while (gi < grid.size() && grid[gi] <= spec.t0) {
    traj.values.push_back(y);
    ++gi;
  }

  // Initial step size (Hairer's heuristic for order 5).
  double h;
  {
    double dnf = 0.0, dny = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      double sk = spec.atol + spec.rtol * std::abs(y(i));
      dnf += (k1(i) / sk) * (k1(i) / sk);
      dny += (y(i) / sk) * (y(i) / sk);
    }
    double h0 = (dnf <= 1e-10 || dny <= 1e-10)
                    ? 1e-6
                    : std::sqrt(dny / dnf) * 0.01;
    h0 = std::min({h0, spec.max_step, spec.t1 - spec.t0});
    ytmp = y + h0 * k1;
    eval(t + h0, ytmp, k2);
    double der2 = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      double sk = spec.atol + spec.rtol * std::abs(y(i));
      der2 += ((k2(i) - k1(i)) / sk) * ((k2(i) - k1(i)) / sk);
    }
    der2 = std::sqrt(der2) / h0;
    double der12 = std::max(std::sqrt(dnf), der2);
    double h1 = (der12 <= 1e-15)
                    ? std::max(1e-6, h0 * 1e-3)
                    : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h0, h1, spec.max_step, spec.t1 - spec.t0});
  }

  double facold = 1e-4;
  bool last_rejected = false;
  int consecutive_bad = 0;

  while (t < spec.t1) {
    if (h > spec.max_step) h = spec.max_step;
    bool last = false;
    if (t + h >= spec.t1) {
      h = spec.t1 - t;
      last = true;
    }
    if (0.1 * h <= std::abs(t) * uround)
      throw SolverError("step size underflow", t);

    ytmp = y + h * (a21 * k1);
    eval(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    eval(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    eval(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    eval(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    eval(t + h, ytmp, k6);
    y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    eval(t + h, y1, k7);
    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      double sk = spec.atol +
                  spec.rtol * std::max(std::abs(y(i)), std::abs(y1(i)));
      err += (yerr(i) / sk) * (yerr(i) / sk);
    }
    err = std::sqrt(err / static_cast<double>(dim));

    if (!std::isfinite(err) || !y1.allFinite()) {
      if (++consecutive_bad > 25)
        throw SolverError("right-hand side stayed non-finite while shrinking "
                          "the step",
                          t);
      ++st.rejected;
      h *= 0.1;
      last_rejected = true;
      continue;
    }
    consecutive_bad = 0;

    double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {
      // Accept. Dense output coefficients for this step.
      rc1 = y;
      rc2 = y1 - y;
      rc3 = h * k1 - rc2;
      rc4 = rc2 - h * k7 - rc3;
      rc5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

      double t_new = last ? spec.t1 : t + h;
      bool clipped = clip(y1);
      while (gi < grid.size() && grid[gi] <= t_new) {
        double theta = (grid[gi] - t) / h;
        if (theta < 0.0) theta = 0.0;
        if (theta > 1.0) theta = 1.0;
        double theta1 = 1.0 - theta;
        if (grid[gi] >= t_new) {
          ys = y1;
        } else {
          ys = rc1 +
               theta * (rc2 + theta1 * (rc3 + theta * (rc4 + theta1 * rc5)));
          clip(ys);
        }
        traj.values.push_back(ys);
        ++gi;
      }

      double fac = fac11 / std::pow(facold, beta);
      fac = std::max(1.0 / fac_max, std::min(1.0 / fac_min, fac / safe));
      double hnew = h / fac;
      if (last_rejected) hnew = std::min(hnew, h);
      facold = std::max(err, 1e-4);
      last_rejected = false;
      ++st.steps;

      t = t_new;
      y.swap(y1);
      // A clip at the step end invalidates the FSAL derivative.
      if (clipped)
        eval(t, y, k1);
      else
        k1.swap(k7);
      h = hnew;
    } else {
      ++st.rejected;
      h = h / std::min(1.0 / fac_min, fac11 / safe);
      last_rejected = true;
    }
  }

  // Floating-point slack: any grid points not emitted (grid[gi] within
  // rounding of t1) take the final state.
  while (gi < grid.size()) {
    traj.values.push_back(y);
    ++gi;
  }
  return traj;
}

}  // namespace ecoflux::ode
