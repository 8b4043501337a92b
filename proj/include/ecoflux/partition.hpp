#pragma once

// Decomposed (partitioned) system. The state is the n x (n+1) substorage
// matrix X: column 0 holds storage descending from the initial stocks,
// column k >= 1 holds storage descending from environmental input z_k.
// Row sums recover the aggregate state x. Each column evolves under the
// same flow intensities as the aggregate system:
//
//   dX_col/dt = Q X_col - rho .* X_col (+ z_k e_k for column k >= 1)
//
// where Q is the intensity matrix and rho_i the total outward intensity,
// so columns stay nonnegative and sum to the aggregate dynamics exactly.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "ode.hpp"

namespace ecoflux {

/// Thresholds below which a stock/flow is treated as absent when dividing.
struct Guards {
  double storage = 1e-12;
  double flow = 1e-12;
};

/// Guard scales per the tolerance policy: storages against the larger of
/// 1, |x0| and the largest input seen; flows against 1 + largest input.
inline Guards make_guards(const CompartmentalModel& m, double sup_input) {
  Guards g;
  double x0max = m.x0.size() ? m.x0.cwiseAbs().maxCoeff() : 0.0;
  g.storage = 1e-12 * std::max({1.0, x0max, sup_input});
  g.flow = 1e-12 * (1.0 + sup_input);
  return g;
}

inline Eigen::VectorXd aggregate(const Eigen::MatrixXd& X) {
  return X.rowwise().sum();
}

/// Right-hand side of the decomposed system given a prepared StateEval.
inline void decomposed_rhs_into(const StateEval& se, const Eigen::MatrixXd& X,
                                Eigen::MatrixXd& dX) {
  dX.noalias() = se.intensity * X;
  dX -= se.outflow_intensity.asDiagonal() * X;
  const auto n = se.x.size();
  for (Eigen::Index i = 0; i < n; ++i) dX(i, i + 1) += se.input(i);
}

inline Eigen::MatrixXd decomposed_rhs(const CompartmentalModel& m, double t,
                                      const Eigen::MatrixXd& X) {
  StateEval se = eval_state(m, t, aggregate(X).cwiseMax(0.0));
  Eigen::MatrixXd dX(m.n, m.n + 1);
  decomposed_rhs_into(se, X, dX);
  return dX;
}

/// Share of each compartment's stock owed to each subsystem; rows with an
/// empty stock are zero.
inline Eigen::MatrixXd decomposition_factors(const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& x,
                                             const Guards& g) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (x(i) > g.storage) d.row(i) = X.row(i) / x(i);
  return d;
}

/// Everything the downstream layers need at one sample of the decomposed
/// trajectory.
struct DecomposedEval {
  double t = 0.0;
  Eigen::MatrixXd X;         // n x (n+1) substorage
  StateEval state;           // aggregate evaluation at (t, rowsum X)
  Eigen::MatrixXd T_in;      // n x (n+1) inward subthroughflows
  Eigen::MatrixXd T_out;     // n x (n+1) outward subthroughflows
  Eigen::MatrixXd factors;   // n x (n+1) decomposition factors
  Eigen::MatrixXd A;         // n x n intensity-form system matrix
  Eigen::VectorXd residence; // r_i = x_i / tau_out_i, NaN when masked
};

inline void evaluate_decomposed_into(const CompartmentalModel& m, double t,
                                     const Eigen::MatrixXd& X,
                                     const Guards& g, DecomposedEval& out,
                                     std::vector<double>& stack) {
  const int n = m.n;
  out.t = t;
  out.X = X;
  Eigen::VectorXd x = aggregate(X).cwiseMax(0.0);
  eval_state_into(m, t, x, out.state, stack);
  const StateEval& se = out.state;
  out.T_out = se.outflow_intensity.asDiagonal() * X;
  out.T_in.noalias() = se.intensity * X;
  for (int i = 0; i < n; ++i) out.T_in(i, i + 1) += se.input(i);
  out.factors = decomposition_factors(X, x, g);
  out.A = se.intensity;
  out.A.diagonal() -= se.outflow_intensity;
  out.residence.resize(n);
  for (int i = 0; i < n; ++i)
    out.residence(i) =
        (x(i) > g.storage && se.total_outflow(i) > g.flow)
            ? x(i) / se.total_outflow(i)
            : std::numeric_limits<double>::quiet_NaN();
}

inline DecomposedEval evaluate_decomposed(const CompartmentalModel& m,
                                          double t, const Eigen::MatrixXd& X,
                                          const Guards& g) {
  DecomposedEval out;
  std::vector<double> stack;
  evaluate_decomposed_into(m, t, X, g, out, stack);
  return out;
}

/// Extra states integrated alongside the substorage matrix (quadratures,
/// tracked storages, chain traces). The rhs sees the current aggregate
/// evaluation, the substorage matrix, and its own slice of the state.
struct AugmentedBlock {
  std::string name;
  int size = 0;
  std::function<void(const StateEval&, const Eigen::Map<const Eigen::MatrixXd>&,
                     std::span<const double>, std::span<double>)>
      rhs;
};

struct DecomposeOptions {
  std::vector<AugmentedBlock> blocks;
};

struct DecomposedTrajectory {
  std::vector<double> grid;
  std::vector<DecomposedEval> samples;
  std::map<std::string, std::vector<Eigen::VectorXd>> aux;
  Guards guards;
  double sup_input = 0.0;  // largest ||z||_inf seen during the solve
  ode::Stats stats;
};

/// Integrate the decomposed system (plus augmented blocks) over the spec's
/// span, evaluating every requested sample. Substorage columns start as
/// X(:,0) = x0, X(:,k) = 0; nonnegativity clipping is always on since the
/// decomposed states are analytically nonnegative.
inline DecomposedTrajectory solve_decomposed(
    const CompartmentalModel& m, const ode::IntegrationSpec& spec_in,
    const DecomposeOptions& opts = {}) {
  const int n = m.n;
  const int nx = n * (n + 1);
  int total = nx;
  std::vector<int> offsets;
  for (const AugmentedBlock& b : opts.blocks) {
    offsets.push_back(total);
    total += b.size;
  }

  ode::IntegrationSpec spec = spec_in;
  spec.nonneg_clip = true;

  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(total);
  Eigen::Map<Eigen::MatrixXd>(y0.data(), n, n + 1).col(0) = m.x0;

  struct Scratch {
    StateEval se;
    std::vector<double> stack;
    Eigen::VectorXd x;
    Eigen::MatrixXd dX;
    double sup_input = 0.0;
  };
  auto scratch = std::make_shared<Scratch>();
  scratch->x.resize(n);
  scratch->dX.resize(n, n + 1);

  const auto& blocks = opts.blocks;
  ode::Rhs rhs = [&m, n, nx, &blocks, &offsets, scratch](
                     double t, const Eigen::VectorXd& y,
                     Eigen::VectorXd& dy) {
    Scratch& sc = *scratch;
    Eigen::Map<const Eigen::MatrixXd> X(y.data(), n, n + 1);
    // Trial stages may dip below zero by tolerance-level noise; the model
    // only promises well-defined coefficients for x >= 0.
    sc.x = X.rowwise().sum().cwiseMax(0.0);
    eval_state_into(m, t, sc.x, sc.se, sc.stack);
    double zmax = sc.se.input.size() ? sc.se.input.cwiseAbs().maxCoeff() : 0.0;
    if (zmax > sc.sup_input) sc.sup_input = zmax;
    dy.resize(y.size());
    Eigen::Map<Eigen::MatrixXd> dX(dy.data(), n, n + 1);
    decomposed_rhs_into(sc.se, X, sc.dX);
    dX = sc.dX;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      std::span<const double> vals(y.data() + offsets[b],
                                   static_cast<std::size_t>(blocks[b].size));
      std::span<double> derivs(dy.data() + offsets[b],
                               static_cast<std::size_t>(blocks[b].size));
      blocks[b].rhs(sc.se, X, vals, derivs);
    }
  };

  ode::Trajectory raw = ode::integrate(rhs, y0, spec);

  DecomposedTrajectory out;
  out.grid = raw.grid;
  out.stats = raw.stats;
  out.sup_input = scratch->sup_input;
  out.guards = make_guards(m, scratch->sup_input);
  out.samples.resize(raw.values.size());
  for (const AugmentedBlock& b : blocks)
    out.aux[b.name].resize(raw.values.size());

  std::vector<double> stack;
  for (std::size_t s = 0; s < raw.values.size(); ++s) {
    const Eigen::VectorXd& y = raw.values[s];
    Eigen::Map<const Eigen::MatrixXd> X(y.data(), n, n + 1);
    evaluate_decomposed_into(m, raw.grid[s], X, out.guards, out.samples[s],
                             stack);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      out.aux[blocks[b].name][s] = y.segment(offsets[b], blocks[b].size);
  }
  return out;
}

}  // namespace ecoflux
