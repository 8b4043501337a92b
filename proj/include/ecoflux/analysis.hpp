#pragma once

// One-stop solve: integrates the decomposed system with every requested
// tracked quantity attached as augmented states, then evaluates the
// decomposition and the five-way flow matrices at each sample.
//
// Tracked quantities (all integrated in the same adaptive pass, never by
// post-hoc quadrature):
//   storages          per-variant storage matrices driven by composite and
//                     simple flows, d x*/dt = flow* - rho .* x*
//   initial storages  same, driven by the initial-subsystem subflows
//   exposure          cumulative integral of the substorage matrix
//   diact exposure    cumulative integral of the composite storage matrices
//   index integrals   running integrals of system-level flow/storage sums
//                     and normalizers, for time-averaged indices
//
// Quantities gated by `accumulate_from` start integrating at that time
// (storages and index integrals); plain exposure always counts from t0 and
// is windowed by differencing samples.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "detail/parallel.hpp"
#include "diact.hpp"
#include "transient.hpp"

namespace ecoflux {

struct AnalyzeOptions {
  ode::IntegrationSpec spec;
  bool storages = false;
  bool initial_storages = false;
  bool exposure = true;
  bool diact_exposure = false;
  bool index_integrals = false;
  double accumulate_from = std::numeric_limits<double>::quiet_NaN();
  std::vector<FlowPath> paths;
  double path_scale = 1.0;
};

struct IndexIntegralSeries {
  bool tracked = false;
  std::array<std::vector<double>, 5> composite_flow_sum;
  std::array<std::vector<double>, 5> simple_flow_sum;
  std::array<std::vector<double>, 5> composite_storage_sum;
  std::array<std::vector<double>, 5> simple_storage_sum;
  std::vector<double> system_inflow;
  std::vector<double> system_outflow;
  std::vector<double> system_storage;
  std::vector<double> utility_scalar;  // integrand is exactly zero
};

struct Analysis {
  CompartmentalModel model;
  std::vector<double> grid;
  std::vector<DecomposedEval> samples;
  std::vector<DiactMatrices> diact;
  std::array<std::vector<Eigen::MatrixXd>, 5> storage_composite;
  std::array<std::vector<Eigen::MatrixXd>, 5> storage_simple;
  std::array<std::vector<Eigen::MatrixXd>, 5> storage_initial;
  std::vector<Eigen::MatrixXd> exposure;
  std::array<std::vector<Eigen::MatrixXd>, 5> diact_exposure;
  IndexIntegralSeries integrals;
  std::vector<TransientTrace> traces;
  Guards guards;
  double accumulate_from = 0.0;
  double sup_input = 0.0;
  ode::Stats stats;

  int n() const { return model.n; }
  std::size_t size() const { return grid.size(); }

  Eigen::MatrixXd composite_flow(std::size_t s, Variant v) const {
    return composite_flows(diact[s], v);
  }
  Eigen::MatrixXd simple_flow(std::size_t s, Variant v) const {
    return simple_flows(diact[s], v);
  }
  Eigen::MatrixXd subsystem_flow(std::size_t s, Variant v, int ell) const {
    return subsystem_flows(diact[s], v, ell);
  }
};

/// Locate t on the sample grid (tolerance 1e-9 of the span). Returns -1
/// when t is not a grid point.
inline std::ptrdiff_t grid_index(const std::vector<double>& grid, double t) {
  if (grid.empty()) return -1;
  double tol = 1e-9 * std::max(1.0, std::abs(grid.back() - grid.front()));
  auto it = std::lower_bound(grid.begin(), grid.end(), t - tol);
  if (it == grid.end() || std::abs(*it - t) > tol) return -1;
  return it - grid.begin();
}

namespace detail {

// Exact pairwise-cancelling scalar of the skew part of M: every term
// (M_ik - M_ki) + (M_ki - M_ik) is exactly zero in IEEE arithmetic, so the
// sum is exactly zero; written out to keep the export honest rather than
// hard-coding the constant.
inline double skew_pair_sum(const Eigen::MatrixXd& M) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index k = i + 1; k < M.cols(); ++k)
      s += (M(i, k) - M(k, i)) + (M(k, i) - M(i, k));
  return s;
}

struct AnalysisLayout {
  int n = 0;
  int storage_comp = -1;
  int storage_simple = -1;
  int storage_initial = -1;
  int exposure = -1;
  int diact_exposure = -1;
  int integrals = -1;  // 5 variants x 4 sums, then 4 normalizer slots
  int total = 0;

  int nn() const { return n * n; }
  int reserve(int size) {
    int at = total;
    total += size;
    return at;
  }
};

}  // namespace detail

inline Analysis analyze(const CompartmentalModel& m,
                        const AnalyzeOptions& opts_in) {
  AnalyzeOptions opts = opts_in;
  if (opts.index_integrals) opts.storages = true;  // sums need the states
  if (opts.diact_exposure) opts.storages = true;
  const int n = m.n;
  const double from = std::isnan(opts.accumulate_from) ? opts.spec.t0
                                                       : opts.accumulate_from;

  detail::AnalysisLayout lay;
  lay.n = n;
  if (opts.storages) {
    lay.storage_comp = lay.reserve(5 * lay.nn());
    lay.storage_simple = lay.reserve(5 * lay.nn());
  }
  if (opts.initial_storages) lay.storage_initial = lay.reserve(5 * lay.nn());
  if (opts.exposure) lay.exposure = lay.reserve(n * (n + 1));
  if (opts.diact_exposure) lay.diact_exposure = lay.reserve(5 * lay.nn());
  if (opts.index_integrals) lay.integrals = lay.reserve(5 * 4 + 4);

  DecomposeOptions dopts;
  if (lay.total > 0) {
    AugmentedBlock blk;
    blk.name = "analysis";
    blk.size = lay.total;
    // Flow guard must exist during the run; track the same running input
    // sup the final guards use. Early in the run the guard can sit below
    // its final value, which only affects ~1e-12-scale contributions.
    auto sup = std::make_shared<double>(0.0);
    blk.rhs = [lay, from, sup](const StateEval& se,
                               const Eigen::Map<const Eigen::MatrixXd>& X,
                               std::span<const double> vals,
                               std::span<double> derivs) {
      const int nn = lay.nn();
      const int n = lay.n;
      double zmax = se.input.size() ? se.input.cwiseAbs().maxCoeff() : 0.0;
      if (zmax > *sup) *sup = zmax;
      double eps_flow = 1e-12 * (1.0 + *sup);
      double gate = se.t >= from ? 1.0 : 0.0;

      Eigen::MatrixXd T_out = se.outflow_intensity.asDiagonal() * X;
      Eigen::MatrixXd net_inward = se.intensity * X.rightCols(n);
      DiactMatrices dm = diact_matrices_from(se.flow, se.total_outflow, T_out,
                                             net_inward, eps_flow);

      auto storage_rhs = [&](int base, const Eigen::MatrixXd& source, int v,
                             std::span<const double> sv,
                             std::span<double> dv) {
        Eigen::Map<const Eigen::MatrixXd> S(sv.data() + base + v * nn, n, n);
        Eigen::Map<Eigen::MatrixXd> dS(dv.data() + base + v * nn, n, n);
        dS = gate * source - se.outflow_intensity.asDiagonal() * S;
      };

      for (int v = 0; v < 5; ++v) {
        Variant var = static_cast<Variant>(v);
        if (lay.storage_comp >= 0)
          storage_rhs(lay.storage_comp, composite_flows(dm, var), v, vals,
                      derivs);
        if (lay.storage_simple >= 0)
          storage_rhs(lay.storage_simple, simple_flows(dm, var), v, vals,
                      derivs);
        if (lay.storage_initial >= 0)
          storage_rhs(lay.storage_initial, subsystem_flows(dm, var, 0), v,
                      vals, derivs);
      }
      if (lay.exposure >= 0) {
        Eigen::Map<Eigen::MatrixXd> dE(derivs.data() + lay.exposure, n, n + 1);
        dE = X;
      }
      if (lay.diact_exposure >= 0)
        for (int v = 0; v < 5; ++v)
          for (int e = 0; e < nn; ++e)
            derivs[static_cast<std::size_t>(lay.diact_exposure + v * nn + e)] =
                vals[static_cast<std::size_t>(lay.storage_comp + v * nn + e)];
      if (lay.integrals >= 0) {
        double* d = derivs.data() + lay.integrals;
        for (int v = 0; v < 5; ++v) {
          Variant var = static_cast<Variant>(v);
          Eigen::Map<const Eigen::MatrixXd> Sc(
              vals.data() + lay.storage_comp + v * nn, n, n);
          Eigen::Map<const Eigen::MatrixXd> Ss(
              vals.data() + lay.storage_simple + v * nn, n, n);
          d[v * 4 + 0] = gate * composite_flows(dm, var).sum();
          d[v * 4 + 1] = gate * simple_flows(dm, var).sum();
          d[v * 4 + 2] = gate * Sc.sum();
          d[v * 4 + 3] = gate * Ss.sum();
        }
        d[20] = gate * se.total_inflow.sum();
        d[21] = gate * se.total_outflow.sum();
        d[22] = gate * se.x.sum();
        d[23] = gate * detail::skew_pair_sum(
                           composite_flows(dm, Variant::transfer));
      }
    };
    dopts.blocks.push_back(std::move(blk));
  }

  std::vector<double> starts(opts.paths.size(), from);
  for (std::size_t p = 0; p < opts.paths.size(); ++p) {
    if (!std::isnan(opts.paths[p].start)) starts[p] = opts.paths[p].start;
    for (const Diagnostic& d : validate_path(m, opts.paths[p]))
      if (d.severity == Severity::error)
        throw std::invalid_argument("flow path: " + d.message);
    dopts.blocks.push_back(transient_block(opts.paths[p], starts[p],
                                           opts.path_scale,
                                           "chain" + std::to_string(p)));
  }

  DecomposedTrajectory traj = solve_decomposed(m, opts.spec, dopts);

  Analysis a;
  a.model = m;
  a.grid = traj.grid;
  // Traces read traj.samples, so pull them out before the move below.
  for (std::size_t p = 0; p < opts.paths.size(); ++p)
    a.traces.push_back(extract_trace(traj, opts.paths[p], starts[p],
                                     opts.path_scale,
                                     "chain" + std::to_string(p)));
  a.samples = std::move(traj.samples);
  a.guards = traj.guards;
  a.sup_input = traj.sup_input;
  a.stats = traj.stats;
  a.accumulate_from = from;

  const std::size_t ns = a.grid.size();
  a.diact.resize(ns);
  detail::parallel_for(ns, [&](std::size_t s) {
    a.diact[s] = diact_matrices(a.samples[s], a.guards);
  });

  if (lay.total > 0) {
    const auto& aux = traj.aux.at("analysis");
    auto unpack = [&](int base, std::array<std::vector<Eigen::MatrixXd>, 5>&
                                    dst) {
      for (int v = 0; v < 5; ++v) {
        dst[static_cast<std::size_t>(v)].resize(ns);
        for (std::size_t s = 0; s < ns; ++s)
          dst[static_cast<std::size_t>(v)][s] =
              Eigen::Map<const Eigen::MatrixXd>(
                  aux[s].data() + base + v * lay.nn(), n, n);
      }
    };
    if (lay.storage_comp >= 0) unpack(lay.storage_comp, a.storage_composite);
    if (lay.storage_simple >= 0) unpack(lay.storage_simple, a.storage_simple);
    if (lay.storage_initial >= 0)
      unpack(lay.storage_initial, a.storage_initial);
    if (lay.exposure >= 0) {
      a.exposure.resize(ns);
      for (std::size_t s = 0; s < ns; ++s)
        a.exposure[s] = Eigen::Map<const Eigen::MatrixXd>(
            aux[s].data() + lay.exposure, n, n + 1);
    }
    if (lay.diact_exposure >= 0) unpack(lay.diact_exposure, a.diact_exposure);
    if (lay.integrals >= 0) {
      IndexIntegralSeries& ii = a.integrals;
      ii.tracked = true;
      for (int v = 0; v < 5; ++v) {
        auto& cf = ii.composite_flow_sum[static_cast<std::size_t>(v)];
        auto& sf = ii.simple_flow_sum[static_cast<std::size_t>(v)];
        auto& cs = ii.composite_storage_sum[static_cast<std::size_t>(v)];
        auto& ss = ii.simple_storage_sum[static_cast<std::size_t>(v)];
        cf.resize(ns);
        sf.resize(ns);
        cs.resize(ns);
        ss.resize(ns);
        for (std::size_t s = 0; s < ns; ++s) {
          const double* d = aux[s].data() + lay.integrals;
          cf[s] = d[v * 4 + 0];
          sf[s] = d[v * 4 + 1];
          cs[s] = d[v * 4 + 2];
          ss[s] = d[v * 4 + 3];
        }
      }
      ii.system_inflow.resize(ns);
      ii.system_outflow.resize(ns);
      ii.system_storage.resize(ns);
      ii.utility_scalar.resize(ns);
      for (std::size_t s = 0; s < ns; ++s) {
        const double* d = aux[s].data() + lay.integrals;
        ii.system_inflow[s] = d[20];
        ii.system_outflow[s] = d[21];
        ii.system_storage[s] = d[22];
        ii.utility_scalar[s] = d[23];
      }
    }
  }

  return a;
}

}  // namespace ecoflux
