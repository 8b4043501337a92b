#pragma once

// System-level indicators built on the five-way flow decomposition:
// normalized effect matrices, antisymmetric utilities, time-averaged
// indices, derivative-based efficiencies, exposures, residence times, and
// a settling-band recovery diagnostic.
//
// Undefined samples (masked normalizer, gaps) are carried as NaN and
// propagate through derivative stencils; exports render them as empty
// fields.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "analysis.hpp"

namespace ecoflux {

enum class Basis { flow, storage };
enum class FlowKind { composite, simple, initial };

inline const char* basis_name(Basis b) {
  return b == Basis::flow ? "flow" : "storage";
}
inline const char* flow_kind_name(FlowKind k) {
  switch (k) {
    case FlowKind::composite: return "composite";
    case FlowKind::simple: return "simple";
    default: return "initial";
  }
}

struct MatrixSeries {
  std::vector<double> t;
  std::vector<Eigen::MatrixXd> v;
};

struct ScalarSeries {
  std::vector<double> t;
  std::vector<double> v;
};

/// sigma-style normalizers at one sample.
inline double system_inflow(const DecomposedEval& s) {
  return s.state.total_inflow.sum();
}
inline double system_outflow(const DecomposedEval& s) {
  return s.state.total_outflow.sum();
}
inline double system_storage(const DecomposedEval& s) {
  return s.state.x.sum();
}

namespace detail {

inline const std::vector<Eigen::MatrixXd>& storage_series(const Analysis& a,
                                                          Variant v,
                                                          FlowKind kind) {
  const auto& series =
      kind == FlowKind::composite
          ? a.storage_composite[static_cast<std::size_t>(static_cast<int>(v))]
          : kind == FlowKind::simple
              ? a.storage_simple[static_cast<std::size_t>(static_cast<int>(v))]
              : a.storage_initial[static_cast<std::size_t>(static_cast<int>(v))];
  if (series.empty())
    throw std::invalid_argument(
        "storage-basis indices need the analysis run with storages tracked");
  return series;
}

inline Eigen::MatrixXd flow_matrix(const Analysis& a, std::size_t s, Variant v,
                                   FlowKind kind) {
  switch (kind) {
    case FlowKind::composite: return a.composite_flow(s, v);
    case FlowKind::simple: return a.simple_flow(s, v);
    default: return a.subsystem_flow(s, v, 0);
  }
}

}  // namespace detail

/// Raw (unnormalized) pairwise quantity series for one variant: flows or
/// tracked storages.
inline MatrixSeries raw_series(const Analysis& a, Variant v, Basis basis,
                               FlowKind kind) {
  MatrixSeries out;
  out.t = a.grid;
  out.v.resize(a.size());
  if (basis == Basis::flow) {
    for (std::size_t s = 0; s < a.size(); ++s)
      out.v[s] = detail::flow_matrix(a, s, v, kind);
  } else {
    const auto& st = detail::storage_series(a, v, kind);
    for (std::size_t s = 0; s < a.size(); ++s) out.v[s] = st[s];
  }
  return out;
}

/// Effect matrix: raw series divided by the system normalizer (total
/// throughflow for the flow basis, total storage for the storage basis).
/// Samples with a vanishing normalizer come out as NaN.
inline MatrixSeries effect_matrix(const Analysis& a, Variant v, Basis basis,
                                  FlowKind kind) {
  MatrixSeries out = raw_series(a, v, basis, kind);
  for (std::size_t s = 0; s < a.size(); ++s) {
    double norm = basis == Basis::flow ? system_inflow(a.samples[s])
                                       : system_storage(a.samples[s]);
    if (norm > 0.0)
      out.v[s] /= norm;
    else
      out.v[s].setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

/// Antisymmetric utility: M - M^T entrywise. Exact skew symmetry holds in
/// floating point because a-b == -(b-a) in IEEE arithmetic.
inline Eigen::MatrixXd utility_of(const Eigen::MatrixXd& M) {
  Eigen::MatrixXd U(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index k = 0; k < M.cols(); ++k) U(i, k) = M(i, k) - M(k, i);
  return U;
}

inline MatrixSeries utility_matrix(const MatrixSeries& effect) {
  MatrixSeries out;
  out.t = effect.t;
  out.v.resize(effect.v.size());
  for (std::size_t s = 0; s < effect.v.size(); ++s)
    out.v[s] = utility_of(effect.v[s]);
  return out;
}

/// Whole-matrix scalar of a utility matrix via pairwise-cancelling
/// summation: exactly 0.0, never summation noise.
inline double utility_scalar(const Eigen::MatrixXd& U) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < U.rows(); ++i)
    for (Eigen::Index k = i + 1; k < U.cols(); ++k) s += U(i, k) + U(k, i);
  return s;
}

inline double effect_scalar(const Eigen::MatrixXd& M) { return M.sum(); }

// ---------------------------------------------------------------------------
// Derivatives / efficiencies. Fourth-order finite differences on a uniform
// grid; one-sided stencils of the same order at the ends. NaN samples
// poison exactly the stencil windows that touch them.

inline void require_uniform_grid(const std::vector<double>& t) {
  if (t.size() < 5)
    throw std::invalid_argument(
        "derivative stencils need at least 5 uniformly spaced samples");
  double h = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs(t[i] - t[i - 1] - h) > 1e-6 * std::max(1.0, std::abs(h)))
      throw std::invalid_argument(
          "derivative stencils need a uniform sample grid");
}

inline std::vector<double> derivative_series(const std::vector<double>& t,
                                             const std::vector<double>& f) {
  require_uniform_grid(t);
  if (f.size() != t.size())
    throw std::invalid_argument("derivative series length mismatch");
  const std::size_t n = t.size();
  const double h = (t.back() - t.front()) / static_cast<double>(n - 1);
  std::vector<double> d(n);
  auto at = [&](std::size_t i) { return f[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 2 && i + 2 < n) {
      d[i] = (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) /
             (12.0 * h);
    } else if (i < 2) {
      std::size_t b = i;
      d[i] = (-25.0 * at(b) + 48.0 * at(b + 1) - 36.0 * at(b + 2) +
              16.0 * at(b + 3) - 3.0 * at(b + 4)) /
             (12.0 * h);
    } else {
      std::size_t b = i;
      d[i] = (25.0 * at(b) - 48.0 * at(b - 1) + 36.0 * at(b - 2) -
              16.0 * at(b - 3) + 3.0 * at(b - 4)) /
             (12.0 * h);
    }
  }
  return d;
}

/// Entrywise derivative of a matrix series.
inline MatrixSeries derivative_series(const MatrixSeries& m) {
  require_uniform_grid(m.t);
  const std::size_t ns = m.t.size();
  const auto rows = m.v.front().rows(), cols = m.v.front().cols();
  MatrixSeries out;
  out.t = m.t;
  out.v.assign(ns, Eigen::MatrixXd(rows, cols));
  std::vector<double> f(ns);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) {
      for (std::size_t s = 0; s < ns; ++s) f[s] = m.v[s](i, k);
      std::vector<double> d = derivative_series(m.t, f);
      for (std::size_t s = 0; s < ns; ++s) out.v[s](i, k) = d[s];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Time-averaged indices: ratio of running integrals tracked as augmented
// states during the solve (numerator and denominator integrated
// separately, both from `accumulate_from`).

struct AverageIndices {
  double from = 0.0;
  double to = 0.0;
  // per variant: integral-averaged scalar effect index
  std::array<double, 5> composite_flow{};
  std::array<double, 5> simple_flow{};
  std::array<double, 5> composite_storage{};
  std::array<double, 5> simple_storage{};
  double utility = 0.0;  // exactly zero by skew symmetry
};

inline AverageIndices average_indices(const Analysis& a, double from,
                                      double to) {
  if (!a.integrals.tracked)
    throw std::invalid_argument(
        "averaged indices need the analysis run with index integrals");
  std::ptrdiff_t s0 = grid_index(a.grid, from);
  std::ptrdiff_t s1 = grid_index(a.grid, to);
  if (s0 < 0 || s1 < 0 || s1 <= s0)
    throw std::invalid_argument("average window must span sample grid points");
  const IndexIntegralSeries& ii = a.integrals;
  AverageIndices out;
  out.from = a.grid[static_cast<std::size_t>(s0)];
  out.to = a.grid[static_cast<std::size_t>(s1)];
  auto u0 = static_cast<std::size_t>(s0);
  auto u1 = static_cast<std::size_t>(s1);
  double dflow = ii.system_inflow[u1] - ii.system_inflow[u0];
  double dstore = ii.system_storage[u1] - ii.system_storage[u0];
  auto ratio = [](double num, double den) {
    return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  };
  for (int v = 0; v < 5; ++v) {
    auto uv = static_cast<std::size_t>(v);
    out.composite_flow[uv] = ratio(
        ii.composite_flow_sum[uv][u1] - ii.composite_flow_sum[uv][u0], dflow);
    out.simple_flow[uv] = ratio(
        ii.simple_flow_sum[uv][u1] - ii.simple_flow_sum[uv][u0], dflow);
    out.composite_storage[uv] =
        ratio(ii.composite_storage_sum[uv][u1] - ii.composite_storage_sum[uv][u0],
              dstore);
    out.simple_storage[uv] = ratio(
        ii.simple_storage_sum[uv][u1] - ii.simple_storage_sum[uv][u0], dstore);
  }
  out.utility =
      ratio(ii.utility_scalar[u1] - ii.utility_scalar[u0], dflow);
  return out;
}

// ---------------------------------------------------------------------------
// Exposure: integral of substorage over a window, taken as a difference of
// the cumulative augmented states at two grid samples.

struct ExposureReport {
  double from = 0.0;
  double to = 0.0;
  Eigen::MatrixXd full;   // n x (n+1), column 0 = initial subsystem
  Eigen::MatrixXd inputs; // n x n, input subsystems only
  Eigen::VectorXd by_compartment;  // row sums of `full`
  Eigen::VectorXd by_subsystem;    // column sums of `inputs`
  double total = 0.0;
  bool has_diact = false;
  std::array<Eigen::MatrixXd, 5> diact;  // windowed integral of composite storages
};

inline ExposureReport exposures(const Analysis& a, double from, double to) {
  if (a.exposure.empty())
    throw std::invalid_argument(
        "exposures need the analysis run with exposure tracking");
  std::ptrdiff_t s0 = grid_index(a.grid, from);
  std::ptrdiff_t s1 = grid_index(a.grid, to);
  if (s0 < 0 || s1 < 0 || s1 <= s0)
    throw std::invalid_argument(
        "exposure window must span sample grid points");
  auto u0 = static_cast<std::size_t>(s0);
  auto u1 = static_cast<std::size_t>(s1);
  ExposureReport out;
  out.from = a.grid[u0];
  out.to = a.grid[u1];
  out.full = a.exposure[u1] - a.exposure[u0];
  out.inputs = out.full.rightCols(a.n());
  out.by_compartment = out.full.rowwise().sum();
  out.by_subsystem = out.inputs.colwise().sum();
  out.total = out.full.sum();
  if (!a.diact_exposure[0].empty()) {
    out.has_diact = true;
    for (int v = 0; v < 5; ++v) {
      auto uv = static_cast<std::size_t>(v);
      out.diact[uv] = a.diact_exposure[uv][u1] - a.diact_exposure[uv][u0];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residence times and their drift.

struct ResidenceReport {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> r;     // r_i(t), NaN where masked
  std::vector<Eigen::VectorXd> rate;  // dr/dt by stencil (empty if grid unusable)
};

inline ResidenceReport residence_report(const Analysis& a) {
  ResidenceReport out;
  out.t = a.grid;
  out.r.resize(a.size());
  for (std::size_t s = 0; s < a.size(); ++s) out.r[s] = a.samples[s].residence;
  if (a.size() >= 5) {
    bool uniform = true;
    try {
      require_uniform_grid(a.grid);
    } catch (const std::invalid_argument&) {
      uniform = false;
    }
    if (uniform) {
      std::vector<double> f(a.size());
      out.rate.assign(a.size(), Eigen::VectorXd(a.n()));
      for (int i = 0; i < a.n(); ++i) {
        for (std::size_t s = 0; s < a.size(); ++s) f[s] = out.r[s](i);
        std::vector<double> d = derivative_series(a.grid, f);
        for (std::size_t s = 0; s < a.size(); ++s) out.rate[s](i) = d[s];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recovery diagnostic: settling-band analysis of the substorage matrix
// against a reference sample. Thresholds are entrywise,
//   thr_ik = rel_band * max(|X_ik(t_ref)|, floor_frac * x_i(t_ref)),
// the floor keeping numerically dormant entries from dominating. Onset is
// the first sample after t_ref outside any threshold; recovery is the
// first sample after onset from which every entry stays inside through the
// end of the horizon.

struct RecoveryDiagnostic {
  double t_ref = 0.0;
  double rel_band = 0.05;
  double floor_frac = 0.01;
  double onset = std::numeric_limits<double>::quiet_NaN();
  double recovery = std::numeric_limits<double>::quiet_NaN();
  double interval = std::numeric_limits<double>::quiet_NaN();
  bool in_band_at_end = true;
  Eigen::MatrixXd reference;
};

inline RecoveryDiagnostic recovery_diagnostic(const Analysis& a, double t_ref,
                                              double rel_band = 0.05,
                                              double floor_frac = 0.01) {
  std::ptrdiff_t sref = grid_index(a.grid, t_ref);
  if (sref < 0)
    throw std::invalid_argument("recovery reference must be a sample point");
  RecoveryDiagnostic out;
  out.t_ref = a.grid[static_cast<std::size_t>(sref)];
  out.rel_band = rel_band;
  out.floor_frac = floor_frac;
  const Eigen::MatrixXd& ref = a.samples[static_cast<std::size_t>(sref)].X;
  out.reference = ref;
  Eigen::VectorXd xref = ref.rowwise().sum();
  Eigen::MatrixXd thr(ref.rows(), ref.cols());
  for (Eigen::Index i = 0; i < ref.rows(); ++i)
    for (Eigen::Index k = 0; k < ref.cols(); ++k)
      thr(i, k) = rel_band *
                  std::max(std::abs(ref(i, k)), floor_frac * xref(i));

  auto inside = [&](std::size_t s) {
    const Eigen::MatrixXd& X = a.samples[s].X;
    for (Eigen::Index i = 0; i < ref.rows(); ++i)
      for (Eigen::Index k = 0; k < ref.cols(); ++k)
        if (std::abs(X(i, k) - ref(i, k)) > thr(i, k)) return false;
    return true;
  };

  std::size_t start = static_cast<std::size_t>(sref);
  std::size_t last_out = a.size();  // sentinel: never out
  for (std::size_t s = start + 1; s < a.size(); ++s) {
    if (!inside(s)) {
      if (std::isnan(out.onset)) out.onset = a.grid[s];
      last_out = s;
    }
  }
  if (last_out < a.size()) {
    out.in_band_at_end = last_out + 1 < a.size();
    if (last_out + 1 < a.size()) {
      out.recovery = a.grid[last_out + 1];
      out.interval = out.recovery - out.onset;
    }
  }
  return out;
}

}  // namespace ecoflux
