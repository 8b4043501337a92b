#pragma once

// Pairwise interaction analysis built on the five-way flow decomposition.
// For an ordered pair (i, j), the direction sign and strength of each
// variant quantify who ultimately feeds whom; a small rule table turns the
// direct/indirect structure into ecological verdicts (neutralism,
// mutualism, commensalism, competition, exploitation).
//
// Everything runs on either basis (flows vs storages) and any induction
// (all inputs = composite, initial stocks = subsystem 0, single input =
// simple), with classification thresholds relative to the corresponding
// system normalizer.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "indicators.hpp"

namespace ecoflux {

enum class Scale {
  pairwise,             // |difference| / (tau_ij + tau_ji), same variant
  transfer_relative,    // / (tau^t_ij + tau^t_ji)
  throughflow_relative, // / (tau_in_i + tau_in_j)  (storage basis: x_i + x_j)
  global,               // / total system throughflow (or storage)
};

inline const char* scale_name(Scale s) {
  switch (s) {
    case Scale::pairwise: return "pairwise";
    case Scale::transfer_relative: return "transfer";
    case Scale::throughflow_relative: return "throughflow";
    default: return "global";
  }
}

enum class Induction { all_inputs, initial_stocks, single_input };

inline const char* induction_name(Induction i) {
  switch (i) {
    case Induction::all_inputs: return "all-inputs";
    case Induction::initial_stocks: return "initial-stocks";
    default: return "single-input";
  }
}

inline FlowKind induction_kind(Induction i) {
  switch (i) {
    case Induction::all_inputs: return FlowKind::composite;
    case Induction::initial_stocks: return FlowKind::initial;
    default: return FlowKind::simple;
  }
}

enum class InteractionType {
  neutralism,
  mutualism,
  commensalism,
  competition,
  mixed_donor_mediated,
  exploitation,
  unclassified,
  ambiguous,
};

inline const char* interaction_name(InteractionType t) {
  switch (t) {
    case InteractionType::neutralism: return "neutralism";
    case InteractionType::mutualism: return "mutualism";
    case InteractionType::commensalism: return "commensalism";
    case InteractionType::competition: return "competition";
    case InteractionType::mixed_donor_mediated: return "mixed-donor-mediated";
    case InteractionType::exploitation: return "exploitation";
    case InteractionType::unclassified: return "unclassified";
    default: return "ambiguous";
  }
}

// ---------------------------------------------------------------------------
// Sign/strength of one variant for an ordered pair.

struct SignStrength {
  int sign = 0;          // sgn(tau_ij - tau_ji)
  double strength = 0.0; // scale-normalized |difference|; NaN if undefined
};

/// Core computation from one sample's variant matrix M (M(i,j) = quantity
/// from j into i). `pair_norm` and `global_norm` supply the
/// scale-dependent denominators.
inline SignStrength sign_strength_of(const Eigen::MatrixXd& M,
                                     const Eigen::MatrixXd& transfer, int i,
                                     int j, Scale scale,
                                     const Eigen::VectorXd& unit_norm,
                                     double global_norm) {
  SignStrength out;
  double fwd = M(i, j), rev = M(j, i);
  double diff = fwd - rev;
  out.sign = diff > 0.0 ? 1 : diff < 0.0 ? -1 : 0;
  double den = 0.0;
  switch (scale) {
    case Scale::pairwise: den = fwd + rev; break;
    case Scale::transfer_relative: den = transfer(i, j) + transfer(j, i); break;
    case Scale::throughflow_relative: den = unit_norm(i) + unit_norm(j); break;
    case Scale::global: den = global_norm; break;
  }
  if (den > 0.0)
    out.strength = std::abs(diff) / den;
  else if (fwd == 0.0 && rev == 0.0)
    out.strength = 0.0;  // nothing flows: strength is zero, not undefined
  else
    out.strength = std::numeric_limits<double>::quiet_NaN();
  return out;
}

struct SignStrengthSeries {
  int i = 0, j = 0;
  Variant variant = Variant::direct;
  Scale scale = Scale::pairwise;
  Basis basis = Basis::flow;
  Induction induction = Induction::all_inputs;
  std::vector<double> t;
  std::vector<SignStrength> v;
};

inline SignStrengthSeries sign_strength(const Analysis& a,
                                        std::pair<int, int> pair, Variant v,
                                        Scale scale, Basis basis = Basis::flow,
                                        Induction ind = Induction::all_inputs) {
  SignStrengthSeries out;
  out.i = pair.first;
  out.j = pair.second;
  out.variant = v;
  out.scale = scale;
  out.basis = basis;
  out.induction = ind;
  out.t = a.grid;
  out.v.resize(a.size());
  FlowKind kind = induction_kind(ind);
  MatrixSeries M = raw_series(a, v, basis, kind);
  MatrixSeries T = raw_series(a, Variant::transfer, basis, kind);
  for (std::size_t s = 0; s < a.size(); ++s) {
    const DecomposedEval& de = a.samples[s];
    Eigen::VectorXd unit = basis == Basis::flow ? de.state.total_inflow
                                                : de.state.x;
    double global = basis == Basis::flow ? system_inflow(de)
                                         : system_storage(de);
    out.v[s] = sign_strength_of(M.v[s], T.v[s], pair.first, pair.second,
                                scale, unit, global);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rule-table classification.

struct ClassifyOptions {
  Basis basis = Basis::flow;
  Induction induction = Induction::all_inputs;
  double commensal_min = 0.75;  // donor-share asymmetry for commensalism
  double compete_max = 0.25;    // ... and symmetry for competition
};

struct Verdict {
  InteractionType type = InteractionType::unclassified;
  double strength = std::numeric_limits<double>::quiet_NaN();
  int exploiter = -1;  // compartment index for exploitation
  std::vector<std::pair<int, double>> donors;  // shared donor -> asymmetry
  std::vector<InteractionType> fired;
};

/// Classify one sample against the rule table. Rows in order:
///   neutralism    direct utility zero, no shared third-party donor,
///                 indirect utility zero
///   mutualism     same, but indirect utility nonzero;
///                 strength (tau^i_ij + tau^i_ji) / (unit_i + unit_j)
///   commensalism  direct utility zero, shared donor(s) k, donor share
///                 asymmetry far above 1/2
///   competition   ... far below 1/2 (between: mixed-donor-mediated)
///   exploitation  tau^d one way only; strength tau^d / donor outflow
///
/// D and I are the direct/indirect variant matrices on the chosen
/// basis/induction; `unit_norm` is tau_in (flow basis) or x (storage
/// basis); `donor_out` is tau_out or x; eps is the equality tolerance
/// (1e-9 of the system normalizer).
inline Verdict classify_sample(const Eigen::MatrixXd& D,
                               const Eigen::MatrixXd& I, int i, int j,
                               const Eigen::VectorXd& unit_norm,
                               const Eigen::VectorXd& donor_out, double eps,
                               const ClassifyOptions& opts) {
  Verdict out;
  const double dij = D(i, j), dji = D(j, i);
  const double iij = I(i, j), iji = I(j, i);
  const bool direct_balanced = std::abs(dij - dji) <= eps;
  const bool indirect_balanced = std::abs(iij - iji) <= eps;

  for (int k = 0; k < D.rows(); ++k) {
    if (k == i || k == j) continue;
    if (D(i, k) > eps && D(j, k) > eps) {
      double share = std::abs(D(i, k) - D(j, k)) / (D(i, k) + D(j, k));
      out.donors.emplace_back(k, share);
    }
  }
  const bool shared_donor = !out.donors.empty();

  auto fire = [&](InteractionType t, double strength) {
    out.fired.push_back(t);
    out.type = t;
    out.strength = strength;
  };

  if (direct_balanced && !shared_donor) {
    if (indirect_balanced) {
      fire(InteractionType::neutralism, 0.0);
    } else {
      double den = unit_norm(i) + unit_norm(j);
      fire(InteractionType::mutualism,
           den > 0.0 ? (iij + iji) / den
                     : std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (direct_balanced && shared_donor) {
    bool all_hi = true, all_lo = true;
    double hi = 0.0, lo = 1.0;
    for (const auto& [k, share] : out.donors) {
      all_hi = all_hi && share >= opts.commensal_min;
      all_lo = all_lo && share <= opts.compete_max;
      hi = std::max(hi, share);
      lo = std::min(lo, share);
    }
    if (all_hi)
      fire(InteractionType::commensalism, lo);
    else if (all_lo)
      fire(InteractionType::competition, hi);
    else
      fire(InteractionType::mixed_donor_mediated,
           std::numeric_limits<double>::quiet_NaN());
  }
  if (dij > eps && dji <= eps) {
    double den = donor_out(j);
    fire(InteractionType::exploitation,
         den > 0.0 ? dij / den : std::numeric_limits<double>::quiet_NaN());
    out.exploiter = i;
  } else if (dji > eps && dij <= eps) {
    double den = donor_out(i);
    fire(InteractionType::exploitation,
         den > 0.0 ? dji / den : std::numeric_limits<double>::quiet_NaN());
    out.exploiter = j;
  }

  if (out.fired.empty()) {
    out.type = InteractionType::unclassified;
    out.strength = std::numeric_limits<double>::quiet_NaN();
  } else if (out.fired.size() > 1) {
    out.type = InteractionType::ambiguous;
    out.strength = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct VerdictSeries {
  int i = 0, j = 0;
  ClassifyOptions options;
  std::vector<double> t;
  std::vector<Verdict> v;
};

inline VerdictSeries classify_pair(const Analysis& a, std::pair<int, int> pair,
                                   const ClassifyOptions& opts = {}) {
  VerdictSeries out;
  out.i = pair.first;
  out.j = pair.second;
  out.options = opts;
  out.t = a.grid;
  out.v.resize(a.size());
  FlowKind kind = induction_kind(opts.induction);
  MatrixSeries D = raw_series(a, Variant::direct, opts.basis, kind);
  MatrixSeries I = raw_series(a, Variant::indirect, opts.basis, kind);
  for (std::size_t s = 0; s < a.size(); ++s) {
    const DecomposedEval& de = a.samples[s];
    double norm = opts.basis == Basis::flow ? system_inflow(de)
                                            : system_storage(de);
    double eps = 1e-9 * norm;
    Eigen::VectorXd unit = opts.basis == Basis::flow ? de.state.total_inflow
                                                     : de.state.x;
    Eigen::VectorXd donor_out = opts.basis == Basis::flow
                                    ? de.state.total_outflow
                                    : de.state.x;
    out.v[s] = classify_sample(D.v[s], I.v[s], pair.first, pair.second, unit,
                               donor_out, eps, opts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global-scale strengths for a pair: mutualistic coupling and both
// normalizations of the exploitation share.

struct GlobalStrengths {
  int i = 0, j = 0;
  Basis basis = Basis::flow;
  Induction induction = Induction::all_inputs;
  std::vector<double> t;
  std::vector<double> mutualism;             // (i_ij + i_ji) / sigma
  std::vector<double> exploitation_over_out; // tau^d_ij / sigma_out
  std::vector<double> exploitation_over_in;  // tau^d_ij / sigma_in
};

inline GlobalStrengths global_strengths(const Analysis& a,
                                        std::pair<int, int> pair,
                                        Basis basis = Basis::flow,
                                        Induction ind = Induction::all_inputs) {
  GlobalStrengths out;
  out.i = pair.first;
  out.j = pair.second;
  out.basis = basis;
  out.induction = ind;
  out.t = a.grid;
  const std::size_t ns = a.size();
  out.mutualism.resize(ns);
  out.exploitation_over_out.resize(ns);
  out.exploitation_over_in.resize(ns);
  FlowKind kind = induction_kind(ind);
  MatrixSeries D = raw_series(a, Variant::direct, basis, kind);
  MatrixSeries I = raw_series(a, Variant::indirect, basis, kind);
  auto guard = [](double num, double den) {
    return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  };
  for (std::size_t s = 0; s < ns; ++s) {
    const DecomposedEval& de = a.samples[s];
    if (basis == Basis::flow) {
      out.mutualism[s] = guard(
          I.v[s](pair.first, pair.second) + I.v[s](pair.second, pair.first),
          system_inflow(de));
      out.exploitation_over_out[s] =
          guard(D.v[s](pair.first, pair.second), system_outflow(de));
      out.exploitation_over_in[s] =
          guard(D.v[s](pair.first, pair.second), system_inflow(de));
    } else {
      double sigma = system_storage(de);
      out.mutualism[s] = guard(
          I.v[s](pair.first, pair.second) + I.v[s](pair.second, pair.first),
          sigma);
      out.exploitation_over_out[s] =
          guard(D.v[s](pair.first, pair.second), sigma);
      out.exploitation_over_in[s] =
          guard(D.v[s](pair.first, pair.second), sigma);
    }
  }
  return out;
}

}  // namespace ecoflux
