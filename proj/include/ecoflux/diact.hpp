#pragma once

// Five-way decomposition of pairwise flows: direct, indirect, acyclic,
// cycling, transfer. Each variant has a dimensionless distribution matrix
// N built from the subthroughflow matrices; multiplying N by a diagonal of
// donor outflows yields flows resolved to a choice of source:
//
//   composite   N * diag(tau_out_k - tau_out_{k,0})   all environmental inputs
//   simple      N * diag(tau_out_{k,k})               the donor's own input
//   subsystem l N * diag(tau_out_{k,l})               one subsystem (0 = initial)
//
// Donor columns whose own-input outflow tau_out_{k,k} falls below the flow
// guard are masked to zero in every variant (the ratios lose meaning
// there); masked columns are reported so exports can flag the samples.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "partition.hpp"

namespace ecoflux {

enum class Variant : int { direct = 0, indirect, acyclic, cycling, transfer };

inline constexpr std::array<Variant, 5> all_variants = {
    Variant::direct, Variant::indirect, Variant::acyclic, Variant::cycling,
    Variant::transfer};

inline char variant_letter(Variant v) {
  return "diact"[static_cast<int>(v)];
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::direct: return "direct";
    case Variant::indirect: return "indirect";
    case Variant::acyclic: return "acyclic";
    case Variant::cycling: return "cycling";
    default: return "transfer";
  }
}

struct DiactMatrices {
  std::array<Eigen::MatrixXd, 5> N;  // distribution matrices, n x n
  Eigen::MatrixXd T_out;             // n x (n+1) outward subthroughflows
  Eigen::MatrixXd net_inward;        // inward subthroughflow minus input, n x n
  Eigen::VectorXd own_outflow;       // tau_out_{k,k}
  Eigen::VectorXd initial_outflow;   // tau_out_{k,0}
  Eigen::VectorXd total_outflow;     // tau_out_k
  std::vector<char> masked;          // 1 where donor column k is masked
};

/// Core construction from already-assembled matrices; shared by the
/// dynamic and steady-table paths. `flow` is F (n x n), `T_out` the
/// outward subthroughflow matrix with column 0 = initial subsystem,
/// `net_inward` the inward subthroughflow matrix net of inputs (n x n over
/// the input subsystems).
inline DiactMatrices diact_matrices_from(const Eigen::MatrixXd& flow,
                                         const Eigen::VectorXd& total_outflow,
                                         const Eigen::MatrixXd& T_out,
                                         const Eigen::MatrixXd& net_inward,
                                         double eps_flow) {
  const auto n = flow.rows();
  DiactMatrices dm;
  dm.T_out = T_out;
  dm.net_inward = net_inward;
  dm.total_outflow = total_outflow;
  dm.own_outflow.resize(n);
  dm.initial_outflow = T_out.col(0);
  for (Eigen::Index k = 0; k < n; ++k) dm.own_outflow(k) = T_out(k, k + 1);
  dm.masked.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index k = 0; k < n; ++k)
    if (!(dm.own_outflow(k) > eps_flow))
      dm.masked[static_cast<std::size_t>(k)] = 1;

  Eigen::MatrixXd& Nd = dm.N[static_cast<int>(Variant::direct)];
  Eigen::MatrixXd& Ni = dm.N[static_cast<int>(Variant::indirect)];
  Eigen::MatrixXd& Na = dm.N[static_cast<int>(Variant::acyclic)];
  Eigen::MatrixXd& Nc = dm.N[static_cast<int>(Variant::cycling)];
  Eigen::MatrixXd& Nt = dm.N[static_cast<int>(Variant::transfer)];
  Nd.setZero(n, n);
  Nt.setZero(n, n);
  Nc.setZero(n, n);

  Eigen::VectorXd cycle_ratio(n);  // net inward from own subsystem / own outflow
  for (Eigen::Index i = 0; i < n; ++i)
    cycle_ratio(i) = dm.masked[static_cast<std::size_t>(i)]
                         ? 0.0
                         : net_inward(i, i) / dm.own_outflow(i);

  for (Eigen::Index k = 0; k < n; ++k) {
    if (dm.masked[static_cast<std::size_t>(k)]) continue;
    Nd.col(k) = flow.col(k) / total_outflow(k);
    Nt.col(k) = net_inward.col(k) / dm.own_outflow(k);
    for (Eigen::Index i = 0; i < n; ++i)
      Nc(i, k) = cycle_ratio(i) * T_out(i, k + 1) / dm.own_outflow(k);
  }
  Ni = Nt - Nd;
  Na = Nt - Nc;
  return dm;
}

inline DiactMatrices diact_matrices(const DecomposedEval& s, const Guards& g) {
  const auto n = s.state.x.size();
  return diact_matrices_from(s.state.flow, s.state.total_outflow, s.T_out,
                             s.T_in.rightCols(n) -
                                 Eigen::MatrixXd(s.state.input.asDiagonal()),
                             g.flow);
}

inline Eigen::MatrixXd composite_flows(const DiactMatrices& dm, Variant v) {
  return dm.N[static_cast<int>(v)] *
         (dm.total_outflow - dm.initial_outflow).asDiagonal();
}

inline Eigen::MatrixXd simple_flows(const DiactMatrices& dm, Variant v) {
  return dm.N[static_cast<int>(v)] * dm.own_outflow.asDiagonal();
}

/// Flows resolved to one source subsystem; ell = 0 is the initial stocks.
inline Eigen::MatrixXd subsystem_flows(const DiactMatrices& dm, Variant v,
                                       int ell) {
  return dm.N[static_cast<int>(v)] * dm.T_out.col(ell).asDiagonal();
}

}  // namespace ecoflux
