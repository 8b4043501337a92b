#pragma once

// Transient flow/storage chains: the fate of the flow entering a path
// i -> j -> l -> ... within one subsystem, tracked link by link. Each node
// after the first carries one extra state x_w (storage in that compartment
// owed to the traced inflow) driven only by the previous link:
//
//   first link   inflow = q_ji * X_ik          (subflow inside subsystem k)
//   deeper link  inflow = q_ml * x_w(previous)
//   every node   d x_w/dt = inflow - rho * x_w
//
// Coupling is strictly one way, so the chain rides along the decomposed
// solve without changing it. Tracking starts at a configurable time; the
// chain state is frozen at zero before it.

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "model_format.hpp"
#include "partition.hpp"

namespace ecoflux {

struct FlowPath {
  int subsystem = 1;       // 0 = initial stocks, 1..n = input subsystems
  std::vector<int> nodes;  // 0-based compartment indices, length >= 2
  double start = std::numeric_limits<double>::quiet_NaN();  // default: t0
};

/// Parse "k: i -> j -> l" (k and the nodes are 1-based numbers or
/// compartment names; k = 0 selects the initial-stock subsystem).
inline FlowPath parse_path(std::string_view text,
                           const CompartmentalModel& m) {
  auto fail = [&](const std::string& reason) {
    throw ParseError("flow path '" + std::string(text) + "': " + reason,
                     SourcePos{});
  };
  FlowPath p;
  std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) fail("expected 'subsystem: i -> j'");
  std::string_view head = detail::trim(text.substr(0, colon));
  if (head == "0") {
    p.subsystem = 0;
  } else {
    int k = m.compartment_index(head);
    if (k < 0) fail("unknown subsystem '" + std::string(head) + "'");
    p.subsystem = k + 1;
  }
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    std::size_t arrow = rest.find("->");
    std::string_view item = detail::trim(
        arrow == std::string_view::npos ? rest : rest.substr(0, arrow));
    if (item.empty()) fail("empty path node");
    int idx = m.compartment_index(item);
    if (idx < 0) fail("unknown compartment '" + std::string(item) + "'");
    p.nodes.push_back(idx);
    if (arrow == std::string_view::npos) break;
    rest = rest.substr(arrow + 2);
  }
  if (p.nodes.size() < 2) fail("need at least two nodes");
  return p;
}

inline std::string path_to_string(const FlowPath& p,
                                  const CompartmentalModel& m) {
  std::string s = p.subsystem == 0
                      ? "0"
                      : m.names[static_cast<std::size_t>(p.subsystem - 1)];
  s += ":";
  for (std::size_t i = 0; i < p.nodes.size(); ++i)
    s += (i ? "->" : " ") +
         m.names[static_cast<std::size_t>(p.nodes[i])];
  return s;
}

/// Structural checks: nodes exist, every link has a declared flow.
inline std::vector<Diagnostic> validate_path(const CompartmentalModel& m,
                                             const FlowPath& p) {
  std::vector<Diagnostic> out;
  auto err = [&](std::string msg) {
    out.push_back({Severity::error, std::move(msg), "path"});
  };
  if (p.subsystem < 0 || p.subsystem > m.n)
    err("subsystem index out of range");
  if (p.nodes.size() < 2) err("need at least two nodes");
  for (int node : p.nodes)
    if (node < 0 || node >= m.n) {
      err("compartment index out of range");
      return out;
    }
  for (std::size_t l = 0; l + 1 < p.nodes.size(); ++l) {
    int from = p.nodes[l], to = p.nodes[l + 1];
    const Expr& q = m.intensity(to, from);
    if (q.empty() || q.is_literal_zero())
      err("no declared flow " + m.names[static_cast<std::size_t>(to)] +
          "<-" + m.names[static_cast<std::size_t>(from)]);
  }
  return out;
}

/// Chain states: one substorage plus one cumulative integral per node
/// after the first, laid out [storages..., integrals...].
inline AugmentedBlock transient_block(const FlowPath& p, double start,
                                      double scale, const std::string& name) {
  AugmentedBlock b;
  b.name = name;
  const int links = static_cast<int>(p.nodes.size()) - 1;
  b.size = 2 * links;
  FlowPath path = p;
  b.rhs = [path, start, scale, links](
              const StateEval& se, const Eigen::Map<const Eigen::MatrixXd>& X,
              std::span<const double> vals, std::span<double> derivs) {
    double gate = se.t >= start ? 1.0 : 0.0;
    for (int l = 0; l < links; ++l) {
      int node = path.nodes[static_cast<std::size_t>(l + 1)];
      int prev = path.nodes[static_cast<std::size_t>(l)];
      double inflow =
          l == 0 ? gate * scale * se.intensity(node, prev) *
                       X(prev, path.subsystem)
                 : se.intensity(node, prev) * vals[static_cast<std::size_t>(l - 1)];
      derivs[static_cast<std::size_t>(l)] =
          inflow -
          se.outflow_intensity(node) * vals[static_cast<std::size_t>(l)];
      derivs[static_cast<std::size_t>(links + l)] =
          vals[static_cast<std::size_t>(l)];
    }
  };
  return b;
}

/// Per-node series extracted after the solve. Index [l] corresponds to
/// path node l+1 (the first node only feeds the chain).
struct TransientTrace {
  FlowPath path;
  double start = 0.0;
  std::vector<double> grid;
  std::vector<std::vector<double>> inflow;     // into node l+1 along the path
  std::vector<std::vector<double>> storage;    // x_w at node l+1
  std::vector<std::vector<double>> outflow;    // toward node l+2 (last: 0-size)
  std::vector<std::vector<double>> residence;  // r of node l+1, NaN masked
  std::vector<std::vector<double>> exposure;   // cumulative integral of x_w
};

inline TransientTrace extract_trace(const DecomposedTrajectory& traj,
                                    const FlowPath& p, double start,
                                    double scale, const std::string& name) {
  TransientTrace tr;
  tr.path = p;
  tr.start = start;
  tr.grid = traj.grid;
  const int links = static_cast<int>(p.nodes.size()) - 1;
  const std::size_t ns = traj.grid.size();
  tr.inflow.assign(static_cast<std::size_t>(links),
                   std::vector<double>(ns, 0.0));
  tr.storage = tr.inflow;
  tr.exposure = tr.inflow;
  tr.residence = tr.inflow;
  tr.outflow.assign(static_cast<std::size_t>(links > 0 ? links - 1 : 0),
                    std::vector<double>(ns, 0.0));
  const auto& aux = traj.aux.at(name);
  for (std::size_t s = 0; s < ns; ++s) {
    const DecomposedEval& de = traj.samples[s];
    const Eigen::VectorXd& vals = aux[s];
    double gate = de.t >= start ? 1.0 : 0.0;
    for (int l = 0; l < links; ++l) {
      int node = p.nodes[static_cast<std::size_t>(l + 1)];
      int prev = p.nodes[static_cast<std::size_t>(l)];
      tr.inflow[static_cast<std::size_t>(l)][s] =
          l == 0 ? gate * scale * de.state.intensity(node, prev) *
                       de.X(prev, p.subsystem)
                 : de.state.intensity(node, prev) * vals(l - 1);
      tr.storage[static_cast<std::size_t>(l)][s] = vals(l);
      tr.exposure[static_cast<std::size_t>(l)][s] = vals(links + l);
      tr.residence[static_cast<std::size_t>(l)][s] = de.residence(node);
      if (l + 1 < links) {
        int next = p.nodes[static_cast<std::size_t>(l + 2)];
        tr.outflow[static_cast<std::size_t>(l)][s] =
            de.state.intensity(next, node) * vals(l);
      }
    }
  }
  return tr;
}

/// Convenience one-shot: integrate the model with this one chain attached.
inline TransientTrace transient_chain(const CompartmentalModel& m,
                                      const FlowPath& p,
                                      const ode::IntegrationSpec& spec,
                                      double scale = 1.0) {
  for (const Diagnostic& d : validate_path(m, p))
    if (d.severity == Severity::error)
      throw std::invalid_argument("flow path: " + d.message);
  double start = std::isnan(p.start) ? spec.t0 : p.start;
  DecomposeOptions opts;
  opts.blocks.push_back(transient_block(p, start, scale, "chain"));
  DecomposedTrajectory traj = solve_decomposed(m, spec, opts);
  return extract_trace(traj, p, start, scale, "chain");
}

}  // namespace ecoflux
