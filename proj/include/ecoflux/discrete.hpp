#pragma once

// Sequence-of-steady-states mode: each row of an observed flow table is
// treated as one steady snapshot of the network, and the decomposition is
// solved algebraically instead of by integration:
//
//   X     = diag(x) (T - F)^{-1} Z        substorage (needs stocks x)
//   T_out = diag(tau_out) (T - F)^{-1} Z  outward subthroughflows
//   T_in  = Z + F (T - F)^{-1} Z          inward subthroughflows
//
// with T = diag(tau_out) and Z = diag(z). The initial-subsystem column is
// zero at steady state. The same five-way machinery then applies per row.
//
// Input: CSV with header columns t (optional), z_<c>, y_<c>, x_<c>
// (optional), f_<i>_<j> = flow into i from j. Compartments come from the
// z_ columns in order of appearance.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "diact.hpp"
#include "io.hpp"

namespace ecoflux {

struct DiscreteStep {
  double t = 0.0;
  Eigen::VectorXd z, y, tau_in, tau_out;
  Eigen::MatrixXd flow;
  bool has_stocks = false;
  Eigen::VectorXd x;
  Eigen::MatrixXd X;      // n x (n+1), column 0 zero (needs stocks)
  Eigen::MatrixXd T_in;   // n x (n+1)
  Eigen::MatrixXd T_out;  // n x (n+1)
  Eigen::VectorXd residence;  // needs stocks, else NaN
  DiactMatrices diact;
};

struct DiscreteSeries {
  std::vector<std::string> names;
  std::vector<DiscreteStep> steps;
  std::vector<Diagnostic> diagnostics;  // steady-state warnings etc.
  bool has_stocks = false;

  int n() const { return static_cast<int>(names.size()); }
  std::size_t size() const { return steps.size(); }
};

namespace detail {

inline int discrete_column(const std::vector<std::string>& header,
                           const std::string& name) {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return static_cast<int>(c);
  return -1;
}

}  // namespace detail

/// Build the per-step decomposition from a parsed table. Throws ModelError
/// when the table is structurally unusable; singular steps and steady-state
/// violations become diagnostics (severity error and warning respectively).
inline DiscreteSeries discrete_series(const Csv& table) {
  DiscreteSeries out;
  std::vector<Diagnostic>& ds = out.diagnostics;
  const auto& header = table.header;

  for (const std::string& col : header)
    if (col.rfind("z_", 0) == 0) out.names.push_back(col.substr(2));
  const int n = out.n();
  if (n == 0)
    throw ModelError({{Severity::error,
                       "table needs z_<compartment> columns", "table"}});

  int t_col = detail::discrete_column(header, "t");
  std::vector<int> z_col(static_cast<std::size_t>(n)),
      y_col(static_cast<std::size_t>(n)), x_col(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> f_col(
      static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
  out.has_stocks = true;
  for (int i = 0; i < n; ++i) {
    const std::string& c = out.names[static_cast<std::size_t>(i)];
    z_col[static_cast<std::size_t>(i)] = detail::discrete_column(header, "z_" + c);
    y_col[static_cast<std::size_t>(i)] = detail::discrete_column(header, "y_" + c);
    x_col[static_cast<std::size_t>(i)] = detail::discrete_column(header, "x_" + c);
    if (y_col[static_cast<std::size_t>(i)] < 0)
      throw ModelError({{Severity::error, "missing column y_" + c, "table"}});
    if (x_col[static_cast<std::size_t>(i)] < 0) out.has_stocks = false;
    for (int j = 0; j < n; ++j)
      f_col[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          detail::discrete_column(
              header, "f_" + c + "_" + out.names[static_cast<std::size_t>(j)]);
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::vector<Cell>& row = table.rows[r];
    auto value = [&](int col) -> double {
      if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return 0.0;
      const Cell& cell = row[static_cast<std::size_t>(col)];
      return cell.kind == Cell::number ? cell.num : 0.0;
    };
    DiscreteStep st;
    st.t = t_col >= 0 ? value(t_col) : static_cast<double>(r);
    st.z.resize(n);
    st.y.resize(n);
    st.flow.setZero(n, n);
    for (int i = 0; i < n; ++i) {
      st.z(i) = value(z_col[static_cast<std::size_t>(i)]);
      st.y(i) = value(y_col[static_cast<std::size_t>(i)]);
      for (int j = 0; j < n; ++j)
        st.flow(i, j) =
            value(f_col[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
    st.tau_in = st.z + st.flow.rowwise().sum();
    st.tau_out = st.y + st.flow.colwise().sum().transpose();
    st.has_stocks = out.has_stocks;
    if (out.has_stocks) {
      st.x.resize(n);
      for (int i = 0; i < n; ++i) st.x(i) = value(x_col[static_cast<std::size_t>(i)]);
    }

    double scale = std::max(1.0, st.tau_out.cwiseAbs().maxCoeff());
    double residual = (st.tau_in - st.tau_out).cwiseAbs().maxCoeff();
    if (residual > 1e-6 * scale)
      ds.push_back({Severity::warning,
                    "row " + std::to_string(r + 1) +
                        " is not balanced (|inflow-outflow| = " +
                        detail::format_double(residual) + ")",
                    "table"});

    Eigen::MatrixXd TF = Eigen::MatrixXd(st.tau_out.asDiagonal()) - st.flow;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(TF);
    if (!lu.isInvertible()) {
      ds.push_back({Severity::error,
                    "row " + std::to_string(r + 1) +
                        ": throughflow-minus-flow matrix is singular",
                    "table"});
      continue;
    }
    Eigen::MatrixXd G = lu.solve(Eigen::MatrixXd(st.z.asDiagonal()));

    st.T_out.setZero(n, n + 1);
    st.T_out.rightCols(n) = st.tau_out.asDiagonal() * G;
    st.T_in.setZero(n, n + 1);
    st.T_in.rightCols(n) =
        Eigen::MatrixXd(st.z.asDiagonal()) + st.flow * G;
    st.X.setZero(n, n + 1);
    st.residence.setConstant(n, std::numeric_limits<double>::quiet_NaN());
    if (out.has_stocks) {
      st.X.rightCols(n) = st.x.asDiagonal() * G;
      for (int i = 0; i < n; ++i)
        if (st.tau_out(i) > 0.0) st.residence(i) = st.x(i) / st.tau_out(i);
    }

    double eps_flow = 1e-12 * (1.0 + st.z.cwiseAbs().maxCoeff());
    st.diact = diact_matrices_from(st.flow, st.tau_out, st.T_out,
                                   st.T_in.rightCols(n) -
                                       Eigen::MatrixXd(st.z.asDiagonal()),
                                   eps_flow);
    out.steps.push_back(std::move(st));
  }
  return out;
}

inline DiscreteSeries discrete_series_from_file(const std::string& path) {
  return discrete_series(read_csv(path));
}

}  // namespace ecoflux
