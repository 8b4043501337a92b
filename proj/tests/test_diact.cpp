#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>
#include <ecoflux/analysis.hpp>
#include <ecoflux/diact.hpp>
#include <ecoflux/indicators.hpp>

#include "fixtures.hpp"

using namespace ecoflux;

namespace {

double rel_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double scale = std::max({1.0, a.lpNorm<Eigen::Infinity>(),
                           b.lpNorm<Eigen::Infinity>()});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace

TEST_CASE("steady two-compartment loop has the textbook direct shares") {
  CompartmentalModel m = fixtures::hippe_constant();
  Analysis a;
  {
    AnalyzeOptions opts;
    opts.spec = fixtures::spec_for(0.0, 40.0, 9);
    a = analyze(m, opts);
  }
  const DiactMatrices& dm = a.diact.back();

  Eigen::MatrixXd Nd(2, 2);
  Nd << 0.0, 2.0 / 7.0,
      4.0 / 5.0, 0.0;
  CHECK(rel_gap(dm.N[static_cast<int>(Variant::direct)], Nd) < 1e-6);

  // Transfer columns scale net inward flow by the donor's own outflow.
  Eigen::MatrixXd Nt(2, 2);
  Nt << 8.0 / 35.0, 2.0 / 7.0,
      4.0 / 5.0, 8.0 / 35.0;
  CHECK(rel_gap(dm.N[static_cast<int>(Variant::transfer)], Nt) < 1e-6);

  CHECK(std::abs(dm.own_outflow(0) - 35.0 / 9.0) < 1e-5);
  CHECK(std::abs(dm.total_outflow(0) - 5.0) < 1e-5);
  CHECK(dm.initial_outflow.lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(dm.masked == std::vector<char>{0, 0});
}

TEST_CASE("empty donors are masked at the start of a filling run") {
  CompartmentalModel m = fixtures::load("chain2.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 50.0, 101);
  Analysis a = analyze(m, opts);

  const DiactMatrices& first = a.diact.front();
  CHECK(first.masked == std::vector<char>{1, 1});
  for (const Eigen::MatrixXd& N : first.N) CHECK(N.isZero(0.0));

  const DiactMatrices& last = a.diact.back();
  CHECK(last.masked[0] == 0);
}

TEST_CASE("variant identities hold sample by sample") {
  CompartmentalModel m = fixtures::load("hallam.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 25.0, 101);
  Analysis a = analyze(m, opts);

  for (std::size_t s = 0; s < a.size(); ++s) {
    const DiactMatrices& dm = a.diact[s];
    const Eigen::MatrixXd& Nd = dm.N[static_cast<int>(Variant::direct)];
    const Eigen::MatrixXd& Ni = dm.N[static_cast<int>(Variant::indirect)];
    const Eigen::MatrixXd& Na = dm.N[static_cast<int>(Variant::acyclic)];
    const Eigen::MatrixXd& Nc = dm.N[static_cast<int>(Variant::cycling)];
    const Eigen::MatrixXd& Nt = dm.N[static_cast<int>(Variant::transfer)];
    CHECK(rel_gap(Nd + Ni, Nt) < 1e-10);
    CHECK(rel_gap(Na + Nc, Nt) < 1e-10);
  }
}

TEST_CASE("subsystem flows sum to the composite flow") {
  CompartmentalModel m = fixtures::load("hallam.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 25.0, 51);
  Analysis a = analyze(m, opts);

  for (std::size_t s = 0; s < a.size(); ++s) {
    for (Variant v : all_variants) {
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(a.n(), a.n());
      for (int ell = 1; ell <= a.n(); ++ell)
        sum += a.subsystem_flow(s, v, ell);
      CHECK(rel_gap(sum, a.composite_flow(s, v)) < 1e-8);
    }
  }
}

TEST_CASE("steady transfer storages match the flow balance") {
  CompartmentalModel m = fixtures::hippe_constant();
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 40.0, 9);
  opts.storages = true;
  Analysis a = analyze(m, opts);

  const Eigen::MatrixXd& S =
      a.storage_composite[static_cast<int>(Variant::transfer)].back();
  Eigen::MatrixXd expect(2, 2);
  expect << 24.0 / 35.0, 1.2,
      12.0 / 7.0, 24.0 / 35.0;
  CHECK(rel_gap(S, expect) < 1e-6);

  // At steady state rho .* S reproduces the composite transfer flow.
  Eigen::MatrixXd T = a.composite_flow(a.size() - 1, Variant::transfer);
  Eigen::VectorXd rho = a.samples.back().state.outflow_intensity;
  CHECK(rel_gap(rho.asDiagonal() * S, T) < 1e-6);
}

TEST_CASE("an acyclic chain has no cycling component") {
  CompartmentalModel m = fixtures::load("chain2.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 50.0, 51);
  Analysis a = analyze(m, opts);

  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a.diact[s].N[static_cast<int>(Variant::cycling)]
              .lpNorm<Eigen::Infinity>() < 1e-9);
    // With no cycling, acyclic == transfer.
    CHECK(rel_gap(a.diact[s].N[static_cast<int>(Variant::acyclic)],
                  a.diact[s].N[static_cast<int>(Variant::transfer)]) < 1e-12);
  }
}

TEST_CASE("masking zeroes a dead donor column everywhere") {
  // Hand-built matrices: donor 0 healthy, donor 1 below the guard.
  Eigen::MatrixXd flow(2, 2), T_out(2, 3), net(2, 2);
  flow << 0.0, 0.5,
      2.0, 0.0;
  // Column 0 = initial subsystem. Own outflows sit at T_out(k, k+1).
  T_out << 0.1, 3.0, 0.4,
      0.2, 1.0, 1e-15;
  net << 0.5, 0.5,
      2.0, 0.1;
  Eigen::VectorXd total(2);
  total << 3.5, 1.2 + 1e-15;

  DiactMatrices dm = diact_matrices_from(flow, total, T_out, net, 1e-12);
  CHECK(dm.masked == std::vector<char>{0, 1});
  for (const Eigen::MatrixXd& N : dm.N) {
    CHECK(N.col(1).isZero(0.0));
    CHECK(std::isfinite(N(0, 0)));
    CHECK(std::isfinite(N(1, 0)));
  }
  // The masked compartment also contributes no cycle ratio to others:
  // row 1 of the cycling matrix is zero because net(1,1)/own(1) is gated.
  CHECK(dm.N[static_cast<int>(Variant::cycling)].row(1).isZero(0.0));

  CHECK(dm.N[static_cast<int>(Variant::direct)](1, 0) == 2.0 / 3.5);
  CHECK(dm.N[static_cast<int>(Variant::transfer)](1, 0) == 2.0 / 3.0);
}

TEST_CASE("simple flows never exceed their composite counterparts") {
  // The single-input resolution scales by one subsystem's outflow, the
  // composite by the sum over all input subsystems.
  CompartmentalModel m = fixtures::load("hallam.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 25.0, 101);
  Analysis a = analyze(m, opts);

  for (std::size_t s = 0; s < a.size(); ++s) {
    for (Variant v : all_variants) {
      Eigen::MatrixXd gap =
          a.simple_flow(s, v) - a.composite_flow(s, v);
      INFO("t=" << a.grid[s] << " variant=" << variant_name(v));
      CHECK(gap.maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("diact flows and storages stay nonnegative") {
  CompartmentalModel m = fixtures::load("hallam.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 25.0, 101);
  opts.storages = true;
  opts.initial_storages = true;
  Analysis a = analyze(m, opts);

  for (Variant v : all_variants) {
    for (FlowKind kind :
         {FlowKind::composite, FlowKind::simple, FlowKind::initial}) {
      MatrixSeries flows = raw_series(a, v, Basis::flow, kind);
      MatrixSeries stocks = raw_series(a, v, Basis::storage, kind);
      for (std::size_t s = 0; s < a.size(); ++s) {
        INFO("t=" << a.grid[s] << " variant=" << variant_name(v)
                  << " kind=" << flow_kind_name(kind));
        CHECK(flows.v[s].minCoeff() >= -1e-9);
        CHECK(stocks.v[s].minCoeff() >= -1e-9);
      }
    }
  }
}

TEST_CASE("flow resolutions differ only by their donor diagonal") {
  CompartmentalModel m = fixtures::load("hallam.model");
  AnalyzeOptions opts;
  opts.spec = fixtures::spec_for(0.0, 25.0, 21);
  Analysis a = analyze(m, opts);

  std::size_t s = a.size() / 2;
  const DiactMatrices& dm = a.diact[s];
  for (Variant v : all_variants) {
    Eigen::MatrixXd composite = a.composite_flow(s, v);
    Eigen::MatrixXd simple = a.simple_flow(s, v);
    const Eigen::MatrixXd& N = dm.N[static_cast<int>(v)];
    for (int k = 0; k < a.n(); ++k) {
      double comp_scale = dm.total_outflow(k) - dm.initial_outflow(k);
      CHECK(rel_gap(composite.col(k), (N.col(k) * comp_scale).eval()) <
            1e-12);
      CHECK(rel_gap(simple.col(k), (N.col(k) * dm.own_outflow(k)).eval()) <
            1e-12);
    }
  }
}
