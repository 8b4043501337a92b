#pragma once

// Shared fixtures for the unit tests: bundled model files plus a few
// programmatic variants used where a specific structure is needed.

#include <ecoflux/ecoflux.hpp>

#include <string>

namespace fixtures {

inline std::string model_path(const std::string& name) {
  return std::string(ECOFLUX_MODELS_DIR) + "/" + name;
}

inline ecoflux::CompartmentalModel load(const std::string& name) {
  return ecoflux::parse_model_file(model_path(name));
}

/// Two-compartment linear exchange with constant inputs z = [3, 3]; the
/// steady state has substorage columns [[7/3, 2/3], [4/3, 5/3]].
inline ecoflux::CompartmentalModel hippe_constant() {
  ecoflux::CompartmentalModel m;
  m.resize(2);
  m.intensity(1, 0) = ecoflux::parse_expr("4/3");
  m.intensity(0, 1) = ecoflux::parse_expr("2/3");
  m.output_intensity(0) = ecoflux::parse_expr("1/3");
  m.output_intensity(1) = ecoflux::parse_expr("5/3");
  m.input(0) = ecoflux::parse_expr("3");
  m.input(1) = ecoflux::parse_expr("3");
  m.x0 << 3.0, 3.0;
  return m;
}

/// Asymmetric feedforward ring 1 -> 2 -> 3 -> 4 -> 1 with input only into
/// compartment 1. No direct flow between 1 and 3 and no shared direct
/// donor, but each feeds the other around the ring.
inline ecoflux::CompartmentalModel ring4() {
  ecoflux::CompartmentalModel m;
  m.resize(4);
  m.intensity(1, 0) = ecoflux::parse_expr("1");
  m.intensity(2, 1) = ecoflux::parse_expr("0.7");
  m.intensity(3, 2) = ecoflux::parse_expr("0.5");
  m.intensity(0, 3) = ecoflux::parse_expr("0.3");
  for (int i = 0; i < 4; ++i)
    m.output_intensity(i) = ecoflux::parse_expr("0.2");
  m.input(0) = ecoflux::parse_expr("1");
  for (int i = 1; i < 4; ++i) m.input(i) = ecoflux::parse_expr("0");
  m.x0.setZero();
  return m;
}

/// Fan with adjustable branch intensity: 1 feeds 2 at rate 1 and 3 at
/// rate `q31`. Shares under the direct-flow split are (1 - q31)/(1 + q31)
/// apart, which selects competition, mixed, or commensalism.
inline ecoflux::CompartmentalModel fan3_with(double q31) {
  ecoflux::CompartmentalModel m;
  m.resize(3);
  m.intensity(1, 0) = ecoflux::parse_expr("1");
  m.intensity(2, 0) = ecoflux::parse_expr(ecoflux::detail::format_double(q31));
  m.output_intensity(0) = ecoflux::parse_expr("0");
  m.output_intensity(1) = ecoflux::parse_expr("1");
  m.output_intensity(2) = ecoflux::parse_expr("1");
  m.input(0) = ecoflux::parse_expr("1");
  m.input(1) = ecoflux::parse_expr("0");
  m.input(2) = ecoflux::parse_expr("0");
  m.x0.setZero();
  return m;
}

/// Two isolated compartments: no flows at all.
inline ecoflux::CompartmentalModel disconnected2() {
  ecoflux::CompartmentalModel m;
  m.resize(2);
  m.output_intensity(0) = ecoflux::parse_expr("1");
  m.output_intensity(1) = ecoflux::parse_expr("1");
  m.input(0) = ecoflux::parse_expr("1");
  m.input(1) = ecoflux::parse_expr("1");
  m.x0.setZero();
  return m;
}

inline ecoflux::ode::IntegrationSpec spec_for(double t0, double t1,
                                              int samples) {
  ecoflux::ode::IntegrationSpec spec;
  spec.t0 = t0;
  spec.t1 = t1;
  spec.sample_grid = ecoflux::ode::linspace(t0, t1, samples);
  return spec;
}

}  // namespace fixtures
