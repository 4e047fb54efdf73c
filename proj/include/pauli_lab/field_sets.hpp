#pragma once

// Seeded random configurations for functional checks: smooth polar fields on a
// short time window plus a static electromagnetic background.

#include "pauli_lab/functionals.hpp"
#include "pauli_lab/random_fields.hpp"

namespace plab {

struct RandomConfigSpec {
  int snapshots = 3;
  double dt = 2e-5;
  int max_mode = 2;
  double log_density_amplitude = 1.0;
  double theta_center = 0.5 * pi;
  double theta_amplitude = 0.8;  // theta = centre + amplitude * g, |g| <= 1
  double action_amplitude = 1.0;
  double phase_amplitude = 1.0;
  double potential_amplitude = 0.5;
  double vector_potential_amplitude = 0.5;
  DerivativeMode em_mode = DerivativeMode::spectral;
};

struct FieldConfiguration {
  std::vector<PolarFields> polar;
  std::vector<EMConfiguration> em;
  double dt = 1.0;
};

/// Each polar field evolves as f0 + t f1 + t^2 f2 / 2 about the window centre.
inline FieldConfiguration random_configuration(const Grid& g, std::uint64_t seed, const RandomConfigSpec& spec = {}) {
  if (spec.snapshots < 1) throw std::invalid_argument("random_configuration: need at least one snapshot");
  std::mt19937_64 rng(seed);
  auto field = [&](double amp) {
    RandomFieldSpec s;
    s.max_mode = spec.max_mode;
    s.amplitude = amp;
    return random_smooth_field(g, rng, s);
  };
  struct Quadratic {
    ScalarField f0, f1, f2;
  };
  auto quadratic = [&](double amp) { return Quadratic{field(amp), field(amp), field(amp)}; };
  const Quadratic lp = quadratic(spec.log_density_amplitude);
  const Quadratic th = quadratic(1.0);
  const Quadratic S = quadratic(spec.action_amplitude);
  const Quadratic ph = quadratic(spec.phase_amplitude);

  FieldConfiguration out;
  out.dt = spec.dt;
  const double centre = 0.5 * (spec.snapshots - 1);
  for (int s = 0; s < spec.snapshots; ++s) {
    const double t = (s - centre) * spec.dt;
    auto eval = [&](const Quadratic& q, std::size_t i) { return q.f0[i] + t * q.f1[i] + 0.5 * t * t * q.f2[i]; };
    PolarFields p(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      p.P[i] = std::exp(eval(lp, i));
      p.theta[i] = spec.theta_center + spec.theta_amplitude * std::clamp(eval(th, i), -1.0, 1.0);
      p.S[i] = eval(S, i);
      p.phi[i] = eval(ph, i);
    }
    p.P = normalize(p.P);
    out.polar.push_back(std::move(p));
  }
  RandomFieldSpec vs;
  vs.max_mode = spec.max_mode;
  vs.amplitude = spec.vector_potential_amplitude;
  const VectorField3 A = random_smooth_vector_field(g, rng, vs);
  const ScalarField phi_pot = field(spec.potential_amplitude);
  const ScalarField u = field(spec.potential_amplitude);
  out.em.push_back(EMConfiguration::from_potentials(phi_pot, A, u, spec.em_mode));
  return out;
}

}  // namespace plab
