#pragma once

// Continuum functionals on snapshot sequences: the polar Fisher information,
// the knowledge functional Lambda, F = lambda I_F + Lambda, the Pauli quadratic
// form Q in spinor and polar variables, the polar/spinor maps, and residuals of
// the variational equations.
//
// A sequence of snapshots is a span of per-time fields at spacing dt. Time
// integrals are trapezoid sums; a single snapshot is read as a rate per unit
// time. An EM span of length one is broadcast over all snapshots.

#include "pauli_lab/grid.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <utility>

namespace plab {

struct PhysicalConstants {
  double hbar = 1.0;
  double m = 1.0;
  double q = 1.0;
  double gamma = 1.0;     // angular rate per tesla; a * gamma is the moment coupling (J/T)
  double lambda = 0.125;  // weight of I_F
  double a = 0.5;         // action unit of the phase field
  bool identification = false;

  double spin_coupling() const { return a * gamma; }

  /// a = hbar / 2, gamma = q / m, lambda = hbar^2 / 8m.
  static PhysicalConstants pauli_identification(double hbar, double m, double q) {
    if (!(hbar > 0.0) || !(m > 0.0)) throw std::invalid_argument("PhysicalConstants: hbar and m must be positive");
    if (q == 0.0) throw std::invalid_argument("PhysicalConstants: charged identification needs q != 0");
    return {hbar, m, q, q / m, hbar * hbar / (8.0 * m), 0.5 * hbar, true};
  }
  static PhysicalConstants natural() { return pauli_identification(1.0, 1.0, 1.0); }

  /// q = 0 with a free moment coupling mu (J/T), so gamma = 2 mu / hbar.
  static PhysicalConstants neutral(double hbar, double m, double mu) {
    if (!(hbar > 0.0) || !(m > 0.0)) throw std::invalid_argument("PhysicalConstants: hbar and m must be positive");
    return {hbar, m, 0.0, 2.0 * mu / hbar, hbar * hbar / (8.0 * m), 0.5 * hbar, true};
  }

  bool identification_holds(double tol = 1e-12) const {
    if (!identification) return false;
    const bool a_ok = std::abs(a - 0.5 * hbar) <= tol * hbar;
    const double lam = hbar * hbar / (8.0 * m);
    const bool l_ok = std::abs(lambda - lam) <= tol * lam;
    const bool g_ok = q == 0.0 || std::abs(gamma - q / m) <= tol * std::abs(q / m);
    return a_ok && l_ok && g_ok;
  }
};

struct PolarFields {
  ScalarField P;
  ScalarField theta;
  ScalarField S;
  ScalarField phi;                    // phase field, R = a * phi
  std::vector<std::uint8_t> valid;    // empty means every cell is valid

  PolarFields() = default;
  explicit PolarFields(const Grid& g) : P(g), theta(g), S(g), phi(g) {}
  PolarFields(ScalarField p, ScalarField th, ScalarField s, ScalarField ph)
      : P(std::move(p)), theta(std::move(th)), S(std::move(s)), phi(std::move(ph)) {
    require_same_grid(P.grid, theta.grid, "PolarFields");
    require_same_grid(P.grid, S.grid, "PolarFields");
    require_same_grid(P.grid, phi.grid, "PolarFields");
  }

  const Grid& grid() const { return P.grid; }
  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
};

struct EMConfiguration {
  ScalarField phi_pot;
  VectorField3 A;
  VectorField3 B;
  VectorField3 E;
  ScalarField u;

  EMConfiguration() = default;
  explicit EMConfiguration(const Grid& g) : phi_pot(g), A(g), B(g), E(g), u(g) {}

  const Grid& grid() const { return phi_pot.grid; }

  /// Uniform fields with zero potentials; B and E are then supplied directly.
  static EMConfiguration uniform(const Grid& g, Vec3 b, Vec3 e = {0.0, 0.0, 0.0}) {
    EMConfiguration em(g);
    em.B = VectorField3(g, b);
    em.E = VectorField3(g, e);
    return em;
  }

  /// Derives B = curl A and E = -grad phi - dA/dt from the potentials.
  static EMConfiguration from_potentials(const ScalarField& phi, const VectorField3& A, const ScalarField& u,
                                         DerivativeMode mode = DerivativeMode::central,
                                         const VectorField3* dA_dt = nullptr) {
    require_same_grid(phi.grid, A.grid, "EMConfiguration");
    require_same_grid(phi.grid, u.grid, "EMConfiguration");
    const Grid& g = phi.grid;
    EMConfiguration em(g);
    em.phi_pot = phi;
    em.A = A;
    em.u = u;
    em.B = curl_any(A, mode);
    for (int a = 0; a < 3; ++a) {
      const auto d = partial<double>(g, phi.values, a, mode);
      for (std::size_t i = 0; i < g.size(); ++i)
        em.E.components[a][i] = -d[i] - (dA_dt ? dA_dt->components[a][i] : 0.0);
    }
    return em;
  }

  /// Curl on any dimension; derivatives along inactive axes vanish.
  static VectorField3 curl_any(const VectorField3& v, DerivativeMode mode) {
    const Grid& g = v.grid;
    auto d = [&](int comp, int axis) { return partial<double>(g, v.components[comp], axis, mode); };
    const auto dzy = d(2, 1), dyz = d(1, 2), dxz = d(0, 2), dzx = d(2, 0), dyx = d(1, 0), dxy = d(0, 1);
    VectorField3 out(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      out.components[0][i] = dzy[i] - dyz[i];
      out.components[1][i] = dxz[i] - dzx[i];
      out.components[2][i] = dyx[i] - dxy[i];
    }
    return out;
  }

  /// max |B - curl A|.
  double curl_mismatch(DerivativeMode mode = DerivativeMode::central) const {
    const auto c = curl_any(A, mode);
    double m = 0.0;
    for (int a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < c.size(); ++i) m = std::max(m, std::abs(c.components[a][i] - B.components[a][i]));
    return m;
  }
};

inline Vec3 moment_direction(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

struct EvalOptions {
  double dt = 1.0;
  DerivativeMode mode = DerivativeMode::central;
  bool require_normalized = true;
  double normalization_tolerance = 1e-8;
};

struct TermBreakdown {
  std::vector<std::pair<std::string, double>> terms;

  double total() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.second;
    return s;
  }
  double get(const std::string& name) const {
    for (const auto& t : terms)
      if (t.first == name) return t.second;
    throw std::out_of_range("TermBreakdown: no term '" + name + "'");
  }
};

namespace detail {

inline constexpr double density_floor = 1e-12;

inline void check_polar_sequence(std::span<const PolarFields> polar, const EvalOptions& opt, const char* who) {
  if (polar.empty()) throw std::invalid_argument(std::string(who) + ": empty snapshot sequence");
  if (polar.size() > 1 && !(opt.dt > 0.0)) throw std::invalid_argument(std::string(who) + ": dt must be positive");
  const Grid& g = polar.front().grid();
  for (const auto& p : polar) {
    require_same_grid(g, p.P.grid, who);
    require_same_grid(g, p.theta.grid, who);
    require_same_grid(g, p.S.grid, who);
    require_same_grid(g, p.phi.grid, who);
    if (p.P.size() != g.size() || p.theta.size() != g.size() || p.S.size() != g.size() || p.phi.size() != g.size())
      throw std::invalid_argument(std::string(who) + ": value count does not match grid");
    for (double v : p.P.values)
      if (v < 0.0 || !std::isfinite(v)) throw std::domain_error(std::string(who) + ": negative or non-finite P");
    if (opt.require_normalized) {
      const double mass = integrate(p.P);
      if (std::abs(mass - 1.0) > opt.normalization_tolerance)
        throw std::domain_error(std::string(who) + ": P not normalized (mass " + std::to_string(mass) + ")");
    }
  }
}

inline void check_em_sequence(std::span<const EMConfiguration> em, std::size_t snapshots, const Grid& g, const char* who) {
  if (em.size() != 1 && em.size() != snapshots)
    throw std::invalid_argument(std::string(who) + ": EM snapshot count must be 1 or match the field snapshots");
  for (const auto& e : em) {
    require_same_grid(g, e.phi_pot.grid, who);
    require_same_grid(g, e.A.grid, who);
    require_same_grid(g, e.B.grid, who);
    require_same_grid(g, e.u.grid, who);
  }
}

inline const EMConfiguration& em_at(std::span<const EMConfiguration> em, std::size_t t) {
  return em.size() == 1 ? em[0] : em[t];
}

using Gradient3 = std::array<std::vector<double>, 3>;

inline Gradient3 grad3(const Grid& g, std::span<const double> f, DerivativeMode mode) {
  return {partial<double>(g, f, 0, mode), partial<double>(g, f, 1, mode), partial<double>(g, f, 2, mode)};
}

struct PolarDerivatives {
  Gradient3 dP, dtheta, dS, dphi;
  std::vector<double> tS, tphi;
};

inline PolarDerivatives polar_derivatives(std::span<const PolarFields> polar, std::size_t t, const EvalOptions& opt) {
  const Grid& g = polar[t].grid();
  PolarDerivatives d;
  d.dP = grad3(g, polar[t].P.values, opt.mode);
  d.dtheta = grad3(g, polar[t].theta.values, opt.mode);
  d.dS = grad3(g, polar[t].S.values, opt.mode);
  d.dphi = grad3(g, polar[t].phi.values, opt.mode);
  d.tS = time_derivative<double>(polar.size(), t, opt.dt, g.size(),
                                 [&](std::size_t s) -> const std::vector<double>& { return polar[s].S.values; });
  d.tphi = time_derivative<double>(polar.size(), t, opt.dt, g.size(),
                                   [&](std::size_t s) -> const std::vector<double>& { return polar[s].phi.values; });
  return d;
}

inline double dot3(const Gradient3& a, const Gradient3& b, std::size_t i) {
  return a[0][i] * b[0][i] + a[1][i] * b[1][i] + a[2][i] * b[2][i];
}

// Kinetic momentum G = grad S - q A at cell i.
inline Vec3 kinetic_momentum(const Gradient3& dS, const EMConfiguration& em, double q, std::size_t i) {
  return {dS[0][i] - q * em.A.components[0][i], dS[1][i] - q * em.A.components[1][i],
          dS[2][i] - q * em.A.components[2][i]};
}

inline double dotv(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Vec3 at3(const Gradient3& g, std::size_t i) { return {g[0][i], g[1][i], g[2][i]}; }

// Fisher density (grad P)^2 / P with the floor exclusion.
inline double fisher_density(double p, double dp2) { return p < density_floor ? 0.0 : dp2 / p; }

// Weighted accumulation over snapshots and cells: body(t, i) returns per-term
// integrand values already multiplied by nothing; weights applied here.
template <std::size_t N, class Body>
std::array<double, N> accumulate(const Grid& g, std::size_t snapshots, double dt,
                                 std::span<const PolarFields> polar, Body&& body) {
  const auto wx = quadrature_weights(g);
  const auto wt = time_weights(snapshots, dt);
  std::array<double, N> acc{};
  for (std::size_t t = 0; t < snapshots; ++t) {
    std::array<double, N> slice{};
    body(t, [&](std::size_t i, const std::array<double, N>& v) {
      if (!polar.empty() && !polar[t].is_valid(i)) return;
      for (std::size_t n = 0; n < N; ++n) slice[n] += wx[i] * v[n];
    });
    for (std::size_t n = 0; n < N; ++n) acc[n] += wt[t] * slice[n];
  }
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fisher information

/// Time-trapezoid of the integral of (grad P)^2 / P + (grad theta)^2 P.
inline double fisher_continuum(std::span<const PolarFields> polar, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "fisher_continuum");
  const Grid& g = polar.front().grid();
  const auto acc = detail::accumulate<1>(g, polar.size(), opt.dt, polar, [&](std::size_t t, auto&& add) {
    const auto dP = detail::grad3(g, polar[t].P.values, opt.mode);
    const auto dth = detail::grad3(g, polar[t].theta.values, opt.mode);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = polar[t].P[i];
      add(i, {detail::fisher_density(p, detail::dot3(dP, dP, i)) + detail::dot3(dth, dth, i) * p});
    }
  });
  return acc[0];
}

/// Fisher information of P alone with theta held constant, one snapshot per entry.
inline double fisher_continuum(std::span<const ScalarField> P, std::span<const ScalarField> theta,
                               const EvalOptions& opt = {}) {
  if (P.size() != theta.size()) throw std::invalid_argument("fisher_continuum: P and theta snapshot counts differ");
  std::vector<PolarFields> polar;
  polar.reserve(P.size());
  for (std::size_t t = 0; t < P.size(); ++t)
    polar.emplace_back(P[t], theta[t], ScalarField(P[t].grid), ScalarField(P[t].grid));
  return fisher_continuum(polar, opt);
}

/// The joint (x, k) form: sum over colors of (grad P_k)^2 / P_k with
/// P_+ = P cos^2(theta/2) and P_- = P sin^2(theta/2).
inline double fisher_joint(std::span<const PolarFields> polar, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "fisher_joint");
  const Grid& g = polar.front().grid();
  const auto acc = detail::accumulate<1>(g, polar.size(), opt.dt, polar, [&](std::size_t t, auto&& add) {
    std::vector<double> p1(g.size()), p2(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double c = std::cos(0.5 * polar[t].theta[i]), s = std::sin(0.5 * polar[t].theta[i]);
      p1[i] = polar[t].P[i] * c * c;
      p2[i] = polar[t].P[i] * s * s;
    }
    const auto d1 = detail::grad3(g, p1, opt.mode), d2 = detail::grad3(g, p2, opt.mode);
    for (std::size_t i = 0; i < g.size(); ++i)
      add(i, {detail::fisher_density(p1[i], detail::dot3(d1, d1, i)) +
              detail::fisher_density(p2[i], detail::dot3(d2, d2, i))});
  });
  return acc[0];
}

// ---------------------------------------------------------------------------
// Lambda, F and Q

/// Terms of Lambda: kinetic |G|^2/2m, phase coupling (a^2|grad phi|^2 - 2a cos(theta) grad phi.G)/2m,
/// time dS/dt - a cos(theta) dphi/dt, potential V0 = q phi_pot + u, moment -a gamma m.B; all times P.
inline TermBreakdown lambda_functional_terms(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                             const PhysicalConstants& c, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "lambda_functional");
  const Grid& g = polar.front().grid();
  detail::check_em_sequence(em, polar.size(), g, "lambda_functional");
  const auto acc = detail::accumulate<5>(g, polar.size(), opt.dt, polar, [&](std::size_t t, auto&& add) {
    const auto d = detail::polar_derivatives(polar, t, opt);
    const auto& e = detail::em_at(em, t);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = polar[t].P[i], th = polar[t].theta[i], ph = polar[t].phi[i];
      const double ct = std::cos(th);
      const Vec3 G = detail::kinetic_momentum(d.dS, e, c.q, i);
      const Vec3 dphi = detail::at3(d.dphi, i);
      const Vec3 m = moment_direction(th, ph);
      const double kin = detail::dotv(G, G) / (2.0 * c.m);
      const double phase = (c.a * c.a * detail::dotv(dphi, dphi) - 2.0 * c.a * ct * detail::dotv(dphi, G)) / (2.0 * c.m);
      const double time = d.tS[i] - c.a * ct * d.tphi[i];
      const double pot = c.q * e.phi_pot[i] + e.u[i];
      const double mom = -c.a * c.gamma * detail::dotv(m, e.B.at(i));
      add(i, {kin * p, phase * p, time * p, pot * p, mom * p});
    }
  });
  return {{{"kinetic", acc[0]}, {"phase_coupling", acc[1]}, {"time", acc[2]}, {"potential", acc[3]}, {"moment", acc[4]}}};
}

inline double lambda_functional(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                const PhysicalConstants& c, const EvalOptions& opt = {}) {
  return lambda_functional_terms(polar, em, c, opt).total();
}

inline TermBreakdown total_functional_terms(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                            const PhysicalConstants& c, const EvalOptions& opt = {}) {
  TermBreakdown out;
  out.terms.emplace_back("fisher", c.lambda * fisher_continuum(polar, opt));
  for (const auto& t : lambda_functional_terms(polar, em, c, opt).terms) out.terms.push_back(t);
  return out;
}

/// F = lambda I_F + Lambda.
inline double total_functional(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                               const PhysicalConstants& c, const EvalOptions& opt = {}) {
  return total_functional_terms(polar, em, c, opt).total();
}

/// Q in polar variables, term by term as collected from the spinor form.
inline TermBreakdown q_polar_terms(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                   const PhysicalConstants& c, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "Q_polar");
  const Grid& g = polar.front().grid();
  detail::check_em_sequence(em, polar.size(), g, "Q_polar");
  const double hb = c.hbar, mu = c.spin_coupling();
  const auto acc = detail::accumulate<5>(g, polar.size(), opt.dt, polar, [&](std::size_t t, auto&& add) {
    const auto d = detail::polar_derivatives(polar, t, opt);
    const auto& e = detail::em_at(em, t);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = polar[t].P[i], th = polar[t].theta[i], ph = polar[t].phi[i];
      const double ct = std::cos(th);
      const Vec3 G = detail::kinetic_momentum(d.dS, e, c.q, i);
      const Vec3 dphi = detail::at3(d.dphi, i);
      const double fisher = hb * hb / (8.0 * c.m) *
                            (detail::fisher_density(p, detail::dot3(d.dP, d.dP, i)) + detail::dot3(d.dtheta, d.dtheta, i) * p);
      const double time = (d.tS[i] - 0.5 * hb * ct * d.tphi[i]) * p;
      const double kin = (detail::dotv(G, G) + 0.25 * hb * hb * detail::dotv(dphi, dphi) - hb * ct * detail::dotv(dphi, G)) /
                         (2.0 * c.m) * p;
      const double pot = (c.q * e.phi_pot[i] + e.u[i]) * p;
      const double spin = -mu * detail::dotv(e.B.at(i), moment_direction(th, ph)) * p;
      add(i, {fisher, time, kin, pot, spin});
    }
  });
  return {{{"fisher", acc[0]}, {"time", acc[1]}, {"kinetic", acc[2]}, {"potential", acc[3]}, {"spin", acc[4]}}};
}

inline double q_polar(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                      const PhysicalConstants& c, const EvalOptions& opt = {}) {
  return q_polar_terms(polar, em, c, opt).total();
}

struct SpinorTerms {
  TermBreakdown real;
  double imaginary = 0.0;
  double total() const { return real.total(); }
};

/// Q in spinor variables, evaluated in complex arithmetic: hbar Im(Phi^dag dPhi/dt)
/// written as (i hbar/2)(dPhi^dag/dt Phi - Phi^dag dPhi/dt), the gauge-covariant
/// kinetic term, V Phi^dag Phi and -mu Phi^dag sigma.B Phi. Throws when the
/// imaginary residue exceeds tolerance.
inline SpinorTerms q_spinor_terms(std::span<const SpinorField> phi, std::span<const EMConfiguration> em,
                                  const PhysicalConstants& c, const EvalOptions& opt = {},
                                  double imaginary_tolerance = 1e-10) {
  if (phi.empty()) throw std::invalid_argument("Q_spinor: empty snapshot sequence");
  if (phi.size() > 1 && !(opt.dt > 0.0)) throw std::invalid_argument("Q_spinor: dt must be positive");
  const Grid& g = phi.front().grid;
  for (const auto& f : phi) {
    require_same_grid(g, f.grid, "Q_spinor");
    if (f.up.size() != g.size() || f.down.size() != g.size())
      throw std::invalid_argument("Q_spinor: value count does not match grid");
  }
  detail::check_em_sequence(em, phi.size(), g, "Q_spinor");
  const auto wx = quadrature_weights(g);
  const auto wt = time_weights(phi.size(), opt.dt);
  const double hb = c.hbar, mu = c.spin_coupling();
  const Complex I(0.0, 1.0);
  std::array<Complex, 4> acc{};
  for (std::size_t t = 0; t < phi.size(); ++t) {
    const auto& f = phi[t];
    const auto& e = detail::em_at(em, t);
    auto get_up = [&](std::size_t s) -> const std::vector<Complex>& { return phi[s].up; };
    auto get_dn = [&](std::size_t s) -> const std::vector<Complex>& { return phi[s].down; };
    const auto tu = time_derivative<Complex>(phi.size(), t, opt.dt, g.size(), get_up);
    const auto td = time_derivative<Complex>(phi.size(), t, opt.dt, g.size(), get_dn);
    std::array<std::vector<Complex>, 3> du, dd;
    for (int a = 0; a < 3; ++a) {
      du[a] = partial<Complex>(g, f.up, a, opt.mode);
      dd[a] = partial<Complex>(g, f.down, a, opt.mode);
    }
    std::array<Complex, 4> slice{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Complex u = f.up[i], d = f.down[i];
      const Complex time = 0.5 * I * hb * (std::conj(tu[i]) * u - std::conj(u) * tu[i] + std::conj(td[i]) * d - std::conj(d) * td[i]);
      Complex kin(0.0);
      for (int a = 0; a < 3; ++a) {
        const double qa = c.q * e.A.components[a][i];
        const Complex pu = -I * hb * du[a][i] - qa * u;
        const Complex pd = -I * hb * dd[a][i] - qa * d;
        kin += std::conj(pu) * pu + std::conj(pd) * pd;
      }
      kin /= 2.0 * c.m;
      const double V = c.q * e.phi_pot[i] + e.u[i];
      const Complex pot = V * (std::conj(u) * u + std::conj(d) * d);
      const Vec3 B = e.B.at(i);
      // Phi^dag (sigma . B) Phi
      const Complex sx = std::conj(u) * d + std::conj(d) * u;
      const Complex sy = -I * std::conj(u) * d + I * std::conj(d) * u;
      const Complex sz = std::conj(u) * u - std::conj(d) * d;
      const Complex spin = -mu * (B[0] * sx + B[1] * sy + B[2] * sz);
      slice[0] += wx[i] * time;
      slice[1] += wx[i] * kin;
      slice[2] += wx[i] * pot;
      slice[3] += wx[i] * spin;
    }
    for (int n = 0; n < 4; ++n) acc[n] += wt[t] * slice[n];
  }
  SpinorTerms out;
  out.real.terms = {{"time", acc[0].real()}, {"kinetic", acc[1].real()}, {"potential", acc[2].real()}, {"spin", acc[3].real()}};
  double scale = 0.0;
  for (const auto& v : acc) {
    out.imaginary += v.imag();
    scale += std::abs(v.real());
  }
  if (std::abs(out.imaginary) > imaginary_tolerance * std::max(1.0, scale))
    throw std::runtime_error("Q_spinor: imaginary residue " + std::to_string(out.imaginary) + " exceeds tolerance");
  return out;
}

inline double q_spinor(std::span<const SpinorField> phi, std::span<const EMConfiguration> em,
                       const PhysicalConstants& c, const EvalOptions& opt = {}) {
  return q_spinor_terms(phi, em, c, opt).total();
}

// ---------------------------------------------------------------------------
// Polar / spinor maps

/// Phi_+ = sqrt(P cos^2(theta/2)) e^{i(S - hbar phi/2)/hbar},
/// Phi_- = sqrt(P sin^2(theta/2)) e^{i(S + hbar phi/2)/hbar}.
inline SpinorField spinor_from_polar(const PolarFields& p, const PhysicalConstants& c) {
  const Grid& g = p.grid();
  SpinorField out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (p.P[i] < 0.0) throw std::domain_error("spinor_from_polar: negative P");
    const double r = std::sqrt(p.P[i]);
    const double a1 = (p.S[i] - 0.5 * c.hbar * p.phi[i]) / c.hbar;
    const double a2 = (p.S[i] + 0.5 * c.hbar * p.phi[i]) / c.hbar;
    out.up[i] = std::polar(r * std::abs(std::cos(0.5 * p.theta[i])), a1);
    out.down[i] = std::polar(r * std::abs(std::sin(0.5 * p.theta[i])), a2);
  }
  return out;
}

namespace detail {

inline double fold_pi(double x) {
  const double two_pi = 2.0 * pi;
  x = std::fmod(x + pi, two_pi);
  if (x < 0.0) x += two_pi;
  return x - pi;
}

// Raster-order unwrap: each cell references its predecessor along the
// fastest axis, or the first cell of the previous line or plane.
inline std::vector<double> unwrap_raster(const Grid& g, std::span<const double> raw, const std::vector<std::uint8_t>& valid) {
  std::vector<double> out(raw.begin(), raw.end());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!valid[i]) continue;
    auto m = g.multi_index(i);
    int axis = -1;
    for (int a = 2; a >= 0; --a)
      if (m[a] > 0) {
        axis = a;
        break;
      }
    if (axis < 0) continue;
    m[axis] -= 1;
    const std::size_t ref = g.index(m[0], m[1], m[2]);
    if (!valid[ref]) continue;
    out[i] = out[ref] + fold_pi(raw[i] - out[ref]);
  }
  return out;
}

}  // namespace detail

/// Inverse map. theta = 2 atan2(|Phi_-|, |Phi_+|) in [0, pi]; the two phases are
/// unwrapped separately, then phi = u_- - u_+ and S = hbar (u_+ + u_-) / 2.
/// Cells where either component is below the floor cannot carry a phase and are
/// marked invalid.
inline PolarFields polar_from_spinor(const SpinorField& f, const PhysicalConstants& c, double floor = 1e-12) {
  const Grid& g = f.grid;
  PolarFields p(g);
  p.valid.assign(g.size(), 1);
  std::vector<double> a1(g.size()), a2(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double m1 = std::abs(f.up[i]), m2 = std::abs(f.down[i]);
    p.P[i] = m1 * m1 + m2 * m2;
    p.theta[i] = 2.0 * std::atan2(m2, m1);
    a1[i] = std::arg(f.up[i]);
    a2[i] = std::arg(f.down[i]);
    if (m1 * m1 < floor && m2 * m2 < floor) p.valid[i] = 0;
    // a single vanishing component leaves its phase undefined; pick the other
    if (m1 * m1 < floor) a1[i] = a2[i];
    if (m2 * m2 < floor) a2[i] = a1[i];
  }
  const auto u1 = detail::unwrap_raster(g, a1, p.valid);
  const auto u2 = detail::unwrap_raster(g, a2, p.valid);
  for (std::size_t i = 0; i < g.size(); ++i) {
    p.phi[i] = u2[i] - u1[i];
    p.S[i] = 0.5 * c.hbar * (u1[i] + u2[i]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Equivalence verifier

struct EquivalenceResidual {
  double abs = 0.0;          // |Q_polar - F|
  double rel = 0.0;          // abs / |Q_polar|
  double spinor_abs = 0.0;   // |Q_spinor(spinor_from_polar) - Q_polar|
  double spinor_rel = 0.0;
  double q_polar = 0.0;
  double total = 0.0;
  double q_spinor = 0.0;
};

inline double relative_to(double diff, double ref) {
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::abs(ref), std::numeric_limits<double>::min());
}

inline EquivalenceResidual equivalence_residual(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                                const PhysicalConstants& c, const EvalOptions& opt = {}) {
  if (!c.identification_holds()) throw std::invalid_argument("equivalence_residual: Pauli identification not active");
  EquivalenceResidual r;
  r.q_polar = q_polar(polar, em, c, opt);
  r.total = total_functional(polar, em, c, opt);
  std::vector<SpinorField> phi;
  phi.reserve(polar.size());
  for (const auto& p : polar) phi.push_back(spinor_from_polar(p, c));
  r.q_spinor = q_spinor(phi, em, c, opt);
  r.abs = std::abs(r.q_polar - r.total);
  r.rel = relative_to(r.abs, r.q_polar);
  r.spinor_abs = std::abs(r.q_spinor - r.q_polar);
  r.spinor_rel = relative_to(r.spinor_abs, r.q_polar);
  return r;
}

// ---------------------------------------------------------------------------
// Residuals of the variational equations

struct StationarityResidual {
  double r_R = 0.0;         // dR/dt - dV1/dcos(theta)
  double r_cos_theta = 0.0; // dcos(theta)/dt + dV1/dR
  double r_P = 0.0;         // S dP/dt
  double r_S = 0.0;         // dS/dt - [cos(theta) dR/dt - V0 - V1]
  double max() const { return std::max({r_R, r_cos_theta, r_P, r_S}); }
};

/// Max-norm residuals of the static-limit equations with V1 = -a gamma m.B and R = a phi.
inline StationarityResidual stationarity_residual_static(std::span<const PolarFields> polar,
                                                         std::span<const EMConfiguration> em,
                                                         const PhysicalConstants& c, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "stationarity_residual_static");
  const Grid& g = polar.front().grid();
  detail::check_em_sequence(em, polar.size(), g, "stationarity_residual_static");
  const std::size_t M = polar.size();
  std::vector<std::vector<double>> cos_t(M);
  for (std::size_t t = 0; t < M; ++t) {
    cos_t[t].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) cos_t[t][i] = std::cos(polar[t].theta[i]);
  }
  StationarityResidual r;
  const double ag = c.a * c.gamma;
  for (std::size_t t = 0; t < M; ++t) {
    auto frame = [&](auto member) {
      return [&, member](std::size_t s) -> const std::vector<double>& { return (polar[s].*member).values; };
    };
    const auto tphi = time_derivative<double>(M, t, opt.dt, g.size(), frame(&PolarFields::phi));
    const auto tS = time_derivative<double>(M, t, opt.dt, g.size(), frame(&PolarFields::S));
    const auto tP = time_derivative<double>(M, t, opt.dt, g.size(), frame(&PolarFields::P));
    const auto tcos = time_derivative<double>(M, t, opt.dt, g.size(),
                                              [&](std::size_t s) -> const std::vector<double>& { return cos_t[s]; });
    const auto& e = detail::em_at(em, t);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!polar[t].is_valid(i)) continue;
      const double z = cos_t[t][i], th = polar[t].theta[i], ph = polar[t].phi[i];
      const double st = std::sin(th);
      const Vec3 B = e.B.at(i);
      const double transverse = std::cos(ph) * B[0] + std::sin(ph) * B[1];
      const double V1 = -ag * (st * transverse + z * B[2]);
      // dV1/dz at fixed phi, with sin(theta) = sqrt(1 - z^2)
      const double dV1_dz = st > 0.0 ? -ag * (B[2] - z / st * transverse) : -ag * B[2];
      const double dV1_dR = -ag * st * (-std::sin(ph) * B[0] + std::cos(ph) * B[1]) / c.a;
      const double V0 = c.q * e.phi_pot[i] + e.u[i];
      const double dR = c.a * tphi[i];
      r.r_R = std::max(r.r_R, std::abs(dR - dV1_dz));
      r.r_cos_theta = std::max(r.r_cos_theta, std::abs(tcos[i] + dV1_dR));
      r.r_P = std::max(r.r_P, std::abs(polar[t].S[i] * tP[i]));
      r.r_S = std::max(r.r_S, std::abs(tS[i] - (z * dR - V0 - V1)));
    }
  }
  return r;
}

/// Pointwise lambda (grad P_k)^2 / P_k^2 + 2 lambda div(grad P_k / P_k) - F_k per color.
/// Dirichlet boundary nodes carry zero residual; interior cells below the floor
/// are an error.
inline std::vector<ScalarField> euler_lagrange_residual(std::span<const ScalarField> P_colors,
                                                        std::span<const ScalarField> F_source,
                                                        const PhysicalConstants& c,
                                                        DerivativeMode mode = DerivativeMode::central) {
  if (P_colors.size() != F_source.size())
    throw std::invalid_argument("euler_lagrange_residual: one source field per color required");
  std::vector<ScalarField> out;
  for (std::size_t k = 0; k < P_colors.size(); ++k) {
    const ScalarField& P = P_colors[k];
    const Grid& g = P.grid;
    require_same_grid(g, F_source[k].grid, "euler_lagrange_residual");
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g.is_boundary_node(i) && P[i] < detail::density_floor)
        throw std::domain_error("euler_lagrange_residual: P below floor at an interior cell");
    ScalarField r(g);
    std::vector<double> sq(g.size(), 0.0), div(g.size(), 0.0);
    for (int a = 0; a < g.dim(); ++a) {
      const auto d = partial<double>(g, P.values, a, mode);
      std::vector<double> ratio(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.is_boundary_node(i)) continue;
        ratio[i] = d[i] / P[i];
        sq[i] += ratio[i] * ratio[i];
      }
      const auto dr = partial<double>(g, ratio, a, mode);
      for (std::size_t i = 0; i < g.size(); ++i) div[i] += dr[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i)
      r.values[i] = g.is_boundary_node(i) ? 0.0 : c.lambda * sq[i] + 2.0 * c.lambda * div[i] - F_source[k][i];
    out.push_back(std::move(r));
  }
  return out;
}

/// The averaged Hamilton-Jacobi functional before the moment identification:
/// [(|G|^2 + |grad R|^2 - 2 cos(theta) grad R.G)/2m + dS/dt - cos(theta) dR/dt + V0 + V1 cos(theta)] P
/// with V0 = (V+ + V-)/2, V1 = (V+ - V-)/2 and R = a phi. V spans broadcast like EM.
inline double averaged_hj_functional(std::span<const PolarFields> polar, std::span<const EMConfiguration> em,
                                     const PhysicalConstants& c, std::span<const ScalarField> V_plus,
                                     std::span<const ScalarField> V_minus, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "averaged_hj_functional");
  const Grid& g = polar.front().grid();
  detail::check_em_sequence(em, polar.size(), g, "averaged_hj_functional");
  auto check_v = [&](std::span<const ScalarField> v) {
    if (v.size() != 1 && v.size() != polar.size())
      throw std::invalid_argument("averaged_hj_functional: potential snapshot count must be 1 or match the fields");
    for (const auto& f : v) require_same_grid(g, f.grid, "averaged_hj_functional");
  };
  check_v(V_plus);
  check_v(V_minus);
  const auto acc = detail::accumulate<1>(g, polar.size(), opt.dt, polar, [&](std::size_t t, auto&& add) {
    const auto d = detail::polar_derivatives(polar, t, opt);
    const auto& e = detail::em_at(em, t);
    const auto& vp = V_plus.size() == 1 ? V_plus[0] : V_plus[t];
    const auto& vm = V_minus.size() == 1 ? V_minus[0] : V_minus[t];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = polar[t].P[i], ct = std::cos(polar[t].theta[i]);
      const Vec3 G = detail::kinetic_momentum(d.dS, e, c.q, i);
      const Vec3 dR{c.a * d.dphi[0][i], c.a * d.dphi[1][i], c.a * d.dphi[2][i]};
      const double V0 = 0.5 * (vp[i] + vm[i]), V1 = 0.5 * (vp[i] - vm[i]);
      const double kin = (detail::dotv(G, G) + detail::dotv(dR, dR) - 2.0 * ct * detail::dotv(dR, G)) / (2.0 * c.m);
      const double time = d.tS[i] - ct * c.a * d.tphi[i];
      add(i, {(kin + time + V0 + V1 * ct) * p});
    }
  });
  return acc[0];
}

// ---------------------------------------------------------------------------
// Exact gradient of the discretized F

/// dF/d(field value) for every snapshot and cell, for P, theta, S and phi.
/// The derivative operators enter through their transposes, so the result is
/// the exact gradient of the discrete objective.
inline std::vector<PolarFields> total_functional_gradient(std::span<const PolarFields> polar,
                                                          std::span<const EMConfiguration> em,
                                                          const PhysicalConstants& c, const EvalOptions& opt = {}) {
  detail::check_polar_sequence(polar, opt, "total_functional_gradient");
  const Grid& g = polar.front().grid();
  detail::check_em_sequence(em, polar.size(), g, "total_functional_gradient");
  const std::size_t M = polar.size(), n = g.size();
  const auto wx = quadrature_weights(g);
  const auto wt = time_weights(M, opt.dt);
  std::vector<PolarFields> grad;
  for (std::size_t t = 0; t < M; ++t) grad.emplace_back(g);
  const double lam = c.lambda, a = c.a, ag = c.a * c.gamma, im = 1.0 / c.m;

  for (std::size_t t = 0; t < M; ++t) {
    const auto d = detail::polar_derivatives(polar, t, opt);
    const auto& e = detail::em_at(em, t);
    const auto& pf = polar[t];
    std::array<std::vector<double>, 3> cP, cth, cS, cphi;
    for (int ax = 0; ax < 3; ++ax) {
      cP[ax].assign(n, 0.0);
      cth[ax].assign(n, 0.0);
      cS[ax].assign(n, 0.0);
      cphi[ax].assign(n, 0.0);
    }
    std::vector<double> ctS(n, 0.0), ctphi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!pf.is_valid(i)) continue;
      const double w = wt[t] * wx[i];
      const double p = pf.P[i], th = pf.theta[i], ph = pf.phi[i];
      const double ct = std::cos(th), st = std::sin(th), cp = std::cos(ph), sp = std::sin(ph);
      const Vec3 G = detail::kinetic_momentum(d.dS, e, c.q, i);
      const Vec3 dphi = detail::at3(d.dphi, i);
      const Vec3 B = e.B.at(i);
      const Vec3 m{st * cp, st * sp, ct};
      const Vec3 m_th{ct * cp, ct * sp, -st};
      const Vec3 m_ph{-st * sp, st * cp, 0.0};
      const double dpG = detail::dotv(dphi, G);
      const double K = 0.5 * im * (detail::dotv(G, G) + a * a * detail::dotv(dphi, dphi) - 2.0 * a * ct * dpG) + d.tS[i] -
                       a * ct * d.tphi[i] + c.q * e.phi_pot[i] + e.u[i] - ag * detail::dotv(m, B);
      const double dP2 = detail::dot3(d.dP, d.dP, i);
      const double dth2 = detail::dot3(d.dtheta, d.dtheta, i);
      const bool floored = p < detail::density_floor;
      double gP = lam * dth2 + K;
      if (!floored) gP -= lam * dP2 / (p * p);
      grad[t].P[i] += w * gP;
      grad[t].theta[i] += w * p * (a * im * st * dpG + a * st * d.tphi[i] - ag * detail::dotv(m_th, B));
      grad[t].phi[i] += w * (-ag * p * detail::dotv(m_ph, B));
      for (int ax = 0; ax < 3; ++ax) {
        if (!floored) cP[ax][i] = w * 2.0 * lam * d.dP[ax][i] / p;
        cth[ax][i] = w * 2.0 * lam * p * d.dtheta[ax][i];
        cS[ax][i] = w * p * im * (G[ax] - a * ct * dphi[ax]);
        cphi[ax][i] = w * p * im * (a * a * dphi[ax] - a * ct * G[ax]);
      }
      ctS[i] = w * p;
      ctphi[i] = -w * a * p * ct;
    }
    for (int ax = 0; ax < g.dim(); ++ax) {
      auto add_t = [&](std::vector<double>& target, const std::vector<double>& coeff) {
        const auto v = partial_transpose<double>(g, coeff, ax, opt.mode);
        for (std::size_t i = 0; i < n; ++i) target[i] += v[i];
      };
      add_t(grad[t].P.values, cP[ax]);
      add_t(grad[t].theta.values, cth[ax]);
      add_t(grad[t].S.values, cS[ax]);
      add_t(grad[t].phi.values, cphi[ax]);
    }
    for (const auto& tap : time_stencil(M, t, opt.dt))
      for (std::size_t i = 0; i < n; ++i) {
        grad[tap.index].S[i] += tap.coeff * ctS[i];
        grad[tap.index].phi[i] += tap.coeff * ctphi[i];
      }
  }
  return grad;
}

}  // namespace plab
