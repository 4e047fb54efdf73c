#pragma once

// Classical limits: magnetic-moment precession dm/dt = gamma m x B in vector
// and canonical (phi, z) form with its action, and charged-particle motion
// m x'' = -grad u + qE + q v x B with the velocity-field / Hamilton-Jacobi side.

#include "pauli_lab/functionals.hpp"

#include <functional>

namespace plab {

using FieldOfTime = std::function<Vec3(double)>;

inline FieldOfTime constant_field(Vec3 B) {
  return [B](double) { return B; };
}

class PoleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OutOfGridError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 add(const Vec3& a, const Vec3& b, double s = 1.0) { return {a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]}; }
inline Vec3 scale(const Vec3& a, double s) { return {s * a[0], s * a[1], s * a[2]}; }
inline double length(const Vec3& a) { return std::sqrt(detail::dotv(a, a)); }

// ---------------------------------------------------------------------------
// Moment dynamics

/// Precession rate per unit field matching the Pauli spin: 2 mu / hbar with
/// mu = a gamma. Equals q/m under the charged identification.
inline double classical_gamma(const PhysicalConstants& c) { return 2.0 * c.spin_coupling() / c.hbar; }

enum class TorqueMethod { rk4, exact_rotation };

struct MomentTrajectory {
  std::vector<double> t;
  std::vector<Vec3> m;
};

struct CanonicalTrajectory {
  std::vector<double> t, phi, z;
};

inline long fixed_steps(double T, double dt, const char* who) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument(std::string(who) + ": dt must be positive");
  if (!(T >= 0.0)) throw std::invalid_argument(std::string(who) + ": T must be nonnegative");
  const double n = T / dt;
  const long steps = std::lround(n);
  if (std::abs(n - steps) > 1e-9 * std::max(1.0, n)) throw std::invalid_argument(std::string(who) + ": T must be a multiple of dt");
  return steps;
}

inline Vec3 unit_or_throw(const Vec3& m, const char* who) {
  const double n = length(m);
  if (!(std::abs(n - 1.0) <= 1e-9)) throw std::invalid_argument(std::string(who) + ": moment must be a unit vector");
  return m;
}

/// Torque equation with fixed-step RK4 and renormalization, or the exact
/// rotation about B(t + dt/2), which is exact for constant B.
inline MomentTrajectory torque_evolve(const Vec3& m0, const FieldOfTime& B, double gamma_cl, double T, double dt,
                                      TorqueMethod method = TorqueMethod::rk4) {
  const long steps = fixed_steps(T, dt, "torque_evolve");
  MomentTrajectory tr;
  Vec3 m = unit_or_throw(m0, "torque_evolve");
  tr.t.push_back(0.0);
  tr.m.push_back(m);
  auto f = [&](double t, const Vec3& v) { return scale(cross(v, B(t)), gamma_cl); };
  for (long k = 0; k < steps; ++k) {
    const double t = k * dt;
    if (method == TorqueMethod::rk4) {
      const Vec3 k1 = f(t, m);
      const Vec3 k2 = f(t + 0.5 * dt, add(m, k1, 0.5 * dt));
      const Vec3 k3 = f(t + 0.5 * dt, add(m, k2, 0.5 * dt));
      const Vec3 k4 = f(t + dt, add(m, k3, dt));
      for (int a = 0; a < 3; ++a) m[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
      m = scale(m, 1.0 / length(m));
    } else {
      // dm/dt = -gamma B x m: rotation about B by -gamma |B| dt (Rodrigues)
      const Vec3 b = B(t + 0.5 * dt);
      const double bn = length(b);
      if (bn > 0.0) {
        const Vec3 n = scale(b, 1.0 / bn);
        const double ang = -gamma_cl * bn * dt;
        const double c = std::cos(ang), s = std::sin(ang);
        const Vec3 nxm = cross(n, m);
        const double nm = detail::dotv(n, m);
        for (int a = 0; a < 3; ++a) m[a] = m[a] * c + nxm[a] * s + n[a] * nm * (1.0 - c);
      }
    }
    tr.t.push_back((k + 1) * dt);
    tr.m.push_back(m);
  }
  return tr;
}

/// H_M = -gamma (z B_z + sqrt(1 - z^2)(B_x cos phi + B_y sin phi)).
inline double moment_hamiltonian(double phi, double z, const Vec3& B, double gamma_cl) {
  if (!(std::abs(z) <= 1.0)) throw std::domain_error("moment_hamiltonian: |z| must not exceed 1");
  return -gamma_cl * (z * B[2] + std::sqrt(1.0 - z * z) * (B[0] * std::cos(phi) + B[1] * std::sin(phi)));
}

inline Vec3 moment_from_canonical(double phi, double z) {
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

/// Canonical equations dphi/dt = dH/dz, dz/dt = -dH/dphi by RK4; refuses to
/// come within pole_band of |z| = 1 where the chart is singular.
inline CanonicalTrajectory canonical_evolve(double phi0, double z0, const FieldOfTime& B, double gamma_cl, double T,
                                            double dt, double pole_band = 1e-6) {
  const long steps = fixed_steps(T, dt, "canonical_evolve");
  auto check = [&](double z, double t) {
    if (!(std::abs(z) <= 1.0 - pole_band))
      throw PoleError("canonical_evolve: trajectory reached the pole band at t = " + std::to_string(t) +
                      " (z = " + std::to_string(z) + ")");
  };
  auto rhs = [&](double t, double phi, double z) -> std::array<double, 2> {
    const Vec3 b = B(t);
    const double s = std::sqrt(1.0 - z * z);
    const double bperp = b[0] * std::cos(phi) + b[1] * std::sin(phi);
    const double dH_dz = -gamma_cl * (b[2] - z / s * bperp);
    const double dH_dphi = -gamma_cl * s * (-b[0] * std::sin(phi) + b[1] * std::cos(phi));
    return {dH_dz, -dH_dphi};
  };
  CanonicalTrajectory tr;
  double phi = phi0, z = z0;
  check(z, 0.0);
  tr.t.push_back(0.0);
  tr.phi.push_back(phi);
  tr.z.push_back(z);
  for (long k = 0; k < steps; ++k) {
    const double t = k * dt;
    const auto k1 = rhs(t, phi, z);
    check(z + 0.5 * dt * k1[1], t);
    const auto k2 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k1[0], z + 0.5 * dt * k1[1]);
    check(z + 0.5 * dt * k2[1], t);
    const auto k3 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k2[0], z + 0.5 * dt * k2[1]);
    check(z + dt * k3[1], t);
    const auto k4 = rhs(t + dt, phi + dt * k3[0], z + dt * k3[1]);
    phi += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    z += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    check(z, t + dt);
    tr.t.push_back((k + 1) * dt);
    tr.phi.push_back(phi);
    tr.z.push_back(z);
  }
  return tr;
}

/// M = integral of (-z dphi/dt + H_M) dt by the trapezoid rule, with dphi/dt
/// from second-order differences of the uniformly sampled (unwrapped) phi.
inline double moment_action(const CanonicalTrajectory& tr, const FieldOfTime& B, double gamma_cl) {
  const std::size_t n = tr.t.size();
  if (n < 2 || tr.phi.size() != n || tr.z.size() != n) throw std::invalid_argument("moment_action: need a trajectory of at least two samples");
  const double dt = tr.t[1] - tr.t[0];
  for (std::size_t k = 1; k < n; ++k)
    if (std::abs(tr.t[k] - tr.t[k - 1] - dt) > 1e-9 * std::abs(dt)) throw std::invalid_argument("moment_action: samples must be uniform in time");
  const auto w = time_weights(n, dt);
  double M = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double dphi = 0.0;
    for (const auto& tap : time_stencil(n, k, dt)) dphi += tap.coeff * tr.phi[tap.index];
    M += w[k] * (-tr.z[k] * dphi + moment_hamiltonian(tr.phi[k], tr.z[k], B(tr.t[k]), gamma_cl));
  }
  return M;
}

// ---------------------------------------------------------------------------
// Charged-particle motion

struct ParticleState {
  Vec3 x{0.0, 0.0, 0.0};
  Vec3 v{0.0, 0.0, 0.0};
};

struct ParticleTrajectory {
  std::vector<double> t;
  std::vector<ParticleState> states;
  std::vector<double> energy;  // (m/2) v^2 + q phi_pot + u
};

/// Trilinear interpolation of grid values; periodic grids wrap, dirichlet grids
/// throw outside [0, L] on active axes.
inline double trilinear(const Grid& g, std::span<const double> f, const Vec3& x) {
  std::array<int, 3> i0{0, 0, 0}, i1{0, 0, 0};
  std::array<double, 3> w{0.0, 0.0, 0.0};
  for (int a = 0; a < 3; ++a) {
    if (!g.active(a)) continue;
    const double h = g.spacing(a);
    const int n = g.cells(a);
    double s = x[a] / h;
    if (g.periodic()) {
      s = std::fmod(s, static_cast<double>(n));
      if (s < 0.0) s += n;
      const int lo = std::min(static_cast<int>(std::floor(s)), n - 1);
      i0[a] = lo;
      i1[a] = (lo + 1) % n;
      w[a] = s - lo;
    } else {
      if (!(s >= 0.0 && s <= n - 1)) throw OutOfGridError("particle left the grid");
      const int lo = std::min(static_cast<int>(std::floor(s)), n - 2);
      i0[a] = lo;
      i1[a] = lo + 1;
      w[a] = s - lo;
    }
  }
  double v = 0.0;
  for (int c = 0; c < 8; ++c) {
    double wt = 1.0;
    std::array<int, 3> id{};
    for (int a = 0; a < 3; ++a) {
      const bool hi = (c >> a) & 1;
      if (!g.active(a) && hi) {
        wt = 0.0;
        break;
      }
      id[a] = hi ? i1[a] : i0[a];
      wt *= hi ? w[a] : 1.0 - w[a];
    }
    if (wt != 0.0) v += wt * f[g.index(id[0], id[1], id[2])];
  }
  return v;
}

inline Vec3 trilinear3(const Grid& g, const VectorField3& f, const Vec3& x) {
  return {trilinear(g, f.components[0], x), trilinear(g, f.components[1], x), trilinear(g, f.components[2], x)};
}

/// Samples E, B, grad u, phi_pot and u at arbitrary points.
class FieldSampler {
 public:
  explicit FieldSampler(const EMConfiguration& em) : em_(em), g_(em.u.grid) {
    grad_u_ = gradient(em.u, DerivativeMode::central);
  }
  Vec3 E(const Vec3& x) const { return trilinear3(g_, em_.E, x); }
  Vec3 B(const Vec3& x) const { return trilinear3(g_, em_.B, x); }
  Vec3 grad_u(const Vec3& x) const { return trilinear3(g_, grad_u_, x); }
  double phi_pot(const Vec3& x) const { return trilinear(g_, em_.phi_pot.values, x); }
  double u(const Vec3& x) const { return trilinear(g_, em_.u.values, x); }
  const Grid& grid() const { return g_; }

 private:
  const EMConfiguration& em_;
  Grid g_;
  VectorField3 grad_u_;
};

/// RK4 on m x'' = -grad u + qE + q v x B with fields interpolated trilinearly.
inline ParticleTrajectory lorentz_evolve(const ParticleState& initial, const EMConfiguration& em, double q, double m,
                                         double T, double dt) {
  if (!(m > 0.0)) throw std::invalid_argument("lorentz_evolve: mass must be positive");
  const long steps = fixed_steps(T, dt, "lorentz_evolve");
  const FieldSampler fs(em);
  auto accel = [&](const Vec3& x, const Vec3& v) {
    const Vec3 f = add(add(scale(fs.grad_u(x), -1.0), scale(fs.E(x), q)), scale(cross(v, fs.B(x)), q));
    return scale(f, 1.0 / m);
  };
  auto energy = [&](const ParticleState& s) {
    return 0.5 * m * detail::dotv(s.v, s.v) + q * fs.phi_pot(s.x) + fs.u(s.x);
  };
  ParticleTrajectory tr;
  ParticleState s = initial;
  tr.t.push_back(0.0);
  tr.states.push_back(s);
  tr.energy.push_back(energy(s));
  for (long k = 0; k < steps; ++k) {
    const Vec3 a1 = accel(s.x, s.v), v1 = s.v;
    const Vec3 x2 = add(s.x, v1, 0.5 * dt), v2 = add(s.v, a1, 0.5 * dt);
    const Vec3 a2 = accel(x2, v2);
    const Vec3 x3 = add(s.x, v2, 0.5 * dt), v3 = add(s.v, a2, 0.5 * dt);
    const Vec3 a3 = accel(x3, v3);
    const Vec3 x4 = add(s.x, v3, dt), v4 = add(s.v, a3, dt);
    const Vec3 a4 = accel(x4, v4);
    for (int a = 0; a < 3; ++a) {
      s.x[a] += dt / 6.0 * (v1[a] + 2.0 * v2[a] + 2.0 * v3[a] + v4[a]);
      s.v[a] += dt / 6.0 * (a1[a] + 2.0 * a2[a] + 2.0 * a3[a] + a4[a]);
    }
    tr.t.push_back((k + 1) * dt);
    tr.states.push_back(s);
    tr.energy.push_back(energy(s));
  }
  return tr;
}

/// U = (grad S - q A) / m.
inline VectorField3 velocity_field(const ScalarField& S, const VectorField3& A, double q, double m,
                                   DerivativeMode mode = DerivativeMode::central) {
  require_same_grid(S.grid, A.grid, "velocity_field");
  if (!(m > 0.0)) throw std::invalid_argument("velocity_field: mass must be positive");
  VectorField3 U = gradient(S, mode);
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < S.size(); ++i) U.components[a][i] = (U.components[a][i] - q * A.components[a][i]) / m;
  return U;
}

/// dS/dt + (grad S - qA)^2 / 2m + V at every snapshot.
inline std::vector<ScalarField> hj_residual(std::span<const ScalarField> S, const EMConfiguration& em,
                                            const ScalarField& V, const PhysicalConstants& c, double dt,
                                            DerivativeMode mode = DerivativeMode::central) {
  if (S.empty()) throw std::invalid_argument("hj_residual: need at least one snapshot");
  const Grid& g = S.front().grid;
  for (const auto& s : S) require_same_grid(g, s.grid, "hj_residual");
  require_same_grid(g, V.grid, "hj_residual");
  require_same_grid(g, em.A.grid, "hj_residual");
  std::vector<ScalarField> out;
  for (std::size_t t = 0; t < S.size(); ++t) {
    const auto tS = time_derivative<double>(S.size(), t, dt, g.size(),
                                            [&](std::size_t k) -> const std::vector<double>& { return S[k].values; });
    const auto dS = detail::grad3(g, S[t].values, mode);
    ScalarField r(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec3 G = detail::kinetic_momentum(dS, em, c.q, i);
      r[i] = tS[i] + detail::dotv(G, G) / (2.0 * c.m) + V[i];
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Integrates dx/dt = U(x, t) by RK4, with U sampled trilinearly in space and
/// linearly between snapshots spaced snapshot_dt apart.
inline std::vector<Vec3> velocity_trajectory(std::span<const VectorField3> U, double snapshot_dt, const Vec3& x0,
                                             double T, double dt) {
  if (U.empty()) throw std::invalid_argument("velocity_trajectory: need at least one snapshot");
  const long steps = fixed_steps(T, dt, "velocity_trajectory");
  const Grid& g = U.front().grid;
  auto sample = [&](double t, const Vec3& x) {
    if (U.size() == 1) return trilinear3(g, U[0], x);
    double s = t / snapshot_dt;
    if (s < -1e-9 || s > U.size() - 1 + 1e-9) throw std::out_of_range("velocity_trajectory: time outside the snapshots");
    s = std::clamp(s, 0.0, static_cast<double>(U.size() - 1));
    const std::size_t k = std::min(static_cast<std::size_t>(s), U.size() - 2);
    const double w = s - k;
    return add(scale(trilinear3(g, U[k], x), 1.0 - w), trilinear3(g, U[k + 1], x), w);
  };
  std::vector<Vec3> xs{x0};
  Vec3 x = x0;
  for (long k = 0; k < steps; ++k) {
    const double t = k * dt;
    const Vec3 k1 = sample(t, x);
    const Vec3 k2 = sample(t + 0.5 * dt, add(x, k1, 0.5 * dt));
    const Vec3 k3 = sample(t + 0.5 * dt, add(x, k2, 0.5 * dt));
    const Vec3 k4 = sample(t + dt, add(x, k3, dt));
    for (int a = 0; a < 3; ++a) x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    xs.push_back(x);
  }
  return xs;
}

}  // namespace plab
