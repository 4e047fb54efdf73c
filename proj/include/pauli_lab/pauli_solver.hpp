#pragma once

// Time-dependent Pauli equation i hbar dPhi/dt = H Phi with
//   H = (1/2m)(-i hbar grad - q A)^2 + q phi_pot + u - mu sigma.B,   mu = a gamma,
// and the neutral variant with q = 0. Two schemes: Strang split-operator
// (periodic grids, spatially uniform A) and Crank-Nicolson solved by BiCGSTAB.

#include "pauli_lab/fft.hpp"
#include "pauli_lab/functionals.hpp"

#include <functional>
#include <optional>

namespace plab {

enum class Scheme { split_operator, crank_nicolson };

inline std::string to_string(Scheme s) { return s == Scheme::split_operator ? "split_operator" : "crank_nicolson"; }
inline Scheme scheme_from_string(const std::string& s) {
  if (s == "split_operator") return Scheme::split_operator;
  if (s == "crank_nicolson") return Scheme::crank_nicolson;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BoundaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PauliState {
  SpinorField phi;
  double t = 0.0;
};

struct SolverConfig {
  Scheme scheme = Scheme::split_operator;
  double dt = 1e-3;
  PhysicalConstants consts = PhysicalConstants::natural();
  EMConfiguration em;
  // optional time dependence: fills the fields at time t into the given configuration
  std::function<void(double, EMConfiguration&)> time_dependence;
  bool neutral = false;
  double cn_tolerance = 1e-14;
  int cn_max_iterations = 500;
  DerivativeMode mode = DerivativeMode::spectral;  // for apply_hamiltonian and CN on periodic grids

  double charge() const { return neutral ? 0.0 : consts.q; }
  double moment() const { return consts.spin_coupling(); }
};

namespace detail {

inline void check_config(const SolverConfig& c, const Grid& g) {
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw std::invalid_argument("SolverConfig: dt must be positive");
  if (!(c.consts.m > 0.0) || !(c.consts.hbar > 0.0)) throw std::invalid_argument("SolverConfig: m and hbar must be positive");
  check_em_sequence(std::span<const EMConfiguration>(&c.em, 1), 1, g, "SolverConfig");
  if (c.mode == DerivativeMode::spectral && !g.periodic() && c.scheme == Scheme::split_operator)
    throw std::invalid_argument("split_operator needs a periodic grid");
}

inline DerivativeMode operator_mode(const SolverConfig& c, const Grid& g) {
  return g.periodic() ? c.mode : DerivativeMode::central;
}

inline std::vector<int> fft_shape(const Grid& g) {
  std::vector<int> s;
  for (int a = 0; a < g.dim(); ++a) s.push_back(g.cells(a));
  return s;
}

}  // namespace detail

/// H Phi for the configuration's fields as they currently stand (config.em).
inline SpinorField apply_hamiltonian(const SpinorField& f, const SolverConfig& cfg) {
  const Grid& g = f.grid;
  require_same_grid(g, cfg.em.A.grid, "apply_hamiltonian");
  const auto& c = cfg.consts;
  const double q = cfg.charge(), mu = cfg.moment();
  const auto mode = detail::operator_mode(cfg, g);
  const auto& em = cfg.em;
  SpinorField out(g);
  for (int comp = 0; comp < 2; ++comp) {
    const auto& psi = comp == 0 ? f.up : f.down;
    auto lap = laplacian_values<Complex>(g, psi, mode);
    std::vector<Complex> h(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) h[i] = -c.hbar * c.hbar / (2.0 * c.m) * lap[i];
    if (q != 0.0) {
      // (i hbar q / 2m)(div(A psi) + A.grad psi) + q^2 A^2 psi / 2m
      for (int a = 0; a < g.dim(); ++a) {
        const auto& Aa = em.A.components[a];
        bool any = false;
        for (double v : Aa) any = any || v != 0.0;
        if (!any) continue;
        std::vector<Complex> Apsi(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) Apsi[i] = Aa[i] * psi[i];
        const auto dApsi = partial<Complex>(g, Apsi, a, mode);
        const auto dpsi = partial<Complex>(g, psi, a, mode);
        const Complex pref(0.0, c.hbar * q / (2.0 * c.m));
        for (std::size_t i = 0; i < g.size(); ++i)
          h[i] += pref * (dApsi[i] + Aa[i] * dpsi[i]) + q * q * Aa[i] * Aa[i] / (2.0 * c.m) * psi[i];
      }
    }
    for (std::size_t i = 0; i < g.size(); ++i) h[i] += (q * em.phi_pot[i] + em.u[i]) * psi[i];
    (comp == 0 ? out.up : out.down) = std::move(h);
  }
  // -mu sigma.B
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 B = em.B.at(i);
    const Complex u = f.up[i], d = f.down[i];
    out.up[i] -= mu * (B[2] * u + Complex(B[0], -B[1]) * d);
    out.down[i] -= mu * (Complex(B[0], B[1]) * u - B[2] * d);
  }
  if (!g.periodic())
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.is_boundary_node(i)) out.up[i] = out.down[i] = 0.0;
  return out;
}

inline double norm(const SpinorField& f) {
  std::vector<double> d(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) d[i] = std::norm(f.up[i]) + std::norm(f.down[i]);
  return integrate(f.grid, d);
}

namespace detail {

// exp(-i dt (V - mu sigma.B) / hbar) applied per cell.
inline void apply_potential_spin(SpinorField& f, const EMConfiguration& em, double q, double mu, double hbar,
                                 double dt) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double V = q * em.phi_pot[i] + em.u[i];
    const Vec3 B = em.B.at(i);
    const double b = std::sqrt(dotv(B, B));
    const Complex phase = std::polar(1.0, -V * dt / hbar);
    const Complex u = f.up[i], d = f.down[i];
    if (b == 0.0) {
      f.up[i] = phase * u;
      f.down[i] = phase * d;
      continue;
    }
    // exp(i alpha sigma.n) = cos(alpha) + i sin(alpha) sigma.n with alpha = mu |B| dt / hbar
    const double alpha = mu * b * dt / hbar;
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double nx = B[0] / b, ny = B[1] / b, nz = B[2] / b;
    const Complex I(0.0, 1.0);
    const Complex m00 = ca + I * sa * nz, m11 = ca - I * sa * nz;
    const Complex m01 = I * sa * Complex(nx, -ny), m10 = I * sa * Complex(nx, ny);
    f.up[i] = phase * (m00 * u + m01 * d);
    f.down[i] = phase * (m10 * u + m11 * d);
  }
}

inline Vec3 uniform_vector_potential(const EMConfiguration& em) {
  Vec3 A{0.0, 0.0, 0.0};
  for (int a = 0; a < 3; ++a) {
    const auto& c = em.A.components[a];
    if (c.empty()) continue;
    A[a] = c[0];
    for (double v : c)
      if (std::abs(v - c[0]) > 1e-14 * (1.0 + std::abs(c[0])))
        throw std::invalid_argument("split_operator needs a spatially uniform vector potential");
  }
  return A;
}

class SplitKinetic {
 public:
  explicit SplitKinetic(const Grid& g) : g_(g), plan_(fft_shape(g)) {}

  void apply(SpinorField& f, const Vec3& A, double q, const PhysicalConstants& c, double dt) {
    const std::size_t n = g_.size();
    if (phase_.size() != n) phase_.resize(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
      const auto m = g_.multi_index(idx);
      double e = 0.0;
      for (int a = 0; a < g_.dim(); ++a) {
        const double p = c.hbar * wavenumber(m[a], g_.cells(a), g_.extent(a)) - q * A[a];
        e += p * p;
      }
      phase_[idx] = std::polar(1.0, -e / (2.0 * c.m) * dt / c.hbar) / static_cast<double>(n);
    }
    for (auto* comp : {&f.up, &f.down}) {
      Complex* buf = plan_.data();
      std::copy(comp->begin(), comp->end(), buf);
      plan_.forward();
      for (std::size_t i = 0; i < n; ++i) buf[i] *= phase_[i];
      plan_.backward();
      std::copy(buf, buf + n, comp->begin());
    }
  }

 private:
  Grid g_;
  FftPlan plan_;
  std::vector<Complex> phase_;
};

inline Complex cdot(const SpinorField& a, const SpinorField& b) {
  Complex s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a.up[i]) * b.up[i] + std::conj(a.down[i]) * b.down[i];
  return s;
}

inline void axpy(SpinorField& y, Complex a, const SpinorField& x) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    y.up[i] += a * x.up[i];
    y.down[i] += a * x.down[i];
  }
}

// Solves (I + i dt H / 2 hbar) x = b by BiCGSTAB starting from x0.
inline SpinorField cayley_solve(const SpinorField& b, const SpinorField& x0, const SolverConfig& cfg) {
  const Complex s(0.0, cfg.dt / (2.0 * cfg.consts.hbar));
  auto A = [&](const SpinorField& x) {
    SpinorField y = apply_hamiltonian(x, cfg);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y.up[i] = x.up[i] + s * y.up[i];
      y.down[i] = x.down[i] + s * y.down[i];
    }
    return y;
  };
  SpinorField x = x0;
  SpinorField r = b;
  axpy(r, -1.0, A(x));
  const double bnorm = std::sqrt(std::abs(cdot(b, b)));
  if (bnorm == 0.0) return SpinorField(b.grid);
  const SpinorField rhat = r;
  SpinorField p(b.grid), v(b.grid);
  Complex rho = 1.0, alpha = 1.0, omega = 1.0;
  for (int it = 0; it < cfg.cn_max_iterations; ++it) {
    if (std::sqrt(std::abs(cdot(r, r))) <= cfg.cn_tolerance * bnorm) return x;
    const Complex rho_new = cdot(rhat, r);
    if (rho_new == 0.0) break;
    const Complex beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.up[i] = r.up[i] + beta * (p.up[i] - omega * v.up[i]);
      p.down[i] = r.down[i] + beta * (p.down[i] - omega * v.down[i]);
    }
    v = A(p);
    alpha = rho / cdot(rhat, v);
    SpinorField sres = r;
    axpy(sres, -alpha, v);
    axpy(x, alpha, p);
    if (std::sqrt(std::abs(cdot(sres, sres))) <= cfg.cn_tolerance * bnorm) return x;
    const SpinorField t = A(sres);
    const Complex tt = cdot(t, t);
    if (tt == 0.0) break;
    omega = cdot(t, sres) / tt;
    axpy(x, omega, sres);
    r = sres;
    axpy(r, -omega, t);
    if (omega == 0.0) break;
  }
  if (std::sqrt(std::abs(cdot(r, r))) <= cfg.cn_tolerance * bnorm) return x;
  throw SolverError("crank_nicolson: iterative solve did not converge");
}

}  // namespace detail

/// Stateful propagator; keeps FFT plans and a working field configuration.
class Propagator {
 public:
  Propagator(const Grid& g, SolverConfig cfg) : g_(g), cfg_(std::move(cfg)) {
    detail::check_config(cfg_, g_);
    if (cfg_.scheme == Scheme::split_operator) {
      if (!g_.periodic()) throw std::invalid_argument("split_operator needs a periodic grid");
      kinetic_.emplace(g_);
      if (!cfg_.time_dependence) A_static_ = detail::uniform_vector_potential(cfg_.em);
    }
  }

  const SolverConfig& config() const { return cfg_; }

  /// One linear step from time t; no normalization requirement.
  void step(SpinorField& f, double t) {
    require_same_grid(g_, f.grid, "step");
    const double dt = cfg_.dt, q = cfg_.charge(), mu = cfg_.moment();
    if (cfg_.scheme == Scheme::split_operator) {
      // kinetic halves use A at their own midpoints; the potential block uses t + dt/2
      kinetic_->apply(f, vector_potential_at(t + 0.25 * dt), q, cfg_.consts, 0.5 * dt);
      fields_at(t + 0.5 * dt);
      detail::apply_potential_spin(f, cfg_.em, q, mu, cfg_.consts.hbar, dt);
      kinetic_->apply(f, vector_potential_at(t + 0.75 * dt), q, cfg_.consts, 0.5 * dt);
    } else {
      fields_at(t + 0.5 * dt);
      SpinorField h = apply_hamiltonian(f, cfg_);
      SpinorField rhs = f;
      const Complex s(0.0, -dt / (2.0 * cfg_.consts.hbar));
      detail::axpy(rhs, s, h);
      f = detail::cayley_solve(rhs, rhs, cfg_);
    }
  }

 private:
  void fields_at(double t) {
    if (cfg_.time_dependence) cfg_.time_dependence(t, cfg_.em);
  }
  Vec3 vector_potential_at(double t) {
    if (!cfg_.time_dependence) return A_static_;
    fields_at(t);
    return detail::uniform_vector_potential(cfg_.em);
  }

  Grid g_;
  SolverConfig cfg_;
  std::optional<detail::SplitKinetic> kinetic_;
  Vec3 A_static_{0.0, 0.0, 0.0};
};

/// Linear propagation of an arbitrary spinor field over n steps from t0.
inline SpinorField propagate(SpinorField f, const SolverConfig& cfg, double t0, long steps) {
  Propagator p(f.grid, cfg);
  for (long k = 0; k < steps; ++k) p.step(f, t0 + k * cfg.dt);
  return f;
}

inline void require_normalized(const SpinorField& f, const char* who, double tol = 1e-10) {
  const double n = norm(f);
  if (!(std::abs(n - 1.0) <= tol))
    throw std::invalid_argument(std::string(who) + ": state is not normalized (norm " + std::to_string(n) + ")");
}

inline PauliState step(const PauliState& s, const SolverConfig& cfg) {
  require_normalized(s.phi, "step");
  return {propagate(s.phi, cfg, s.t, 1), s.t + cfg.dt};
}

struct Observables {
  double t = 0.0;
  double norm = 0.0;
  Vec3 mean_position{0.0, 0.0, 0.0};
  Vec3 spin{0.0, 0.0, 0.0};
  double mass_up = 0.0, mass_down = 0.0;
  ScalarField density_up, density_down;
};

/// Norm, mean position, spin expectation and per-color densities.
inline Observables observables(const PauliState& s) {
  const Grid& g = s.phi.grid;
  const auto W = quadrature_weights(g);
  Observables o;
  o.t = s.t;
  o.density_up = ScalarField(g);
  o.density_down = ScalarField(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Complex u = s.phi.up[i], d = s.phi.down[i];
    const double pu = std::norm(u), pd = std::norm(d);
    o.density_up[i] = pu;
    o.density_down[i] = pd;
    const double w = W[i];
    o.mass_up += w * pu;
    o.mass_down += w * pd;
    const Complex ud = std::conj(u) * d;
    o.spin[0] += w * 2.0 * ud.real();
    o.spin[1] += w * 2.0 * ud.imag();
    o.spin[2] += w * (pu - pd);
    const Vec3 x = g.position(i);
    for (int a = 0; a < 3; ++a) o.mean_position[a] += w * (pu + pd) * x[a];
  }
  o.norm = o.mass_up + o.mass_down;
  if (o.norm > 0.0)
    for (auto& v : o.mean_position) v /= o.norm;
  return o;
}

struct Trajectory {
  std::vector<Observables> records;
  std::vector<PauliState> snapshots;
};

inline long step_count(double T, double dt) {
  if (!(T >= 0.0)) throw std::invalid_argument("evolve: T must be nonnegative");
  const double n = T / dt;
  const long steps = std::lround(n);
  if (std::abs(n - steps) > 1e-9 * std::max(1.0, n)) throw std::invalid_argument("evolve: T must be a multiple of dt");
  return steps;
}

/// Repeated steps with an observables record every record_every steps (and at
/// the end); snapshots likewise when snapshot_every > 0. Densities are dropped
/// from the records to keep trajectories light.
inline Trajectory evolve(const PauliState& initial, const SolverConfig& cfg, double T, int record_every,
                         int snapshot_every = 0) {
  if (record_every < 1) throw std::invalid_argument("evolve: record_every must be positive");
  require_normalized(initial.phi, "evolve");
  const long steps = step_count(T, cfg.dt);
  Propagator p(initial.phi.grid, cfg);
  Trajectory tr;
  PauliState s = initial;
  auto record = [&] {
    auto o = observables(s);
    o.density_up = ScalarField();
    o.density_down = ScalarField();
    tr.records.push_back(std::move(o));
  };
  record();
  if (snapshot_every > 0) tr.snapshots.push_back(s);
  for (long k = 1; k <= steps; ++k) {
    p.step(s.phi, initial.t + (k - 1) * cfg.dt);
    s.t = initial.t + k * cfg.dt;
    if (k % record_every == 0 || k == steps) record();
    if (snapshot_every > 0 && (k % snapshot_every == 0 || k == steps)) tr.snapshots.push_back(s);
  }
  return tr;
}

/// Normalized Gaussian packet on a grid: exp(-|x - x0|^2 / 4 sigma^2 + i k0.x) times a spinor.
inline SpinorField gaussian_packet(const Grid& g, Vec3 x0, double sigma, Vec3 k0, Complex up, Complex down) {
  SpinorField f(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 x = g.position(i);
    double r2 = 0.0, phase = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      r2 += (x[a] - x0[a]) * (x[a] - x0[a]);
      phase += k0[a] * x[a];
    }
    const Complex e = std::exp(-r2 / (4.0 * sigma * sigma)) * std::polar(1.0, phase);
    f.up[i] = up * e;
    f.down[i] = down * e;
    if (g.is_boundary_node(i)) f.up[i] = f.down[i] = 0.0;
  }
  const double n = std::sqrt(norm(f));
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] /= n;
    f.down[i] /= n;
  }
  return f;
}

/// Position variance along one axis of the total density.
inline double position_variance(const SpinorField& f, int axis) {
  const Grid& g = f.grid;
  const auto W = quadrature_weights(g);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double p = W[i] * (std::norm(f.up[i]) + std::norm(f.down[i]));
    const double x = g.position(i)[axis];
    m0 += p;
    m1 += p * x;
    m2 += p * x * x;
  }
  const double mean = m1 / m0;
  return m2 / m0 - mean * mean;
}

// ---------------------------------------------------------------------------
// Stern-Gerlach

struct SternGerlachSetup {
  Grid grid;  // 1D along z
  PhysicalConstants consts = PhysicalConstants::neutral(1.0, 1.0, 0.5);
  double z0 = 0.0;
  double sigma = 0.1;
  Complex up = 1.0 / std::sqrt(2.0), down = 1.0 / std::sqrt(2.0);
  double B0 = 0.0;  // removed analytically in the interaction picture
  double b = 0.0;   // dB_z/dz
  double flight_time = 1.0;
  double dt = 1e-3;
  Scheme scheme = Scheme::split_operator;
  int record_every = 10;
  double edge_fraction = 0.05;      // outer share of the axis watched for leakage
  double edge_tolerance = 1e-8;     // largest density mass allowed in the edge layer
};

struct SternGerlachRecord {
  double t;
  double z_up, z_down;
  double separation;
  double overlap;
};

struct SternGerlachResult {
  std::vector<SternGerlachRecord> records;
  PauliState final_state;  // lab frame, B0 phase restored
};

namespace detail {
inline double color_center(const Grid& g, const std::vector<Complex>& c, const std::vector<double>& W) {
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double p = W[i] * std::norm(c[i]);
    m0 += p;
    m1 += p * g.coordinate(0, static_cast<int>(i));
  }
  return m0 > 0.0 ? m1 / m0 : 0.0;
}
}  // namespace detail

/// Neutral spin-superposition packet in B_z(z) = B0 + b z. The uniform B0 only
/// rotates the spin phase, so propagation runs in the frame co-rotating with it
/// and the phase is restored at the end.
inline SternGerlachResult stern_gerlach(const SternGerlachSetup& s) {
  const Grid& g = s.grid;
  if (g.dim() != 1) throw std::invalid_argument("stern_gerlach: needs a 1D grid along z");
  if (!(s.sigma > 0.0)) throw std::invalid_argument("stern_gerlach: sigma must be positive");
  SolverConfig cfg;
  cfg.scheme = s.scheme;
  cfg.dt = s.dt;
  cfg.consts = s.consts;
  cfg.neutral = true;
  cfg.em = EMConfiguration(g);
  for (std::size_t i = 0; i < g.size(); ++i) cfg.em.B.components[2][i] = s.b * g.coordinate(0, static_cast<int>(i));
  cfg.mode = g.periodic() ? DerivativeMode::spectral : DerivativeMode::central;
  const long steps = step_count(s.flight_time, s.dt);
  if (s.record_every < 1) throw std::invalid_argument("stern_gerlach: record_every must be positive");

  SpinorField f = gaussian_packet(g, {s.z0, 0.0, 0.0}, s.sigma, {0.0, 0.0, 0.0}, s.up, s.down);
  const auto W = quadrature_weights(g);
  const int n = g.cells(0);
  const int edge = std::max(1, static_cast<int>(std::ceil(s.edge_fraction * n)));
  auto check_edges = [&](double t) {
    double leak = 0.0;
    for (int i = 0; i < n; ++i)
      if (i < edge || i >= n - edge) leak += W[i] * (std::norm(f.up[i]) + std::norm(f.down[i]));
    if (leak > s.edge_tolerance)
      throw BoundaryError("stern_gerlach: packet reached the grid boundary at t = " + std::to_string(t) +
                          " (edge mass " + std::to_string(leak) + ")");
  };
  SternGerlachResult res;
  auto record = [&](double t) {
    const double zu = detail::color_center(g, f.up, W), zd = detail::color_center(g, f.down, W);
    double ov = 0.0, mu_ = 0.0, md = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ov += W[i] * std::abs(f.up[i]) * std::abs(f.down[i]);
      mu_ += W[i] * std::norm(f.up[i]);
      md += W[i] * std::norm(f.down[i]);
    }
    const double overlap = (mu_ > 0.0 && md > 0.0) ? ov / std::sqrt(mu_ * md) : 0.0;
    res.records.push_back({t, zu, zd, zu - zd, overlap});
  };
  check_edges(0.0);
  record(0.0);
  Propagator p(g, cfg);
  for (long k = 1; k <= steps; ++k) {
    p.step(f, (k - 1) * s.dt);
    const double t = k * s.dt;
    if (k % s.record_every == 0 || k == steps) {
      check_edges(t);
      record(t);
    }
  }
  // up carries energy -mu B0, down +mu B0
  const double t_end = steps * s.dt;
  const double ang = s.consts.spin_coupling() * s.B0 * t_end / s.consts.hbar;
  const Complex pu = std::polar(1.0, ang), pd = std::polar(1.0, -ang);
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.up[i] *= pu;
    f.down[i] *= pd;
  }
  res.final_state = {std::move(f), t_end};
  return res;
}

}  // namespace plab
