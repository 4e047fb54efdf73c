#pragma once

// Constrained minimization of the discretized Fisher functional, alone or with
// the Lambda coupling to fixed background fields, over the density P and,
// optionally, the angle theta.
//
// The Fisher term uses the compact nearest-neighbour form
//   I = sum_faces w_f [4 (sqrt P_i - sqrt P_j)^2 + (theta_i - theta_j)^2 (P_i + P_j) / 2] / h^2,
// which has no odd-even null modes. Descent runs in the amplitude psi = sqrt P
// with a Sobolev preconditioner (I - alpha Laplacian), projection onto the
// normalization constraint, Armijo backtracking and renormalization.

#include "pauli_lab/functionals.hpp"
#include "pauli_lab/random_fields.hpp"

#include <optional>

namespace plab {

enum class ObjectiveKind { fisher, total };

inline std::string to_string(ObjectiveKind k) { return k == ObjectiveKind::fisher ? "fisher" : "total"; }
inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "fisher") return ObjectiveKind::fisher;
  if (s == "total") return ObjectiveKind::total;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

struct MinimizationProblem {
  explicit MinimizationProblem(Grid g) : grid(std::move(g)) {}

  Grid grid;
  ObjectiveKind objective = ObjectiveKind::fisher;
  bool free_theta = false;  // P is always free; S and phi stay fixed
  PhysicalConstants consts = PhysicalConstants::natural();
  std::optional<PolarFields> initial;  // default: smooth positive bump (dirichlet) or uniform (periodic)
  // background for the total objective; dS/dt and dphi/dt supplied as rates
  std::optional<EMConfiguration> em;
  std::optional<ScalarField> S, phi, dS_dt, dphi_dt;
  double gradient_tolerance = 1e-6;  // relative to |mu|; 1e-7 is near the roundoff floor at 512 cells
  double step_tolerance = 0.0;  // relative objective change that counts as stalled
  int max_iterations = 5000;
  int multistart = 8;
  std::uint64_t seed = 1;
  double perturbation = 0.3;        // amplitude of the log-perturbation for starts s > 0
  double floor = probability_floor_default();

  static constexpr double probability_floor_default() { return 1e-12; }
};

struct TraceRow {
  int iteration;
  double objective;
  double gradient_norm;
};

struct MinimizationResult {
  PolarFields fields;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double mu = 0.0;  // Lagrange multiplier of the normalization, sum P dJ/dP
  int iterations = 0;
  int multistart_index = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
};

struct VariationalGradient {
  ScalarField P;
  ScalarField theta;
};

namespace detail {

struct CompactTerms {
  std::vector<double> W;           // quadrature weights
  std::vector<double> K0, Kc, Ks;  // coupling coefficients per cell, empty for fisher
  std::vector<std::uint8_t> fixed; // dirichlet boundary nodes, pinned for psi only
  std::vector<std::uint8_t> none;  // theta is free everywhere
  double lambda = 1.0;
  double alpha = 1.0;              // preconditioner scale
};

inline CompactTerms compact_terms(const MinimizationProblem& pr) {
  const Grid& g = pr.grid;
  CompactTerms t;
  t.W = quadrature_weights(g);
  t.fixed.assign(g.size(), 0);
  t.none.assign(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) t.fixed[i] = g.is_boundary_node(i) ? 1 : 0;
  t.lambda = pr.objective == ObjectiveKind::fisher ? 1.0 : pr.consts.lambda;
  double k2 = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const double k = g.periodic() ? 2.0 * pi / g.extent(a) : pi / g.extent(a);
    k2 = std::max(k2, k * k);
  }
  t.alpha = 1.0 / k2;
  if (pr.objective == ObjectiveKind::total) {
    const auto& c = pr.consts;
    const EMConfiguration em = pr.em ? *pr.em : EMConfiguration(g);
    const ScalarField S = pr.S ? *pr.S : ScalarField(g);
    const ScalarField ph = pr.phi ? *pr.phi : ScalarField(g);
    const ScalarField tS = pr.dS_dt ? *pr.dS_dt : ScalarField(g);
    const ScalarField tph = pr.dphi_dt ? *pr.dphi_dt : ScalarField(g);
    for (const auto* f : {&em.phi_pot, &em.u, &S, &ph, &tS, &tph}) require_same_grid(g, f->grid, "MinimizationProblem");
    const auto dS = grad3(g, S.values, DerivativeMode::central);
    const auto dph = grad3(g, ph.values, DerivativeMode::central);
    t.K0.resize(g.size());
    t.Kc.resize(g.size());
    t.Ks.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec3 G = kinetic_momentum(dS, em, c.q, i);
      const Vec3 dp = at3(dph, i);
      const Vec3 B = em.B.at(i);
      t.K0[i] = (dotv(G, G) + c.a * c.a * dotv(dp, dp)) / (2.0 * c.m) + tS[i] + c.q * em.phi_pot[i] + em.u[i];
      t.Kc[i] = -c.a / c.m * dotv(dp, G) - c.a * tph[i] - c.a * c.gamma * B[2];
      t.Ks[i] = -c.a * c.gamma * (std::cos(ph[i]) * B[0] + std::sin(ph[i]) * B[1]);
    }
  }
  return t;
}

// Visits each face (i, j) along each active axis with its weight w_f / h^2.
template <class F>
void for_each_face(const Grid& g, F&& f) {
  const auto tw = [&](int b, int i) {
    if (!g.active(b)) return 1.0;
    const double h = g.spacing(b);
    return (!g.periodic() && (i == 0 || i == g.cells(b) - 1)) ? 0.5 * h : h;
  };
  for (int a = 0; a < g.dim(); ++a) {
    const double h = g.spacing(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto m = g.multi_index(i);
      if (!g.periodic() && m[a] == g.cells(a) - 1) continue;
      double w = h;
      for (int b = 0; b < g.dim(); ++b)
        if (b != a) w *= tw(b, m[b]);
      m[a] = (m[a] + 1) % g.cells(a);
      f(i, g.index(m[0], m[1], m[2]), w / (h * h));
    }
  }
}

struct CompactValue {
  long double J = 0.0L;
  std::vector<double> g_psi, g_theta;
};

inline CompactValue compact_value(const Grid& g, const CompactTerms& t, std::span<const double> psi,
                                  std::span<const double> theta, bool with_gradient) {
  CompactValue v;
  if (with_gradient) {
    v.g_psi.assign(g.size(), 0.0);
    v.g_theta.assign(g.size(), 0.0);
  }
  // extended accumulation so descent can resolve changes near double roundoff
  long double fisher = 0.0L;
  for_each_face(g, [&](std::size_t i, std::size_t j, double w) {
    const double dpsi = psi[i] - psi[j], dth = theta[i] - theta[j];
    const double p2 = psi[i] * psi[i] + psi[j] * psi[j];
    const long double dl = static_cast<long double>(psi[i]) - psi[j], tl = static_cast<long double>(theta[i]) - theta[j];
    const long double pl = static_cast<long double>(psi[i]) * psi[i] + static_cast<long double>(psi[j]) * psi[j];
    fisher += w * (4.0L * dl * dl + 0.5L * tl * tl * pl);
    if (with_gradient) {
      v.g_psi[i] += t.lambda * w * (8.0 * dpsi + dth * dth * psi[i]);
      v.g_psi[j] += t.lambda * w * (-8.0 * dpsi + dth * dth * psi[j]);
      v.g_theta[i] += t.lambda * w * dth * p2;
      v.g_theta[j] -= t.lambda * w * dth * p2;
    }
  });
  long double J = t.lambda * fisher;
  if (!t.K0.empty()) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double ct = std::cos(theta[i]), st = std::sin(theta[i]);
      const double K = t.K0[i] + t.Kc[i] * ct + t.Ks[i] * st;
      J += static_cast<long double>(t.W[i]) * psi[i] * psi[i] * (static_cast<long double>(t.K0[i]) + t.Kc[i] * ct + t.Ks[i] * st);
      if (with_gradient) {
        v.g_psi[i] += 2.0 * t.W[i] * psi[i] * K;
        v.g_theta[i] += t.W[i] * psi[i] * psi[i] * (-t.Kc[i] * st + t.Ks[i] * ct);
      }
    }
  }
  v.J = J;
  return v;
}

// x = (I - alpha Laplacian)^{-1} b on free nodes, by conjugate gradients.
inline std::vector<double> precondition(const Grid& g, const CompactTerms& t, std::span<const double> b,
                                        const std::vector<std::uint8_t>& fixed) {
  const std::size_t n = g.size();
  auto apply = [&](const std::vector<double>& x) {
    std::vector<double> y(x);
    for_each_face(g, [&](std::size_t i, std::size_t j, double w) {
      (void)w;
      const int axis = [&] {
        const auto mi = g.multi_index(i), mj = g.multi_index(j);
        for (int a = 0; a < 3; ++a)
          if (mi[a] != mj[a]) return a;
        return 0;
      }();
      const double c = t.alpha / (g.spacing(axis) * g.spacing(axis));
      const double d = x[i] - x[j];
      y[i] += c * d;
      y[j] -= c * d;
    });
    for (std::size_t i = 0; i < n; ++i)
      if (fixed[i]) y[i] = 0.0;
    return y;
  };
  std::vector<double> x(n, 0.0), r(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i)
    if (fixed[i]) r[i] = 0.0;
  std::vector<double> p = r;
  double rr = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) rr += r[i] * r[i];
  bb = rr;
  if (bb == 0.0) return x;
  for (int it = 0; it < 10 * static_cast<int>(n) + 100 && rr > 1e-28 * bb; ++it) {
    const auto Ap = apply(p);
    double pAp = 0.0;
    for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    const double a = rr / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += a * p[i];
      r[i] -= a * Ap[i];
    }
    double rr_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) rr_new += r[i] * r[i];
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return x;
}

inline double weighted_dot(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * a[i] * b[i];
  return s;
}

// J is quadratic in psi at fixed theta, so J / mass removes the roundoff left by renormalization.
inline CompactValue normalized_value(const Grid& g, const CompactTerms& t, std::span<const double> psi,
                                     std::span<const double> theta) {
  auto v = compact_value(g, t, psi, theta, true);
  long double mass = 0.0L;
  for (std::size_t i = 0; i < psi.size(); ++i) mass += static_cast<long double>(t.W[i]) * psi[i] * psi[i];
  v.J /= mass;
  return v;
}

struct Stationarity {
  double mu = 0.0;
  double norm = 0.0;
};

// mu = sum P dJ/dP; the norm is the P-weighted RMS of dJ/dP / W - mu plus the
// theta gradient, both written without dividing by psi.
inline Stationarity stationarity(const CompactTerms& t, std::span<const double> psi, const CompactValue& v,
                                 bool free_theta) {
  Stationarity s;
  for (std::size_t i = 0; i < psi.size(); ++i)
    if (!t.fixed[i]) s.mu += 0.5 * psi[i] * v.g_psi[i];
  double n2 = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (free_theta) n2 += v.g_theta[i] * v.g_theta[i] / t.W[i];
    if (t.fixed[i]) continue;
    const double r = 0.5 * v.g_psi[i] - s.mu * t.W[i] * psi[i];
    n2 += r * r / t.W[i];
  }
  s.norm = std::sqrt(n2);
  return s;
}

// Rescales psi to unit mass, enforces the positivity floor and pins fixed nodes.
inline void retract(const CompactTerms& t, std::vector<double>& psi, double floor_density, bool absolute) {
  const double psi_floor = std::sqrt(floor_density);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < psi.size(); ++i) {
      if (t.fixed[i]) {
        psi[i] = 0.0;
        continue;
      }
      if (absolute) psi[i] = std::max(std::abs(psi[i]), psi_floor);
    }
    const double mass = weighted_dot(t.W, psi, psi);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw std::runtime_error("minimize: constraint projection failed");
    const double s = 1.0 / std::sqrt(mass);
    for (auto& v : psi) v *= s;
  }
}

inline double max_scale(const Grid& g) {
  double l = 0.0;
  for (int a = 0; a < g.dim(); ++a) l = std::max(l, g.extent(a));
  return l;
}

inline PolarFields default_initial(const MinimizationProblem& pr) {
  const Grid& g = pr.grid;
  PolarFields p(g);
  if (g.periodic()) {
    p.P = ScalarField(g, 1.0);
  } else {
    // a smooth bump that is not the optimum: product of x (L - x) profiles
    p.P = ScalarField::sample(g, [&](Vec3 x) {
      double v = 1.0;
      for (int a = 0; a < g.dim(); ++a) {
        const double L = g.extent(a);
        v *= std::pow(x[a] * (L - x[a]) / (L * L), 2);
      }
      return v;
    });
  }
  p.P = normalize(p.P);
  return p;
}

}  // namespace detail

/// Value of the discrete objective for the given P and theta.
inline double objective_value(const MinimizationProblem& pr, const PolarFields& f) {
  const auto t = detail::compact_terms(pr);
  std::vector<double> psi(f.P.size());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (f.P[i] < 0.0) throw std::domain_error("objective_value: negative P");
    psi[i] = std::sqrt(f.P[i]);
  }
  return static_cast<double>(detail::compact_value(pr.grid, t, psi, f.theta.values, false).J);
}

/// Exact gradient of objective_value with respect to each P and theta value.
/// P on dirichlet boundary nodes is pinned and carries zero gradient.
inline VariationalGradient functional_gradient(const MinimizationProblem& pr, const PolarFields& f) {
  const Grid& g = pr.grid;
  require_same_grid(g, f.P.grid, "functional_gradient");
  const auto t = detail::compact_terms(pr);
  std::vector<double> psi(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!t.fixed[i] && f.P[i] < pr.floor) throw std::domain_error("functional_gradient: P below floor at a free cell");
    psi[i] = std::sqrt(std::max(f.P[i], 0.0));
  }
  const auto v = detail::compact_value(g, t, psi, f.theta.values, true);
  VariationalGradient out{ScalarField(g), ScalarField(g)};
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.theta[i] = pr.free_theta ? v.g_theta[i] : 0.0;
    if (!t.fixed[i]) out.P[i] = v.g_psi[i] / (2.0 * psi[i]);
  }
  return out;
}

/// Projected-gradient norm and multiplier at the given fields.
inline std::pair<double, double> stationarity_measure(const MinimizationProblem& pr, const PolarFields& f) {
  const auto t = detail::compact_terms(pr);
  std::vector<double> psi(f.P.size());
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = std::sqrt(std::max(f.P[i], 0.0));
  const auto v = detail::compact_value(pr.grid, t, psi, f.theta.values, true);
  const auto s = detail::stationarity(t, psi, v, pr.free_theta);
  return {s.norm, s.mu};
}

namespace detail {

inline MinimizationResult minimize_from(const MinimizationProblem& pr, const CompactTerms& t, PolarFields start,
                                        int start_index) {
  const Grid& g = pr.grid;
  const double floor_density = pr.floor / g.volume();
  std::vector<double> psi(g.size()), theta = start.theta.values;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (start.P[i] < 0.0) throw std::domain_error("minimize: negative initial P");
    psi[i] = std::sqrt(start.P[i]);
  }
  retract(t, psi, floor_density, true);

  MinimizationResult res;
  res.multistart_index = start_index;
  auto v = normalized_value(g, t, psi, theta);
  auto st = stationarity(t, psi, v, pr.free_theta);
  double step = 1.0;
  int it = 0;
  res.trace.push_back({0, static_cast<double>(v.J), st.norm});
  auto converged = [&] { return st.norm <= pr.gradient_tolerance * std::max(std::abs(st.mu), 1e-300); };
  while (!converged() && it < pr.max_iterations) {
    // tangent gradient in the W metric, preconditioned, then projected so the
    // first-order change of the mass vanishes
    std::vector<double> rhs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) rhs[i] = t.fixed[i] ? 0.0 : (0.5 * v.g_psi[i] - st.mu * t.W[i] * psi[i]) / t.W[i];
    auto d = precondition(g, t, rhs, t.fixed);
    const auto u = precondition(g, t, psi, t.fixed);
    const double beta = weighted_dot(t.W, psi, d) / weighted_dot(t.W, psi, u);
    // unit step removes the stiffest modes of the 4 lambda |grad psi|^2 term
    const double unit = t.alpha / (4.0 * t.lambda);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = -unit * (d[i] - beta * u[i]);
    std::vector<double> dth(g.size(), 0.0);
    if (pr.free_theta) {
      // the theta Hessian scales with the face-averaged P: symmetric scaling D^-1/2 M^-1 D^-1/2
      std::vector<double> pface(g.size(), 0.0), wsum(g.size(), 0.0);
      for_each_face(g, [&](std::size_t i, std::size_t j, double w) {
        const double pa = 0.5 * (psi[i] * psi[i] + psi[j] * psi[j]);
        pface[i] += w * pa;
        pface[j] += w * pa;
        wsum[i] += w;
        wsum[j] += w;
      });
      double pmax = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        pface[i] = wsum[i] > 0.0 ? pface[i] / wsum[i] : psi[i] * psi[i];
        pmax = std::max(pmax, pface[i]);
      }
      std::vector<double> rt(g.size()), dscale(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        dscale[i] = 1.0 / std::sqrt(std::max(pface[i], 1e-6 * pmax) / pmax);
        rt[i] = dscale[i] * v.g_theta[i] / t.W[i];
      }
      dth = precondition(g, t, rt, t.none);
      for (std::size_t i = 0; i < g.size(); ++i) dth[i] *= -unit * dscale[i];
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) slope += v.g_psi[i] * d[i] + v.g_theta[i] * dth[i];
    if (!(slope < 0.0)) break;

    bool accepted = false;
    std::vector<double> psi_new(g.size()), th_new(g.size());
    CompactValue v_new;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        psi_new[i] = psi[i] + step * d[i];
        th_new[i] = theta[i] + step * dth[i];
      }
      retract(t, psi_new, floor_density, true);
      v_new = normalized_value(g, t, psi_new, th_new);
      if (v_new.J <= v.J + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const long double change = v.J - v_new.J;
    psi.swap(psi_new);
    theta.swap(th_new);
    v = std::move(v_new);
    st = stationarity(t, psi, v, pr.free_theta);
    ++it;
    res.trace.push_back({it, static_cast<double>(v.J), st.norm});
    step = std::min(1.0, 2.0 * step);
    if (change <= pr.step_tolerance * std::abs(v.J) && !converged()) {
      // stalled: the objective no longer moves at working precision
      break;
    }
  }
  res.iterations = it;
  res.objective = static_cast<double>(v.J);
  res.gradient_norm = st.norm;
  res.mu = st.mu;
  res.converged = converged();
  res.fields = std::move(start);
  for (std::size_t i = 0; i < g.size(); ++i) res.fields.P[i] = psi[i] * psi[i];
  res.fields.theta.values = theta;
  return res;
}

inline PolarFields start_fields(const MinimizationProblem& pr, int s) {
  const Grid& g = pr.grid;
  PolarFields base = pr.initial ? *pr.initial : default_initial(pr);
  require_same_grid(g, base.P.grid, "minimize");
  if (pr.S) base.S = *pr.S;
  if (pr.phi) base.phi = *pr.phi;
  if (s == 0) return base;
  std::mt19937_64 rng(pr.seed * 1000003ULL + static_cast<std::uint64_t>(s));
  RandomFieldSpec spec;
  spec.amplitude = pr.perturbation;
  const auto pert = random_smooth_field(g, rng, spec);
  for (std::size_t i = 0; i < g.size(); ++i) base.P[i] *= std::exp(pert[i]);
  if (pr.free_theta) {
    const auto tp = random_smooth_field(g, rng, spec);
    for (std::size_t i = 0; i < g.size(); ++i) base.theta[i] += tp[i];
  }
  return base;
}

}  // namespace detail

/// Best-of-multistart projected-gradient descent; ties keep the lowest start index.
inline MinimizationResult minimize(const MinimizationProblem& pr) {
  if (pr.multistart < 1) throw std::invalid_argument("minimize: multistart must be at least 1");
  if (pr.max_iterations < 0) throw std::invalid_argument("minimize: max_iterations must be nonnegative");
  if (!(pr.floor >= 0.0)) throw std::invalid_argument("minimize: floor must be nonnegative");
  const auto t = detail::compact_terms(pr);
  std::optional<MinimizationResult> best;
  for (int s = 0; s < pr.multistart; ++s) {
    auto r = detail::minimize_from(pr, t, detail::start_fields(pr, s), s);
    if (!best || r.objective < best->objective) best = std::move(r);
  }
  return *best;
}

struct SpectrumEntry {
  double objective = 0.0;
  PolarFields fields;
  bool converged = false;
  int iterations = 0;
};

struct SpectrumScan {
  std::vector<SpectrumEntry> modes;
  int requested = 0;
  bool complete() const {
    if (static_cast<int>(modes.size()) < requested) return false;
    for (const auto& m : modes)
      if (!m.converged) return false;
    return true;
  }
};

/// Stationary family of the Fisher-only problem: mode 1 from minimize(), higher
/// modes by W-orthogonal deflation with preconditioned Rayleigh-Ritz steps on
/// the signed amplitude. The density of mode n is psi_n^2.
inline SpectrumScan spectrum_scan(const MinimizationProblem& pr, int mode_count) {
  if (pr.objective != ObjectiveKind::fisher) throw std::invalid_argument("spectrum_scan: needs the fisher-only objective");
  if (pr.free_theta) throw std::invalid_argument("spectrum_scan: theta must be fixed");
  if (mode_count < 1) throw std::invalid_argument("spectrum_scan: mode_count must be positive");
  const Grid& g = pr.grid;
  const auto t = detail::compact_terms(pr);
  SpectrumScan out;
  out.requested = mode_count;
  const auto ground = minimize(pr);
  out.modes.push_back({ground.objective, ground.fields, ground.converged, ground.iterations});
  if (mode_count == 1) return out;

  std::vector<std::vector<double>> basis;
  {
    std::vector<double> psi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) psi[i] = std::sqrt(ground.fields.P[i]);
    basis.push_back(psi);
  }
  const std::vector<double> theta = ground.fields.theta.values;
  auto orthogonalize = [&](std::vector<double>& v) {
    for (int rep = 0; rep < 2; ++rep)
      for (const auto& b : basis) {
        const double c = detail::weighted_dot(t.W, b, v);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
      }
    for (std::size_t i = 0; i < v.size(); ++i)
      if (t.fixed[i]) v[i] = 0.0;
  };
  auto normalize_w = [&](std::vector<double>& v) {
    const double n = std::sqrt(detail::weighted_dot(t.W, v, v));
    for (auto& x : v) x /= n;
  };
  // A psi as half the gradient of the quadratic objective
  auto apply_A = [&](const std::vector<double>& v) {
    auto val = detail::compact_value(g, t, v, theta, true);
    for (auto& x : val.g_psi) x *= 0.5;
    return val.g_psi;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  for (int n = 2; n <= mode_count; ++n) {
    std::mt19937_64 rng(pr.seed * 7919ULL + static_cast<std::uint64_t>(n));
    RandomFieldSpec spec;
    spec.max_mode = n + 2;
    std::vector<double> psi = random_smooth_field(g, rng, spec).values;
    orthogonalize(psi);
    normalize_w(psi);
    SpectrumEntry e;
    double rho = 0.0;
    for (int it = 0; it <= pr.max_iterations; ++it) {
      const auto Ap = apply_A(psi);
      rho = dot(psi, Ap);
      std::vector<double> r(g.size());
      double rn = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        r[i] = t.fixed[i] ? 0.0 : Ap[i] - rho * t.W[i] * psi[i];
        if (!t.fixed[i]) rn += r[i] * r[i] / t.W[i];
      }
      e.iterations = it;
      if (std::sqrt(rn) <= pr.gradient_tolerance * std::abs(rho)) {
        e.converged = true;
        break;
      }
      if (it == pr.max_iterations) break;
      for (std::size_t i = 0; i < g.size(); ++i) r[i] = t.fixed[i] ? 0.0 : r[i] / t.W[i];
      auto d = detail::precondition(g, t, r, t.fixed);
      orthogonalize(d);
      const double c = detail::weighted_dot(t.W, psi, d);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= c * psi[i];
      normalize_w(d);
      // lowest Ritz pair on span{psi, d}, both W-normalized and W-orthogonal
      const auto Ad = apply_A(d);
      const double a11 = rho, a12 = dot(psi, Ad), a22 = dot(d, Ad);
      const double mean = 0.5 * (a11 + a22), half = 0.5 * (a11 - a22);
      const double low = mean - std::sqrt(half * half + a12 * a12);
      double c1 = a12, c2 = low - a11;
      if (std::abs(c1) + std::abs(c2) == 0.0) {
        c1 = 1.0;
        c2 = 0.0;
      }
      for (std::size_t i = 0; i < g.size(); ++i) psi[i] = c1 * psi[i] + c2 * d[i];
      orthogonalize(psi);
      normalize_w(psi);
    }
    e.objective = rho;
    e.fields = ground.fields;
    for (std::size_t i = 0; i < g.size(); ++i) e.fields.P[i] = psi[i] * psi[i];
    basis.push_back(psi);
    out.modes.push_back(std::move(e));
  }
  return out;
}

}  // namespace plab
