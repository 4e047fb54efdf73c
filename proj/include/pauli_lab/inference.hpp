#pragma once

// Discrete detection statistics: i-prob tables over (voxel, color, slice),
// multinomial datasets of click counts, the evidence for a shifted particle
// position, its Taylor structure and the discrete Fisher information.
//
// Table layout: probs[(tau * 2 + c) * cells + j] with c = 0 for color k = +1
// and c = 1 for k = -1. A table stores P(j, k | X_tau) for the slice's own
// X_tau; by homogeneity the value for X_tau + eps is the stored profile read
// at lattice position j - eps.

#include "pauli_lab/grid.hpp"

#include <cstdint>
#include <random>

namespace plab {

inline constexpr double probability_floor = 1e-12;

inline int color_index(int k) {
  if (k == +1) return 0;
  if (k == -1) return 1;
  throw std::invalid_argument("color must be +1 or -1");
}
inline int color_value(int c) { return c == 0 ? +1 : -1; }

struct IProbTable {
  Grid lattice;
  int times = 0;
  std::vector<Vec3> positions;  // X_tau, meters
  std::vector<double> probs;

  IProbTable() = default;
  IProbTable(const Grid& g, int m) : lattice(g), times(m), positions(m, Vec3{0, 0, 0}), probs(2 * m * g.size(), 0.0) {
    if (m <= 0) throw std::invalid_argument("IProbTable: need at least one slice");
  }

  std::size_t cells() const { return lattice.size(); }
  std::size_t offset(int tau, int c) const { return (static_cast<std::size_t>(tau) * 2 + c) * cells(); }
  double at(int tau, int c, std::size_t j) const { return probs[offset(tau, c) + j]; }
  double& at(int tau, int c, std::size_t j) { return probs[offset(tau, c) + j]; }
  std::span<const double> slice(int tau, int c) const { return {probs.data() + offset(tau, c), cells()}; }

  /// Throws std::domain_error unless entries lie in [0, 1] and each slice sums to 1.
  void validate() const {
    if (probs.size() != 2 * static_cast<std::size_t>(times) * cells())
      throw std::domain_error("IProbTable: entry count does not match lattice and slices");
    for (int tau = 0; tau < times; ++tau) {
      double sum = 0.0;
      for (int c = 0; c < 2; ++c)
        for (double p : slice(tau, c)) {
          if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("IProbTable: entry outside [0, 1]");
          sum += p;
        }
      if (std::abs(sum - 1.0) > 1e-12) throw std::domain_error("IProbTable: slice not normalized");
    }
  }
};

/// Builds a table from a displacement profile f(tau, k, x - X_tau), normalized per slice.
template <class Profile>
IProbTable make_table(const Grid& lattice, const std::vector<Vec3>& positions, Profile&& profile) {
  IProbTable t(lattice, static_cast<int>(positions.size()));
  t.positions = positions;
  for (int tau = 0; tau < t.times; ++tau) {
    double sum = 0.0;
    for (int c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < t.cells(); ++j) {
        const Vec3 x = lattice.position(j);
        const Vec3 d{x[0] - positions[tau][0], x[1] - positions[tau][1], x[2] - positions[tau][2]};
        const double v = profile(tau, color_value(c), d);
        if (!(v >= 0.0)) throw std::domain_error("make_table: profile must be nonnegative");
        t.at(tau, c, j) = v;
        sum += v;
      }
    if (!(sum > 0.0)) throw std::domain_error("make_table: profile has no mass");
    for (int c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < t.cells(); ++j) t.at(tau, c, j) /= sum;
  }
  return t;
}

/// Shifts the whole table and every X_tau by a lattice vector (cells per axis).
inline IProbTable translated(const IProbTable& t, std::array<int, 3> shift) {
  IProbTable out = t;
  std::fill(out.probs.begin(), out.probs.end(), 0.0);
  const Grid& g = t.lattice;
  for (int tau = 0; tau < t.times; ++tau) {
    for (int a = 0; a < 3; ++a) out.positions[tau][a] += g.active(a) ? shift[a] * g.spacing(a) : 0.0;
    for (int c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < t.cells(); ++j) {
        auto m = g.multi_index(j);
        bool inside = true;
        for (int a = 0; a < g.dim(); ++a) {
          m[a] += shift[a];
          if (g.periodic()) {
            m[a] = ((m[a] % g.cells(a)) + g.cells(a)) % g.cells(a);
          } else if (m[a] < 0 || m[a] >= g.cells(a)) {
            inside = false;
          }
        }
        if (inside) out.at(tau, c, g.index(m[0], m[1], m[2])) = t.at(tau, c, j);
      }
  }
  return out;
}

struct DetectionDataset {
  Grid lattice;
  int times = 0;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  std::vector<Vec3> positions;
  std::vector<std::int64_t> counts;  // same layout as IProbTable::probs

  std::size_t cells() const { return lattice.size(); }
  std::int64_t count(int tau, int c, std::size_t j) const {
    return counts[(static_cast<std::size_t>(tau) * 2 + c) * cells() + j];
  }
  std::vector<double> weights() const { return {counts.begin(), counts.end()}; }
};

/// Expected counts N * P; the frequency assignment of the robustness argument.
inline std::vector<double> expected_counts(const IProbTable& t, double N) {
  std::vector<double> w(t.probs.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = N * t.probs[i];
  return w;
}

/// One multinomial draw of size N per slice, by sequential conditional binomials.
inline DetectionDataset sample_dataset(const IProbTable& table, std::int64_t N, std::uint64_t seed) {
  if (N < 0) throw std::invalid_argument("sample_dataset: N must be nonnegative");
  table.validate();
  DetectionDataset d;
  d.lattice = table.lattice;
  d.times = table.times;
  d.N = N;
  d.seed = seed;
  d.positions = table.positions;
  d.counts.assign(table.probs.size(), 0);
  std::mt19937_64 rng(seed);
  const std::size_t per_slice = 2 * table.cells();
  for (int tau = 0; tau < table.times; ++tau) {
    const std::size_t base = static_cast<std::size_t>(tau) * per_slice;
    std::int64_t remaining = N;
    double remaining_mass = 1.0;
    for (std::size_t i = 0; i < per_slice && remaining > 0; ++i) {
      const double p = table.probs[base + i];
      std::int64_t c = 0;
      if (i + 1 == per_slice || p >= remaining_mass) {
        c = remaining;
      } else if (p > 0.0) {
        std::binomial_distribution<std::int64_t> bin(remaining, std::clamp(p / remaining_mass, 0.0, 1.0));
        c = bin(rng);
      }
      d.counts[base + i] = c;
      remaining -= c;
      remaining_mass -= p;
      if (remaining_mass <= 0.0 && remaining > 0) {
        // roundoff exhausted the mass; put the rest on the last positive cell
        d.counts[base + i] += remaining;
        remaining = 0;
      }
    }
  }
  return d;
}

/// log P(D | X): sum over slices of log N! - sum log c! + sum c log P.
inline double log_dataset_iprob(const IProbTable& table, const DetectionDataset& data) {
  if (!(table.lattice == data.lattice) || table.times != data.times)
    throw std::invalid_argument("log_dataset_iprob: table and dataset shapes differ");
  double sum = 0.0;
  const std::size_t per_slice = 2 * table.cells();
  for (int tau = 0; tau < table.times; ++tau) {
    sum += std::lgamma(static_cast<double>(data.N) + 1.0);
    for (std::size_t i = 0; i < per_slice; ++i) {
      const std::size_t idx = tau * per_slice + i;
      const std::int64_t c = data.counts[idx];
      if (c == 0) continue;
      const double p = table.probs[idx];
      if (!(p > 0.0)) throw std::domain_error("log_dataset_iprob: counts at a zero-probability cell (impossible data)");
      sum += -std::lgamma(static_cast<double>(c) + 1.0) + static_cast<double>(c) * std::log(p);
    }
  }
  return sum;
}

/// Assigns P := c / N.
inline IProbTable empirical_table(const DetectionDataset& data) {
  if (data.N <= 0) throw std::invalid_argument("empirical_table: N must be positive");
  IProbTable t(data.lattice, data.times);
  t.positions = data.positions;
  const double inv = 1.0 / static_cast<double>(data.N);
  for (std::size_t i = 0; i < t.probs.size(); ++i) t.probs[i] = static_cast<double>(data.counts[i]) * inv;
  return t;
}

// ---------------------------------------------------------------------------
// Lattice calculus in the displacement coordinate

namespace detail {

// Value of one color profile at integer lattice point m (zero outside a dirichlet lattice).
inline double lattice_value(const Grid& g, std::span<const double> p, std::array<int, 3> m) {
  for (int a = 0; a < g.dim(); ++a) {
    if (g.periodic()) {
      m[a] = ((m[a] % g.cells(a)) + g.cells(a)) % g.cells(a);
    } else if (m[a] < 0 || m[a] >= g.cells(a)) {
      return 0.0;
    }
  }
  return p[g.index(m[0], m[1], m[2])];
}

// Tensor-product three-point Lagrange interpolation at m + s, |s_a| <= 1/2.
// Its expansion in s is exactly first + second central lattice differences,
// so the lattice Taylor terms below are the expansion of the shifted table.
inline double interpolate_quadratic(const Grid& g, std::span<const double> p, std::array<int, 3> m, const Vec3& s) {
  std::array<std::array<double, 3>, 3> w{};
  for (int a = 0; a < 3; ++a) {
    const double x = g.active(a) ? s[a] : 0.0;
    w[a] = {0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)};  // nodes -1, 0, +1
  }
  const int r0 = g.active(0) ? 1 : 0, r1 = g.active(1) ? 1 : 0, r2 = g.active(2) ? 1 : 0;
  double v = 0.0;
  for (int a = -r0; a <= r0; ++a)
    for (int b = -r1; b <= r1; ++b)
      for (int c = -r2; c <= r2; ++c) {
        const double wt = (r0 ? w[0][a + 1] : 1.0) * (r1 ? w[1][b + 1] : 1.0) * (r2 ? w[2][c + 1] : 1.0);
        if (wt == 0.0) continue;
        v += wt * lattice_value(g, p, {m[0] + a, m[1] + b, m[2] + c});
      }
  return v;
}

// Fractional lattice offset -eps / spacing; rejects shifts beyond half a spacing.
inline Vec3 lattice_offset(const Grid& g, const Vec3& eps) {
  Vec3 s{0.0, 0.0, 0.0};
  for (int a = 0; a < 3; ++a) {
    if (!g.active(a)) {
      if (eps[a] != 0.0) throw std::out_of_range("evidence: shift along an inactive axis leaves the support");
      continue;
    }
    s[a] = -eps[a] / g.spacing(a);
    if (std::abs(s[a]) > 0.5 + 1e-12)
      throw std::out_of_range("evidence: shift exceeds half a lattice spacing");
  }
  return s;
}

inline void require_shapes(const IProbTable& t, std::span<const double> w, const std::vector<Vec3>& shifts) {
  if (w.size() != t.probs.size()) throw std::invalid_argument("evidence: count array does not match table");
  if (shifts.size() != static_cast<std::size_t>(t.times)) throw std::invalid_argument("evidence: need one shift per slice");
}

// Skip rule for the 1/P sums: cells below the floor must carry (essentially) no counts.
inline bool skip_cell(double p, double w, double slice_total) {
  if (p >= probability_floor) return false;
  if (w > probability_floor * std::max(slice_total, 1.0))
    throw std::domain_error("evidence: counts at a cell below the probability floor");
  return true;
}

inline double slice_total(std::span<const double> w, std::size_t base, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[base + i];
  return s;
}

struct LatticeDerivatives {
  Vec3 first{};                               // d/dj, per meter
  std::array<std::array<double, 3>, 3> second{};  // d2/dj_a dj_b
};

inline LatticeDerivatives lattice_derivatives(const Grid& g, std::span<const double> p, std::size_t j) {
  LatticeDerivatives d;
  const auto m = g.multi_index(j);
  const double p0 = p[j];
  for (int a = 0; a < g.dim(); ++a) {
    auto mp = m, mm = m;
    mp[a] += 1;
    mm[a] -= 1;
    const double h = g.spacing(a);
    const double vp = lattice_value(g, p, mp), vm = lattice_value(g, p, mm);
    d.first[a] = (vp - vm) / (2.0 * h);
    d.second[a][a] = (vp - 2.0 * p0 + vm) / (h * h);
    for (int b = a + 1; b < g.dim(); ++b) {
      auto pp = m, pm = m, mp2 = m, mm2 = m;
      pp[a] += 1; pp[b] += 1;
      pm[a] += 1; pm[b] -= 1;
      mp2[a] -= 1; mp2[b] += 1;
      mm2[a] -= 1; mm2[b] -= 1;
      const double v = (lattice_value(g, p, pp) - lattice_value(g, p, pm) - lattice_value(g, p, mp2) +
                        lattice_value(g, p, mm2)) /
                       (4.0 * h * g.spacing(b));
      d.second[a][b] = d.second[b][a] = v;
    }
  }
  return d;
}

}  // namespace detail

/// Ev = sum c log[P(j,k|X+eps) / P(j,k|X)].
inline double evidence(const IProbTable& table, std::span<const double> counts, const std::vector<Vec3>& shifts) {
  detail::require_shapes(table, counts, shifts);
  const Grid& g = table.lattice;
  const std::size_t n = table.cells();
  double ev = 0.0;
  for (int tau = 0; tau < table.times; ++tau) {
    const Vec3 s = detail::lattice_offset(g, shifts[tau]);
    const double total = detail::slice_total(counts, table.offset(tau, 0), 2 * n);
    for (int c = 0; c < 2; ++c) {
      const auto p = table.slice(tau, c);
      const std::size_t base = table.offset(tau, c);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = counts[base + j];
        if (w == 0.0) continue;
        if (detail::skip_cell(p[j], w, total)) continue;
        const double shifted = detail::interpolate_quadratic(g, p, g.multi_index(j), s);
        if (!(shifted > 0.0)) throw std::domain_error("evidence: zero probability with nonzero count after shift");
        ev += w * std::log(shifted / p[j]);
      }
    }
  }
  return ev;
}

inline double evidence(const IProbTable& table, const DetectionDataset& data, const std::vector<Vec3>& shifts) {
  return evidence(table, data.weights(), shifts);
}

/// The table read at X_tau + eps_tau, by the same interpolation as evidence().
/// The result is not renormalized.
inline IProbTable shifted_table(const IProbTable& table, const std::vector<Vec3>& shifts) {
  if (shifts.size() != static_cast<std::size_t>(table.times))
    throw std::invalid_argument("shifted_table: need one shift per slice");
  const Grid& g = table.lattice;
  IProbTable out = table;
  for (int tau = 0; tau < table.times; ++tau) {
    const Vec3 s = detail::lattice_offset(g, shifts[tau]);
    for (int a = 0; a < 3; ++a) out.positions[tau][a] += shifts[tau][a];
    for (int c = 0; c < 2; ++c) {
      const auto p = table.slice(tau, c);
      for (std::size_t j = 0; j < table.cells(); ++j)
        out.at(tau, c, j) = detail::interpolate_quadratic(g, p, g.multi_index(j), s);
    }
  }
  return out;
}

/// sum c log[alternative / reference] for two tables on one lattice.
inline double evidence_between(const IProbTable& reference, const IProbTable& alternative, std::span<const double> counts) {
  if (!(reference.lattice == alternative.lattice) || reference.times != alternative.times)
    throw std::invalid_argument("evidence_between: table shapes differ");
  if (counts.size() != reference.probs.size()) throw std::invalid_argument("evidence_between: count array does not match table");
  const std::size_t per_slice = 2 * reference.cells();
  double ev = 0.0;
  for (int tau = 0; tau < reference.times; ++tau) {
    const std::size_t base = tau * per_slice;
    const double total = detail::slice_total(counts, base, per_slice);
    for (std::size_t i = base; i < base + per_slice; ++i) {
      const double w = counts[i];
      if (w == 0.0) continue;
      if (detail::skip_cell(reference.probs[i], w, total) || detail::skip_cell(alternative.probs[i], w, total)) continue;
      ev += w * std::log(alternative.probs[i] / reference.probs[i]);
    }
  }
  return ev;
}

struct EvidenceTaylorTerms {
  double first_order = 0.0;             // sum c (eps . grad_X P) / P
  double second_order_square = 0.0;     // sum c [(eps . grad_X P) / P]^2
  double second_order_curvature = 0.0;  // sum c (eps . grad_X)^2 P / P
  /// Second-order truncation: first - square / 2 + curvature / 2.
  double truncated() const { return first_order - 0.5 * second_order_square + 0.5 * second_order_curvature; }
};

/// The three sums of the expansion of Ev; grad_X = -grad_j by homogeneity.
inline EvidenceTaylorTerms evidence_taylor_terms(const IProbTable& table, std::span<const double> counts,
                                                 const std::vector<Vec3>& shifts) {
  detail::require_shapes(table, counts, shifts);
  const Grid& g = table.lattice;
  const std::size_t n = table.cells();
  EvidenceTaylorTerms out;
  for (int tau = 0; tau < table.times; ++tau) {
    detail::lattice_offset(g, shifts[tau]);
    const Vec3& e = shifts[tau];
    const double total = detail::slice_total(counts, table.offset(tau, 0), 2 * n);
    for (int c = 0; c < 2; ++c) {
      const auto p = table.slice(tau, c);
      const std::size_t base = table.offset(tau, c);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = counts[base + j];
        if (w == 0.0) continue;
        if (detail::skip_cell(p[j], w, total)) continue;
        const auto d = detail::lattice_derivatives(g, p, j);
        double d1 = 0.0, d2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) {
          d1 -= e[a] * d.first[a];
          for (int b = 0; b < g.dim(); ++b) d2 += e[a] * e[b] * d.second[a][b];
        }
        out.first_order += w * d1 / p[j];
        out.second_order_square += w * (d1 / p[j]) * (d1 / p[j]);
        out.second_order_curvature += w * d2 / p[j];
      }
    }
  }
  return out;
}

inline EvidenceTaylorTerms evidence_taylor_terms(const IProbTable& table, const DetectionDataset& data,
                                                 const std::vector<Vec3>& shifts) {
  return evidence_taylor_terms(table, data.weights(), shifts);
}

/// The Fisher information sum of |grad P|^2 / P over (j, k, tau); cells below
/// the floor are excluded.
inline double discrete_fisher(const IProbTable& table) {
  const Grid& g = table.lattice;
  double sum = 0.0;
  bool any = false;
  // per-slice subtotals keep the sum exactly additive over slices
  for (int tau = 0; tau < table.times; ++tau) {
    double slice_sum = 0.0;
    for (int c = 0; c < 2; ++c) {
      const auto p = table.slice(tau, c);
      for (std::size_t j = 0; j < table.cells(); ++j) {
        if (p[j] < probability_floor) continue;
        any = true;
        const auto d = detail::lattice_derivatives(g, p, j);
        double g2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) g2 += d.first[a] * d.first[a];
        slice_sum += g2 / p[j];
      }
    }
    sum += slice_sum;
  }
  if (!any) throw std::domain_error("discrete_fisher: empty support");
  return sum;
}

struct CauchySchwarzBound {
  double ev_second_order = 0.0;  // N sum (eps . grad P)^2 / P at c = N P
  double bound = 0.0;            // N max|eps|^2 * discrete_fisher
};

inline CauchySchwarzBound cauchy_schwarz_bound(const IProbTable& table, const std::vector<Vec3>& shifts, double N = 1.0) {
  if (shifts.size() != static_cast<std::size_t>(table.times))
    throw std::invalid_argument("cauchy_schwarz_bound: need one shift per slice");
  const Grid& g = table.lattice;
  CauchySchwarzBound out;
  double eps_max2 = 0.0;
  for (const auto& e : shifts) eps_max2 = std::max(eps_max2, e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
  for (int tau = 0; tau < table.times; ++tau)
    for (int c = 0; c < 2; ++c) {
      const auto p = table.slice(tau, c);
      for (std::size_t j = 0; j < table.cells(); ++j) {
        if (p[j] < probability_floor) continue;
        const auto d = detail::lattice_derivatives(g, p, j);
        double de = 0.0;
        for (int a = 0; a < g.dim(); ++a) de += shifts[tau][a] * d.first[a];
        out.ev_second_order += N * de * de / p[j];
      }
    }
  out.bound = N * eps_max2 * discrete_fisher(table);
  return out;
}

}  // namespace plab
