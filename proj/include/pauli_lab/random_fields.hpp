#pragma once

// Seeded smooth band-limited test fields. Periodic grids get a truncated
// Fourier series; dirichlet grids get a sine series that vanishes on the
// boundary layer. Both are resolved exactly by the grid for small max_mode.

#include "pauli_lab/grid.hpp"

#include <random>

namespace plab {

struct RandomFieldSpec {
  int max_mode = 2;        // largest integer wavenumber per active axis
  double amplitude = 1.0;  // max |value| after rescaling
  double decay = 1.0;      // mode weight ~ 1 / (1 + |n|^2)^decay
};

inline ScalarField random_smooth_field(const Grid& g, std::mt19937_64& rng, const RandomFieldSpec& spec = {}) {
  if (spec.max_mode < 1) throw std::invalid_argument("random_smooth_field: max_mode must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const int nmax = spec.max_mode;
  const bool periodic = g.periodic();
  const int lo = periodic ? -nmax : 1;
  std::array<int, 3> lo_a{0, 0, 0}, hi_a{0, 0, 0};
  for (int a = 0; a < g.dim(); ++a) {
    lo_a[a] = lo;
    hi_a[a] = nmax;
  }

  struct Mode {
    std::array<int, 3> n;
    double c, s;
  };
  std::vector<Mode> modes;
  for (int i = lo_a[0]; i <= hi_a[0]; ++i)
    for (int j = lo_a[1]; j <= hi_a[1]; ++j)
      for (int k = lo_a[2]; k <= hi_a[2]; ++k) {
        if (periodic && i == 0 && j == 0 && k == 0) continue;
        const double n2 = double(i * i + j * j + k * k);
        const double w = std::pow(1.0 + n2, -spec.decay);
        const double c = w * normal(rng);
        const double s = periodic ? w * normal(rng) : 0.0;
        modes.push_back({{i, j, k}, c, s});
      }
  const double offset = periodic ? 0.5 * normal(rng) : 0.0;

  // per-axis mode tables turn each mode into a product of lookups
  std::array<std::vector<std::vector<Complex>>, 3> table;
  for (int a = 0; a < 3; ++a) {
    table[a].resize(2 * nmax + 1);
    for (int n = -nmax; n <= nmax; ++n) {
      auto& row = table[a][n + nmax];
      row.resize(g.cells(a));
      for (int i = 0; i < g.cells(a); ++i) {
        const double x = g.coordinate(a, i);
        if (!g.active(a)) {
          row[i] = 1.0;
        } else if (periodic) {
          row[i] = std::polar(1.0, 2.0 * pi * n * x / g.extent(a));
        } else {
          row[i] = std::sin(pi * n * x / g.extent(a));
        }
      }
    }
  }

  ScalarField out(g, offset);
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const auto c = g.multi_index(idx);
    double v = offset;
    for (const auto& m : modes) {
      const Complex e = table[0][m.n[0] + nmax][c[0]] * table[1][m.n[1] + nmax][c[1]] * table[2][m.n[2] + nmax][c[2]];
      v += periodic ? m.c * e.real() + m.s * e.imag() : m.c * e.real();
    }
    out.values[idx] = v;
  }
  const double peak = max_abs(out.values);
  if (peak > 0.0)
    for (auto& v : out.values) v *= spec.amplitude / peak;
  return out;
}

inline VectorField3 random_smooth_vector_field(const Grid& g, std::mt19937_64& rng, const RandomFieldSpec& spec = {}) {
  VectorField3 out(g);
  for (int a = 0; a < 3; ++a) out.components[a] = random_smooth_field(g, rng, spec).values;
  return out;
}

/// Strictly positive normalized density exp(g) for a random smooth g.
inline ScalarField random_density(const Grid& g, std::mt19937_64& rng, const RandomFieldSpec& spec = {}) {
  ScalarField f = random_smooth_field(g, rng, spec);
  for (auto& v : f.values) v = std::exp(v);
  return normalize(f);
}

}  // namespace plab
