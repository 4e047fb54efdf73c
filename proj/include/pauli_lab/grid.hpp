#pragma once

// Uniform Cartesian grids in 1-3 dimensions, the field containers that live on
// them, finite-difference / Fourier derivative operators and quadrature.
//
// Storage is row-major with axis 0 slowest. Axes beyond dim() are inactive:
// they carry one cell and every derivative along them is zero.

#include "pauli_lab/fft.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace plab {

using Vec3 = std::array<double, 3>;
using Complex = std::complex<double>;

inline constexpr double pi = 3.141592653589793238462643383279502884;

enum class Boundary { periodic, dirichlet_zero };
enum class DerivativeMode { central, spectral };

inline std::string to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "dirichlet_zero";
}
inline Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "dirichlet_zero" || s == "dirichlet") return Boundary::dirichlet_zero;
  throw std::invalid_argument("unknown boundary '" + s + "'");
}
inline std::string to_string(DerivativeMode m) {
  return m == DerivativeMode::central ? "central" : "spectral";
}
inline DerivativeMode derivative_mode_from_string(const std::string& s) {
  if (s == "central") return DerivativeMode::central;
  if (s == "spectral") return DerivativeMode::spectral;
  throw std::invalid_argument("unknown derivative mode '" + s + "'");
}

class Grid {
 public:
  Grid() = default;

  Grid(int dim, Vec3 extent, std::array<int, 3> cells, Boundary boundary)
      : dim_(dim), extent_(extent), cells_(cells), boundary_(boundary) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("Grid: dim must be 1, 2 or 3");
    for (int a = 0; a < 3; ++a) {
      if (a >= dim) {
        cells_[a] = 1;
        extent_[a] = 1.0;
        continue;
      }
      if (!(extent_[a] > 0.0) || !std::isfinite(extent_[a]))
        throw std::invalid_argument("Grid: extents must be positive and finite");
      if (cells_[a] <= 0) throw std::invalid_argument("Grid: cell counts must be positive");
      if (boundary == Boundary::dirichlet_zero && cells_[a] < 2)
        throw std::invalid_argument("Grid: dirichlet axes need at least two nodes");
    }
  }

  static Grid line(double length, int cells, Boundary b) {
    return Grid(1, {length, 1.0, 1.0}, {cells, 1, 1}, b);
  }
  static Grid square(double length, int cells, Boundary b) {
    return Grid(2, {length, length, 1.0}, {cells, cells, 1}, b);
  }
  static Grid cube(double length, int cells, Boundary b) {
    return Grid(3, {length, length, length}, {cells, cells, cells}, b);
  }

  int dim() const { return dim_; }
  Boundary boundary() const { return boundary_; }
  bool periodic() const { return boundary_ == Boundary::periodic; }
  bool active(int axis) const { return axis < dim_; }
  double extent(int axis) const { return extent_[axis]; }
  int cells(int axis) const { return cells_[axis]; }
  const Vec3& extents() const { return extent_; }
  const std::array<int, 3>& cell_counts() const { return cells_; }

  double spacing(int axis) const {
    if (!active(axis)) return 1.0;
    return periodic() ? extent_[axis] / cells_[axis] : extent_[axis] / (cells_[axis] - 1);
  }

  std::size_t size() const {
    return static_cast<std::size_t>(cells_[0]) * static_cast<std::size_t>(cells_[1]) *
           static_cast<std::size_t>(cells_[2]);
  }

  std::size_t stride(int axis) const {
    if (axis == 2) return 1;
    if (axis == 1) return static_cast<std::size_t>(cells_[2]);
    return static_cast<std::size_t>(cells_[1]) * static_cast<std::size_t>(cells_[2]);
  }

  std::size_t index(int i, int j = 0, int k = 0) const {
    return (static_cast<std::size_t>(i) * cells_[1] + static_cast<std::size_t>(j)) * cells_[2] +
           static_cast<std::size_t>(k);
  }

  std::array<int, 3> multi_index(std::size_t idx) const {
    const int k = static_cast<int>(idx % cells_[2]);
    idx /= cells_[2];
    const int j = static_cast<int>(idx % cells_[1]);
    const int i = static_cast<int>(idx / cells_[1]);
    return {i, j, k};
  }

  double coordinate(int axis, int i) const { return active(axis) ? i * spacing(axis) : 0.0; }

  Vec3 position(std::size_t idx) const {
    const auto m = multi_index(idx);
    return {coordinate(0, m[0]), coordinate(1, m[1]), coordinate(2, m[2])};
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= spacing(a);
    return v;
  }

  double volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= extent_[a];
    return v;
  }

  /// True on the outer node layer of a dirichlet grid, where fields are pinned to zero.
  bool is_boundary_node(std::size_t idx) const {
    if (periodic()) return false;
    const auto m = multi_index(idx);
    for (int a = 0; a < dim_; ++a)
      if (m[a] == 0 || m[a] == cells_[a] - 1) return true;
    return false;
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && extent_ == o.extent_ && cells_ == o.cells_ && boundary_ == o.boundary_;
  }

 private:
  int dim_ = 1;
  Vec3 extent_{1.0, 1.0, 1.0};
  std::array<int, 3> cells_{1, 1, 1};
  Boundary boundary_ = Boundary::periodic;
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

// ---------------------------------------------------------------------------
// Field containers

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  ScalarField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("ScalarField: value count does not match grid");
  }

  template <class F>
  static ScalarField sample(const Grid& g, F&& f) {
    ScalarField out(g);
    for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = f(g.position(i));
    return out;
  }

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
};

struct VectorField3 {
  Grid grid;
  std::array<std::vector<double>, 3> components;

  VectorField3() = default;
  explicit VectorField3(const Grid& g, Vec3 fill = {0.0, 0.0, 0.0}) : grid(g) {
    for (int a = 0; a < 3; ++a) components[a].assign(g.size(), fill[a]);
  }

  template <class F>
  static VectorField3 sample(const Grid& g, F&& f) {
    VectorField3 out(g);
    for (std::size_t i = 0; i < g.size(); ++i) out.set(i, f(g.position(i)));
    return out;
  }

  std::size_t size() const { return components[0].size(); }
  Vec3 at(std::size_t i) const { return {components[0][i], components[1][i], components[2][i]}; }
  void set(std::size_t i, const Vec3& v) {
    for (int a = 0; a < 3; ++a) components[a][i] = v[a];
  }
};

struct SpinorField {
  Grid grid;
  std::vector<Complex> up;
  std::vector<Complex> down;

  SpinorField() = default;
  explicit SpinorField(const Grid& g) : grid(g), up(g.size()), down(g.size()) {}
  SpinorField(const Grid& g, std::vector<Complex> u, std::vector<Complex> d)
      : grid(g), up(std::move(u)), down(std::move(d)) {
    if (up.size() != grid.size() || down.size() != grid.size())
      throw std::invalid_argument("SpinorField: value count does not match grid");
  }
  std::size_t size() const { return up.size(); }
};

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "ScalarField +");
  ScalarField out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] + b.values[i];
  return out;
}
inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "ScalarField -");
  ScalarField out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] - b.values[i];
  return out;
}
inline ScalarField operator*(double s, const ScalarField& a) {
  ScalarField out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = s * a.values[i];
  return out;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------
// One-dimensional kernels applied line by line

namespace detail {

template <class F>
void for_each_line(const Grid& g, int axis, F&& f) {
  const int n0 = g.cells(0), n1 = g.cells(1), n2 = g.cells(2);
  if (axis == 0) {
    for (int j = 0; j < n1; ++j)
      for (int k = 0; k < n2; ++k) f(g.index(0, j, k));
  } else if (axis == 1) {
    for (int i = 0; i < n0; ++i)
      for (int k = 0; k < n2; ++k) f(g.index(i, 0, k));
  } else {
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j) f(g.index(i, j, 0));
  }
}

inline void require_stencil_cells(const Grid& g, int axis) {
  if (g.cells(axis) < 3) throw std::invalid_argument("derivative: grid too small (need at least 3 cells per axis)");
}

template <class T>
void central_first(const T* in, T* out, int n, std::size_t s, double h, bool periodic) {
  const double c = 0.5 / h;
  for (int i = 1; i + 1 < n; ++i) out[i * s] = c * (in[(i + 1) * s] - in[(i - 1) * s]);
  if (periodic) {
    out[0] = c * (in[s] - in[(n - 1) * s]);
    out[(n - 1) * s] = c * (in[0] - in[(n - 2) * s]);
  } else {
    out[0] = c * (-3.0 * in[0] + 4.0 * in[s] - in[2 * s]);
    out[(n - 1) * s] = c * (3.0 * in[(n - 1) * s] - 4.0 * in[(n - 2) * s] + in[(n - 3) * s]);
  }
}

// y = D^T x for the central_first operator.
template <class T>
void central_first_transpose(const T* in, T* out, int n, std::size_t s, double h, bool periodic) {
  const double c = 0.5 / h;
  for (int i = 0; i < n; ++i) out[i * s] = T{};
  if (periodic) {
    for (int i = 0; i < n; ++i) {
      const int ip = (i + 1) % n, im = (i + n - 1) % n;
      out[ip * s] += c * in[i * s];
      out[im * s] -= c * in[i * s];
    }
    return;
  }
  out[0] += -3.0 * c * in[0];
  out[s] += 4.0 * c * in[0];
  out[2 * s] += -1.0 * c * in[0];
  for (int i = 1; i + 1 < n; ++i) {
    out[(i + 1) * s] += c * in[i * s];
    out[(i - 1) * s] -= c * in[i * s];
  }
  const T last = in[(n - 1) * s];
  out[(n - 1) * s] += 3.0 * c * last;
  out[(n - 2) * s] += -4.0 * c * last;
  out[(n - 3) * s] += 1.0 * c * last;
}

template <class T>
void central_second(const T* in, T* out, int n, std::size_t s, double h, bool periodic) {
  const double c = 1.0 / (h * h);
  for (int i = 1; i + 1 < n; ++i) out[i * s] = c * (in[(i + 1) * s] - 2.0 * in[i * s] + in[(i - 1) * s]);
  if (periodic) {
    out[0] = c * (in[s] - 2.0 * in[0] + in[(n - 1) * s]);
    out[(n - 1) * s] = c * (in[0] - 2.0 * in[(n - 1) * s] + in[(n - 2) * s]);
  } else if (n >= 4) {
    out[0] = c * (2.0 * in[0] - 5.0 * in[s] + 4.0 * in[2 * s] - in[3 * s]);
    const std::size_t e = static_cast<std::size_t>(n - 1);
    out[e * s] = c * (2.0 * in[e * s] - 5.0 * in[(e - 1) * s] + 4.0 * in[(e - 2) * s] - in[(e - 3) * s]);
  } else {
    out[0] = out[s];
    out[2 * s] = out[s];
  }
}

// order 1: multiply by i k (Nyquist bin zeroed); order 2: multiply by -k^2.
template <class T>
void spectral_line(const T* in, T* out, int n, std::size_t s, double length, int order) {
  FftPlan& plan = line_plan(n);
  Complex* buf = plan.data();
  for (int i = 0; i < n; ++i) buf[i] = Complex(in[i * s]);
  plan.forward();
  for (int m = 0; m < n; ++m) {
    const double k = wavenumber(m, n, length);
    if (order == 1) {
      buf[m] *= (2 * m == n) ? Complex(0.0) : Complex(0.0, k);
    } else {
      buf[m] *= -k * k;
    }
  }
  plan.backward();
  const double inv = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<T, double>) {
      out[i * s] = buf[i].real() * inv;
    } else {
      out[i * s] = buf[i] * inv;
    }
  }
}

}  // namespace detail

/// First partial derivative along one axis.
template <class T>
std::vector<T> partial(const Grid& g, std::span<const T> f, int axis,
                       DerivativeMode mode = DerivativeMode::central) {
  if (f.size() != g.size()) throw std::invalid_argument("partial: value count does not match grid");
  std::vector<T> out(g.size(), T{});
  if (!g.active(axis)) return out;
  detail::require_stencil_cells(g, axis);
  const int n = g.cells(axis);
  const std::size_t s = g.stride(axis);
  if (mode == DerivativeMode::spectral) {
    if (!g.periodic()) throw std::invalid_argument("partial: spectral derivatives need a periodic grid");
    detail::for_each_line(g, axis, [&](std::size_t b) {
      detail::spectral_line(f.data() + b, out.data() + b, n, s, g.extent(axis), 1);
    });
  } else {
    detail::for_each_line(g, axis, [&](std::size_t b) {
      detail::central_first(f.data() + b, out.data() + b, n, s, g.spacing(axis), g.periodic());
    });
  }
  return out;
}

/// Transpose of the linear operator applied by partial(); used for exact
/// gradients of discretized functionals.
template <class T>
std::vector<T> partial_transpose(const Grid& g, std::span<const T> f, int axis,
                                 DerivativeMode mode = DerivativeMode::central) {
  if (f.size() != g.size()) throw std::invalid_argument("partial_transpose: value count does not match grid");
  std::vector<T> out(g.size(), T{});
  if (!g.active(axis)) return out;
  detail::require_stencil_cells(g, axis);
  if (mode == DerivativeMode::spectral) {
    // The Fourier derivative with the Nyquist bin removed is antisymmetric.
    out = partial(g, f, axis, mode);
    for (auto& v : out) v = -v;
    return out;
  }
  const int n = g.cells(axis);
  const std::size_t s = g.stride(axis);
  detail::for_each_line(g, axis, [&](std::size_t b) {
    detail::central_first_transpose(f.data() + b, out.data() + b, n, s, g.spacing(axis), g.periodic());
  });
  return out;
}

template <class T>
std::vector<T> second_partial(const Grid& g, std::span<const T> f, int axis,
                              DerivativeMode mode = DerivativeMode::central) {
  if (f.size() != g.size()) throw std::invalid_argument("second_partial: value count does not match grid");
  std::vector<T> out(g.size(), T{});
  if (!g.active(axis)) return out;
  detail::require_stencil_cells(g, axis);
  const int n = g.cells(axis);
  const std::size_t s = g.stride(axis);
  if (mode == DerivativeMode::spectral) {
    if (!g.periodic()) throw std::invalid_argument("second_partial: spectral derivatives need a periodic grid");
    detail::for_each_line(g, axis, [&](std::size_t b) {
      detail::spectral_line(f.data() + b, out.data() + b, n, s, g.extent(axis), 2);
    });
  } else {
    detail::for_each_line(g, axis, [&](std::size_t b) {
      detail::central_second(f.data() + b, out.data() + b, n, s, g.spacing(axis), g.periodic());
    });
  }
  return out;
}

template <class T>
std::vector<T> laplacian_values(const Grid& g, std::span<const T> f,
                                DerivativeMode mode = DerivativeMode::central) {
  std::vector<T> out(g.size(), T{});
  for (int a = 0; a < g.dim(); ++a) {
    const auto d2 = second_partial(g, f, a, mode);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d2[i];
  }
  return out;
}

inline VectorField3 gradient(const ScalarField& f, DerivativeMode mode = DerivativeMode::central) {
  VectorField3 out(f.grid);
  for (int a = 0; a < 3; ++a) out.components[a] = partial<double>(f.grid, f.values, a, mode);
  return out;
}

inline ScalarField divergence(const VectorField3& v, DerivativeMode mode = DerivativeMode::central) {
  ScalarField out(v.grid);
  for (int a = 0; a < v.grid.dim(); ++a) {
    const auto d = partial<double>(v.grid, v.components[a], a, mode);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += d[i];
  }
  return out;
}

inline VectorField3 curl(const VectorField3& v, DerivativeMode mode = DerivativeMode::central) {
  if (v.grid.dim() != 3) throw std::invalid_argument("curl: dimension mismatch (needs a 3D grid)");
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

inline ScalarField laplacian(const ScalarField& f, DerivativeMode mode = DerivativeMode::central) {
  return ScalarField(f.grid, laplacian_values<double>(f.grid, f.values, mode));
}

// ---------------------------------------------------------------------------
// Quadrature

/// Cell-sum weights (periodic) or tensor trapezoid weights (dirichlet).
inline std::vector<double> quadrature_weights(const Grid& g) {
  std::vector<double> w(g.size(), g.cell_volume());
  if (g.periodic()) return w;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto m = g.multi_index(i);
    for (int a = 0; a < g.dim(); ++a)
      if (m[a] == 0 || m[a] == g.cells(a) - 1) w[i] *= 0.5;
  }
  return w;
}

inline double integrate(const Grid& g, std::span<const double> f) {
  if (f.size() != g.size()) throw std::invalid_argument("integrate: value count does not match grid");
  const auto w = quadrature_weights(g);
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * f[i];
  return sum;
}

inline double integrate(const ScalarField& f) { return integrate(f.grid, f.values); }

/// Rescales a nonnegative field to unit integral.
inline ScalarField normalize(const ScalarField& f) {
  for (double v : f.values) {
    if (v < 0.0) throw std::domain_error("normalize: negative entries");
    if (!std::isfinite(v)) throw std::domain_error("normalize: non-finite entries");
  }
  const double mass = integrate(f);
  if (!(mass > 0.0)) throw std::domain_error("normalize: nonpositive mass");
  ScalarField out(f.grid);
  for (std::size_t i = 0; i < f.size(); ++i) out.values[i] = f.values[i] / mass;
  return out;
}

// ---------------------------------------------------------------------------
// Time axis: snapshots at uniform spacing dt

struct StencilTap {
  std::size_t index;
  double coeff;
};

/// Taps of d/dt at snapshot t of m: central in the interior, second-order
/// one-sided at the ends; first order with two snapshots, none with one.
inline std::vector<StencilTap> time_stencil(std::size_t m, std::size_t t, double dt) {
  if (m <= 1) return {};
  if (m == 2) return {{0, -1.0 / dt}, {1, 1.0 / dt}};
  const double c = 0.5 / dt;
  if (t == 0) return {{0, -3.0 * c}, {1, 4.0 * c}, {2, -1.0 * c}};
  if (t == m - 1) return {{m - 1, 3.0 * c}, {m - 2, -4.0 * c}, {m - 3, 1.0 * c}};
  return {{t - 1, -c}, {t + 1, c}};
}

/// Trapezoid weights over snapshots; a single snapshot is a rate (weight 1).
inline std::vector<double> time_weights(std::size_t m, double dt) {
  if (m == 0) return {};
  if (m == 1) return {1.0};
  std::vector<double> w(m, dt);
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

/// d/dt of a per-snapshot value array at snapshot t.
template <class T, class Get>
std::vector<T> time_derivative(std::size_t m, std::size_t t, double dt, std::size_t cells, Get&& frame) {
  std::vector<T> out(cells, T{});
  for (const auto& tap : time_stencil(m, t, dt)) {
    const auto& f = frame(tap.index);
    for (std::size_t i = 0; i < cells; ++i) out[i] += tap.coeff * f[i];
  }
  return out;
}

}  // namespace plab
