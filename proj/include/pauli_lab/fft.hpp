#pragma once

// Thin RAII layer over FFTW. Plans are created with FFTW_ESTIMATE on buffers
// owned by the wrapper, so a plan never survives the memory it was made for.

#include <fftw3.h>

#include <array>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>

namespace plab {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// In-place complex transform of rank 1..3 over a fixed, row-major shape.
/// backward() is unnormalized, as in FFTW; callers divide by size().
class FftPlan {
 public:
  explicit FftPlan(std::span<const int> shape) {
    if (shape.empty() || shape.size() > 3) throw std::invalid_argument("FftPlan: rank must be 1..3");
    rank_ = static_cast<int>(shape.size());
    size_ = 1;
    for (int i = 0; i < rank_; ++i) {
      if (shape[i] <= 0) throw std::invalid_argument("FftPlan: extents must be positive");
      dims_[i] = shape[i];
      size_ *= static_cast<std::size_t>(shape[i]);
    }
    buffer_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_));
    if (!buffer_) throw std::bad_alloc();
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft(rank_, dims_.data(), buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(rank_, dims_.data(), buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
  }

  std::size_t size() const { return size_; }
  std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buffer_); }
  std::span<std::complex<double>> buffer() { return {data(), size_}; }

  void forward() { fftw_execute(forward_); }
  void backward() { fftw_execute(backward_); }

 private:
  int rank_ = 0;
  std::array<int, 3> dims_{1, 1, 1};
  std::size_t size_ = 0;
  fftw_complex* buffer_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

/// Shared 1D plan for line-by-line transforms of length n.
inline FftPlan& line_plan(int n) {
  thread_local std::map<int, std::unique_ptr<FftPlan>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    const std::array<int, 1> shape{n};
    it = cache.emplace(n, std::make_unique<FftPlan>(shape)).first;
  }
  return *it->second;
}

/// Signed angular wavenumber of FFT bin m on a period of length L.
inline double wavenumber(int m, int n, double length) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  const int signed_m = (2 * m < n) ? m : m - n;
  return two_pi * signed_m / length;
}

}  // namespace plab
