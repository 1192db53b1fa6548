#include "fft.hpp"

#include "lagcoder/error.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

namespace lagcoder::detail {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct FftwBuffer {
  T* ptr;
  explicit FftwBuffer(std::size_t n) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * (n ? n : 1)))) {
    require(ptr != nullptr, ErrorCode::IoFailure, "fftw_malloc failed");
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace

std::size_t fast_fft_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

RealFft::RealFft(std::size_t n) : n_(n) {
  require(n >= 1, ErrorCode::InvalidArgument, "FFT length must be >= 1");
  FftwBuffer<double> in(n);
  FftwBuffer<fftw_complex> out(n / 2 + 1);
  std::lock_guard lock(planner_mutex());
  fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.ptr, out.ptr, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), out.ptr, in.ptr, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

std::vector<Complex> RealFft::forward(std::span<const double> x) const {
  require(x.size() == n_, ErrorCode::ShapeMismatch, "FFT input length mismatch");
  FftwBuffer<double> in(n_);
  FftwBuffer<fftw_complex> out(n_ / 2 + 1);
  std::memcpy(in.ptr, x.data(), n_ * sizeof(double));
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), in.ptr, out.ptr);
  std::vector<Complex> result(n_ / 2 + 1);
  std::memcpy(static_cast<void*>(result.data()), out.ptr, result.size() * sizeof(fftw_complex));
  return result;
}

std::vector<double> RealFft::inverse(std::span<const Complex> spectrum) const {
  require(spectrum.size() == n_ / 2 + 1, ErrorCode::ShapeMismatch, "inverse FFT length mismatch");
  FftwBuffer<fftw_complex> in(n_ / 2 + 1);
  FftwBuffer<double> out(n_);
  std::memcpy(static_cast<void*>(in.ptr), spectrum.data(), spectrum.size() * sizeof(fftw_complex));
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), in.ptr, out.ptr);
  std::vector<double> result(n_);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) result[i] = out.ptr[i] * scale;
  return result;
}

ComplexFft::ComplexFft(std::size_t n) : n_(n) {
  require(n >= 1, ErrorCode::InvalidArgument, "FFT length must be >= 1");
  FftwBuffer<fftw_complex> a(n), b(n);
  std::lock_guard lock(planner_mutex());
  fwd_ = fftw_plan_dft_1d(static_cast<int>(n), a.ptr, b.ptr, FFTW_FORWARD, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_1d(static_cast<int>(n), a.ptr, b.ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
}

ComplexFft::~ComplexFft() {
  std::lock_guard lock(planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

std::vector<Complex> ComplexFft::forward(std::span<const Complex> x) const {
  require(x.size() == n_, ErrorCode::ShapeMismatch, "FFT input length mismatch");
  FftwBuffer<fftw_complex> in(n_), out(n_);
  std::memcpy(static_cast<void*>(in.ptr), x.data(), n_ * sizeof(fftw_complex));
  fftw_execute_dft(static_cast<fftw_plan>(fwd_), in.ptr, out.ptr);
  std::vector<Complex> result(n_);
  std::memcpy(static_cast<void*>(result.data()), out.ptr, n_ * sizeof(fftw_complex));
  return result;
}

std::vector<Complex> ComplexFft::inverse(std::span<const Complex> x) const {
  require(x.size() == n_, ErrorCode::ShapeMismatch, "FFT input length mismatch");
  FftwBuffer<fftw_complex> in(n_), out(n_);
  std::memcpy(static_cast<void*>(in.ptr), x.data(), n_ * sizeof(fftw_complex));
  fftw_execute_dft(static_cast<fftw_plan>(inv_), in.ptr, out.ptr);
  std::vector<Complex> result(n_);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) result[i] = Complex(out.ptr[i][0] * scale, out.ptr[i][1] * scale);
  return result;
}

}  // namespace lagcoder::detail
