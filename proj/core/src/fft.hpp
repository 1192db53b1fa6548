#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace lagcoder::detail {

using Complex = std::complex<double>;

/// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}.
std::size_t fast_fft_size(std::size_t n);

/// Real-input transform of fixed length. Plans are created with FFTW_ESTIMATE
/// (deterministic); execution is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  /// n/2 + 1 non-redundant bins.
  std::vector<Complex> forward(std::span<const double> x) const;
  /// Inverse of forward(), including the 1/n normalisation.
  std::vector<double> inverse(std::span<const Complex> spectrum) const;

 private:
  std::size_t n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

class ComplexFft {
 public:
  explicit ComplexFft(std::size_t n);
  ~ComplexFft();
  ComplexFft(const ComplexFft&) = delete;
  ComplexFft& operator=(const ComplexFft&) = delete;

  std::size_t size() const { return n_; }
  std::vector<Complex> forward(std::span<const Complex> x) const;
  /// Includes the 1/n normalisation.
  std::vector<Complex> inverse(std::span<const Complex> x) const;

 private:
  std::size_t n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

/// Replaces the phase of every bin except DC and (for even n) Nyquist with an
/// independent uniform draw, keeping magnitudes. `spectrum` holds the n/2 + 1
/// bins of a real signal of length n.
template <class Rng>
void randomize_phases(std::vector<Complex>& spectrum, std::size_t n, Rng& rng) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  const std::size_t last = (n % 2 == 0) ? n / 2 : n / 2 + 1;  // exclusive
  for (std::size_t k = 1; k < last; ++k) {
    const double phase = two_pi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    spectrum[k] = std::polar(std::abs(spectrum[k]), phase);
  }
}

}  // namespace lagcoder::detail
