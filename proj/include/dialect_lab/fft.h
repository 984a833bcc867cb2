#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace dialect_lab {

/// Real-input FFT of a fixed size, backed by an FFTW plan.
///
/// Each instance owns its plans and aligned scratch buffers, so separate
/// instances may run concurrently. Plan creation itself is serialized.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// X(k) = sum_n x(n) exp(-j 2 pi k n / N), k = 0..N/2.
  /// `in` may be shorter than N; it is zero-padded.
  void forward(std::span<const double> in,
               std::span<std::complex<double>> out);

  /// Unnormalized inverse: returns N * x(n) for a spectrum of x.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* spec_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

}  // namespace dialect_lab
