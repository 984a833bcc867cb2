#include "dialect_lab/fft.h"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "dialect_lab/errors.h"

namespace dialect_lab {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw InvalidArgument("RealFft: size must be >= 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  real_ = fftw_alloc_real(n_);
  auto* spec = fftw_alloc_complex(bins());
  spec_ = spec;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, spec,
                                       FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec, real_,
                                       FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) {
  if (in.size() > n_ || out.size() < bins())
    throw ShapeError("RealFft::forward: buffer size mismatch");
  std::copy(in.begin(), in.end(), real_);
  std::fill(real_ + in.size(), real_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {spec[k][0], spec[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) {
  if (in.size() < bins() || out.size() < n_)
    throw ShapeError("RealFft::inverse: buffer size mismatch");
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  // c2r destroys its input; spec_ is scratch so that is fine.
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::copy(real_, real_ + n_, out.begin());
}

}  // namespace dialect_lab
