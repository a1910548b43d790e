#pragma once

// Thin RAII wrapper over FFTW real transforms. Plans are created once per
// size under a lock (FFTW planning is not thread-safe) with FFTW_ESTIMATE, so
// the chosen algorithm and therefore the output bits are reproducible.
// Execution uses the new-array interface and is safe to call concurrently.

#include <complex>
#include <vector>

namespace timbre::dsp::detail {

class RealFft {
 public:
  explicit RealFft(int n);
  int size() const { return n_; }
  // in: n reals -> out: n/2+1 bins
  void forward(const double* in, std::complex<double>* out) const;
  // in: n/2+1 bins -> out: n reals (unnormalized, scaled by n)
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  int n_;
  void* forward_plan_;
  void* inverse_plan_;
};

// Shared instance for size n.
const RealFft& real_fft(int n);

std::vector<double> hann_window(int n);

}  // namespace timbre::dsp::detail
