#include "timbre/dsp.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace timbre::dsp {

namespace {

constexpr double kZeroCrossings = 16.0;
constexpr int kTableDensity = 2048;  // samples per zero crossing

// Hann-windowed sinc as a function of the distance u in zero crossings.
const std::vector<double>& kernel_table() {
  static const std::vector<double> table = [] {
    const int n = static_cast<int>(kZeroCrossings) * kTableDensity + 2;
    std::vector<double> t(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double u = double(i) / kTableDensity;
      if (u >= kZeroCrossings) break;
      const double arg = std::numbers::pi * u;
      const double sinc = i == 0 ? 1.0 : std::sin(arg) / arg;
      t[i] = sinc * (0.5 + 0.5 * std::cos(std::numbers::pi * u / kZeroCrossings));
    }
    return t;
  }();
  return table;
}

}  // namespace

AudioClip resample(const AudioClip& clip, double factor) {
  if (!(factor > 0) || !std::isfinite(factor)) {
    throw std::invalid_argument("resample: factor must be > 0");
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (clip.samples.empty()) return out;
  if (factor == 1.0) {
    out.samples = clip.samples;
    return out;
  }
  const Index n_in = static_cast<Index>(clip.samples.size());
  const Index n_out = static_cast<Index>(std::floor(double(n_in - 1) / factor)) + 1;
  const double cutoff = std::min(1.0, 1.0 / factor);
  const double half_width = kZeroCrossings / cutoff;
  out.samples.assign(n_out, 0.0f);
  const float* x = clip.samples.data();
  const double* table = kernel_table().data();
#pragma omp parallel for schedule(static)
  for (Index m = 0; m < n_out; ++m) {
    const double center = double(m) * factor;
    const Index lo = std::max<Index>(0, static_cast<Index>(std::ceil(center - half_width)));
    const Index hi = std::min<Index>(n_in - 1, static_cast<Index>(std::floor(center + half_width)));
    double acc = 0;
    for (Index i = lo; i <= hi; ++i) {
      const double pos = std::abs(center - double(i)) * cutoff * kTableDensity;
      const Index k = static_cast<Index>(pos);
      const double frac = pos - double(k);
      acc += x[i] * (table[k] + frac * (table[k + 1] - table[k]));
    }
    out.samples[m] = static_cast<float>(acc * cutoff);
  }
  return out;
}

}  // namespace timbre::dsp
