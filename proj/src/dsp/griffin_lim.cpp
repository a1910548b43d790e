#include "timbre/dsp.hpp"

#include "fft.hpp"
#include "timbre/util/random.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace timbre::dsp {

AudioClip griffin_lim(const MelSpectrogram& mel, const FeatureConfig& config, int iterations,
                      uint64_t seed) {
  config.validate();
  if (mel.n_bands() != config.n_bands || mel.n_frames() < 1) {
    throw std::invalid_argument("griffin_lim: mel does not match feature config");
  }
  const int n_fft = config.n_fft();
  const int n_bins = n_fft / 2 + 1;
  const int win = config.window_samples();
  const int hop = config.hop_samples();
  const Index frames = mel.n_frames();
  const auto window = detail::hann_window(win);
  const auto& fft = detail::real_fft(n_fft);

  // Mel power -> linear magnitude through the normalized filterbank transpose.
  const Mat<double> fb =
      mel_filterbank(config.n_bands, config.f_lo, config.f_hi, n_fft, config.sample_rate);
  const Eigen::RowVectorXd col_sum = fb.colwise().sum();
  Mat<double> mag(frames, n_bins);
  for (Index j = 0; j < frames; ++j) {
    Eigen::RowVectorXd p = mel.values.row(j).cast<double>().array().exp();
    for (int k = 0; k < n_bins; ++k) {
      const double denom = col_sum(k);
      const double pk = denom > 1e-9 ? (p * fb.col(k))(0) / denom : 0.0;
      mag(j, k) = std::sqrt(std::max(pk, 0.0));
    }
  }

  const Index n_samples = (frames - 1) * hop + 1;
  std::vector<std::vector<std::complex<double>>> phase(frames,
                                                       std::vector<std::complex<double>>(n_bins));
  util::Rng rng(util::derive_seed(seed, 0x6c));
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (auto& row : phase)
    for (auto& p : row) p = std::polar(1.0, u(rng));

  std::vector<double> signal(n_samples), norm(n_samples), buf(n_fft);
  std::vector<std::complex<double>> spec(n_bins);
  auto synthesize = [&] {
    std::fill(signal.begin(), signal.end(), 0.0);
    std::fill(norm.begin(), norm.end(), 0.0);
    for (Index j = 0; j < frames; ++j) {
      for (int k = 0; k < n_bins; ++k) spec[k] = mag(j, k) * phase[j][k];
      fft.inverse(spec.data(), buf.data());
      const Index start = j * hop - win / 2;
      for (int i = 0; i < win; ++i) {
        const Index s = start + i;
        if (s < 0 || s >= n_samples) continue;
        signal[s] += window[i] * buf[i] / n_fft;
        norm[s] += window[i] * window[i];
      }
    }
    for (Index s = 0; s < n_samples; ++s) {
      if (norm[s] > 1e-8) signal[s] /= norm[s];
    }
  };

  for (int it = 0; it < iterations; ++it) {
    synthesize();
    for (Index j = 0; j < frames; ++j) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const Index start = j * hop - win / 2;
      for (int i = 0; i < win; ++i) {
        const Index s = start + i;
        if (s >= 0 && s < n_samples) buf[i] = window[i] * signal[s];
      }
      fft.forward(buf.data(), spec.data());
      for (int k = 0; k < n_bins; ++k) {
        const double a = std::abs(spec[k]);
        phase[j][k] = a > 1e-12 ? spec[k] / a : std::complex<double>(1.0, 0.0);
      }
    }
  }
  synthesize();

  AudioClip out;
  out.sample_rate = config.sample_rate;
  out.samples.resize(n_samples);
  for (Index s = 0; s < n_samples; ++s) {
    out.samples[s] = static_cast<float>(std::clamp(signal[s], -1.0, 1.0));
  }
  return out;
}

}  // namespace timbre::dsp
