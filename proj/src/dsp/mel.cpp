#include "timbre/dsp.hpp"

#include "fft.hpp"
#include "timbre/util/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

namespace timbre::dsp {

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * 1e-3 * sample_rate));
}

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * 1e-3 * sample_rate));
}

int FeatureConfig::n_fft() const {
  int n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0 || hop_samples() <= 0 || window_samples() <= 1) {
    throw std::invalid_argument("FeatureConfig: invalid rate, hop or window");
  }
  if (n_bands < 1) throw std::invalid_argument("FeatureConfig: n_bands must be >= 1");
  if (!(f_lo >= 0 && f_lo < f_hi)) throw std::invalid_argument("FeatureConfig: need f_lo < f_hi");
  if (f_hi > sample_rate / 2.0) {
    throw std::invalid_argument("FeatureConfig: f_hi above Nyquist");
  }
  if (!(log_floor > 0)) throw std::invalid_argument("FeatureConfig: log_floor must be > 0");
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = {{"sample_rate", c.sample_rate}, {"hop_ms", c.hop_ms}, {"window_ms", c.window_ms},
       {"n_bands", c.n_bands},         {"f_lo", c.f_lo},     {"f_hi", c.f_hi},
       {"log_floor", c.log_floor}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "sample_rate") c.sample_rate = value.get<int>();
    else if (key == "hop_ms") c.hop_ms = value.get<double>();
    else if (key == "window_ms") c.window_ms = value.get<double>();
    else if (key == "n_bands") c.n_bands = value.get<int>();
    else if (key == "f_lo") c.f_lo = value.get<double>();
    else if (key == "f_hi") c.f_hi = value.get<double>();
    else if (key == "log_floor") c.log_floor = value.get<double>();
    else throw std::invalid_argument("features: unknown key '" + key + "'");
  }
}

std::string FeatureConfig::fingerprint() const {
  const nlohmann::json j = *this;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(util::fnv1a64(j.dump())));
  return buf;
}

Index frame_count(Index n_samples, const FeatureConfig& config) {
  return n_samples / config.hop_samples() + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_centers(int n_bands, double f_lo, double f_hi) {
  const double lo = hz_to_mel(f_lo), hi = hz_to_mel(f_hi);
  std::vector<double> c(n_bands);
  for (int m = 0; m < n_bands; ++m) c[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (n_bands + 1));
  return c;
}

Mat<double> mel_filterbank(int n_bands, double f_lo, double f_hi, int n_fft, int sample_rate) {
  if (!(f_lo < f_hi)) throw std::invalid_argument("mel_filterbank: need f_lo < f_hi");
  if (f_hi > sample_rate / 2.0) throw std::invalid_argument("mel_filterbank: f_hi above Nyquist");
  if (n_bands < 1 || n_fft < 2) throw std::invalid_argument("mel_filterbank: invalid sizes");
  const int n_bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(f_lo), hi = hz_to_mel(f_hi);
  std::vector<double> edges(n_bands + 2);
  for (int i = 0; i < n_bands + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (n_bands + 1));
  Mat<double> fb = Mat<double>::Zero(n_bands, n_bins);
  for (int m = 0; m < n_bands; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = double(k) * sample_rate / n_fft;
      const double w = std::min((f - l) / (c - l), (r - f) / (r - c));
      if (w > 0) fb(m, k) = w;
    }
  }
  return fb;
}

namespace {

struct SparseBank {
  std::vector<int> first, last;  // non-zero bin range per band, [first, last)
  Mat<double> weights;
};

SparseBank sparse_bank(const FeatureConfig& config) {
  SparseBank b;
  b.weights = mel_filterbank(config.n_bands, config.f_lo, config.f_hi, config.n_fft(),
                             config.sample_rate);
  for (Index m = 0; m < b.weights.rows(); ++m) {
    int first = -1, last = -1;
    for (Index k = 0; k < b.weights.cols(); ++k) {
      if (b.weights(m, k) > 0) {
        if (first < 0) first = static_cast<int>(k);
        last = static_cast<int>(k) + 1;
      }
    }
    b.first.push_back(std::max(first, 0));
    b.last.push_back(std::max(last, 0));
  }
  return b;
}

}  // namespace

MelSpectrogram compute_mel(const AudioClip& clip, const FeatureConfig& config) {
  config.validate();
  if (clip.sample_rate != config.sample_rate) {
    throw std::invalid_argument("compute_mel: clip sample rate " +
                                std::to_string(clip.sample_rate) + " != configured " +
                                std::to_string(config.sample_rate));
  }
  const int win = config.window_samples();
  const Index n = static_cast<Index>(clip.samples.size());
  if (n < win) throw std::invalid_argument("compute_mel: clip shorter than one analysis window");

  const int hop = config.hop_samples();
  const int n_fft = config.n_fft();
  const int n_bins = n_fft / 2 + 1;
  const Index frames = frame_count(n, config);
  const auto window = detail::hann_window(win);
  const auto& fft = detail::real_fft(n_fft);
  const SparseBank bank = sparse_bank(config);
  const double log_floor = std::log(config.log_floor);

  MelSpectrogram mel;
  mel.values.resize(frames, config.n_bands);
#pragma omp parallel
  {
    std::vector<double> buf(n_fft);
    std::vector<std::complex<double>> spec(n_bins);
    std::vector<double> power(n_bins);
#pragma omp for schedule(static)
    for (Index j = 0; j < frames; ++j) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const Index start = j * hop - win / 2;
      for (int i = 0; i < win; ++i) {
        const Index s = start + i;
        if (s >= 0 && s < n) buf[i] = window[i] * clip.samples[s];
      }
      fft.forward(buf.data(), spec.data());
      for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
      for (int m = 0; m < config.n_bands; ++m) {
        double e = 0;
        for (int k = bank.first[m]; k < bank.last[m]; ++k) e += bank.weights(m, k) * power[k];
        mel.values(j, m) =
            static_cast<float>(e > config.log_floor ? std::log(e) : log_floor);
      }
    }
  }
  return mel;
}

MelSpectrogram time_scale(const MelSpectrogram& mel, Index out_frames, double rate) {
  if (mel.n_frames() < 1) throw std::invalid_argument("time_scale: empty input");
  if (out_frames < 0 || !(rate > 0)) throw std::invalid_argument("time_scale: invalid target");
  MelSpectrogram out;
  out.values.resize(out_frames, mel.n_bands());
  const Index last = mel.n_frames() - 1;
  for (Index j = 0; j < out_frames; ++j) {
    const double p = std::min(double(j) * rate, double(last));
    const Index i0 = static_cast<Index>(std::floor(p));
    const Index i1 = std::min(i0 + 1, last);
    const float a = static_cast<float>(p - double(i0));
    if (a == 0.0f) {
      out.values.row(j) = mel.values.row(i0);
    } else {
      out.values.row(j) = (1.0f - a) * mel.values.row(i0) + a * mel.values.row(i1);
    }
  }
  return out;
}

MelSpectrogram transpose_augment(const AudioClip& clip, Index labels_frames, double factor,
                                 const FeatureConfig& config) {
  if (!(factor > 0) || !std::isfinite(factor)) {
    throw std::invalid_argument("transpose_augment: factor must be > 0");
  }
  AudioClip shifted = resample(clip, factor);
  const size_t min_len = static_cast<size_t>(config.window_samples());
  if (shifted.samples.size() < min_len) shifted.samples.resize(min_len, 0.0f);
  const MelSpectrogram mel = compute_mel(shifted, config);
  // Original frame j sits at shifted time j * hop / factor.
  return time_scale(mel, labels_frames, 1.0 / factor);
}

}  // namespace timbre::dsp
