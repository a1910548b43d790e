#pragma once

// Audio I/O, log-mel features, F0 encoding and pitch-transposition
// augmentation. All functions are pure; concurrent calls on distinct inputs
// are safe.

#include "timbre/nn/tensor.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace timbre::dsp {

using nn::Index;
using nn::Mat;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 32000;

  double duration_s() const { return double(samples.size()) / sample_rate; }
};

class WavError : public std::runtime_error {
 public:
  enum class Kind { kMissingFile, kChannelsUnsupported, kUnsupportedEncoding, kCorrupt };
  WavError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Mono PCM16 / PCM32 / float32 WAV. Integer PCM is scaled by 1/2^(bits-1).
AudioClip load_wav(const std::filesystem::path& path);
enum class WavEncoding { kPcm16, kFloat32 };
void save_wav(const AudioClip& clip, const std::filesystem::path& path,
              WavEncoding encoding = WavEncoding::kPcm16);

struct FeatureConfig {
  int sample_rate = 32000;
  double hop_ms = 5.0;
  double window_ms = 45.0;
  int n_bands = 100;
  double f_lo = 10.0;
  double f_hi = 15200.0;
  double log_floor = 1e-5;

  int hop_samples() const;
  int window_samples() const;
  int n_fft() const;  // next power of two >= window
  void validate() const;
  // Stable hash of every field that changes feature values.
  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, FeatureConfig& c);

struct MelSpectrogram {
  Mat<float> values;  // [frames x bands], natural-log band power
  Index n_frames() const { return values.rows(); }
  Index n_bands() const { return values.cols(); }
};

// n_frames = floor(n_samples / hop) + 1
Index frame_count(Index n_samples, const FeatureConfig& config);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters, [n_bands x (n_fft/2 + 1)], peaks equally spaced on the
// HTK mel scale between f_lo and f_hi.
Mat<double> mel_filterbank(int n_bands, double f_lo, double f_hi, int n_fft, int sample_rate);
std::vector<double> mel_band_centers(int n_bands, double f_lo, double f_hi);

// Centered Hann-windowed STFT power, normalized so that a full-scale sinusoid
// of amplitude A has peak bin power A^2/4; band energies are log(max(p, floor)).
MelSpectrogram compute_mel(const AudioClip& clip, const FeatureConfig& config);

// y[m] = x(m * factor) by Hann-windowed sinc interpolation; low-passed at
// min(1, 1/factor) of Nyquist. Pitch scales by `factor`, duration by 1/factor.
AudioClip resample(const AudioClip& clip, double factor);

// Mel frames re-sampled along time: out[j] = in(j * rate), linearly
// interpolated and clamped to the last frame.
MelSpectrogram time_scale(const MelSpectrogram& mel, Index out_frames, double rate);

// Resample by `factor`, compute mel, then time-scale back to `labels_frames`
// so frame alignment with the linguistic labels is preserved.
MelSpectrogram transpose_augment(const AudioClip& clip, Index labels_frames, double factor,
                                 const FeatureConfig& config);

struct F0Track {
  std::vector<float> f0_hz;
  std::vector<uint8_t> voiced;
  Index n_frames() const { return static_cast<Index>(f0_hz.size()); }
  void validate() const;  // f0 == 0 <=> unvoiced
};

struct F0Stats {
  double log_min = std::log(80.0);
  double log_max = std::log(800.0);
};

F0Stats compute_f0_stats(const std::vector<const F0Track*>& tracks);

// [frames x 2]: (log-F0 mapped so stats.log_min -> -1, log_max -> 1, held at the
// last voiced value across unvoiced runs, 0 before the first voiced frame;
// voiced flag).
Mat<float> normalize_f0(const F0Track& track, const F0Stats& stats);

// Phase reconstruction from a log-mel spectrogram (mel pseudo-inverse followed
// by Griffin-Lim iterations). For listening only.
AudioClip griffin_lim(const MelSpectrogram& mel, const FeatureConfig& config, int iterations = 32,
                      uint64_t seed = 0);

}  // namespace timbre::dsp
