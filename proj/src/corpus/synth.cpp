#include "timbre/corpus.hpp"

#include "timbre/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace timbre::corpus {

namespace {

using std::numbers::pi;

// Canonical formant charts (Hz) for the six named vowels.
const double kVowelChart[6][4] = {
    {730, 1090, 2440, 3400},  // a
    {530, 1840, 2480, 3500},  // e
    {270, 2290, 3010, 3700},  // i
    {570, 840, 2410, 3400},   // o
    {300, 870, 2240, 3300},   // u
    {500, 1500, 2500, 3500},  // @
};
const double kBandwidths[4] = {60, 90, 120, 160};

// Noise bands (center, bandwidth) for the five named consonants.
const double kConsonantChart[5][2] = {
    {6500, 2000},   // s
    {3200, 1200},   // sh
    {10000, 4000},  // f
    {1500, 1400},   // h
    {4600, 2600},   // th
};

constexpr double kVowelRms = 0.12;
constexpr double kConsonantRms = 0.04;
constexpr double kFadeSeconds = 0.005;

std::vector<double> canonical_vowel(int index) {
  if (index < 6) return {kVowelChart[index][0], kVowelChart[index][1], kVowelChart[index][2],
                         kVowelChart[index][3]};
  // Extra vowels: a low-discrepancy walk over the F1/F2 plane.
  const double u = std::fmod(0.5 + index * 0.6180339887, 1.0);
  const double v = std::fmod(0.5 + index * 0.7548776662, 1.0);
  return {300 + 450 * u, 850 + 1400 * v, 2500 + 300 * u, 3450 + 200 * v};
}

std::pair<double, double> canonical_consonant(int index) {
  if (index < 5) return {kConsonantChart[index][0], kConsonantChart[index][1]};
  const double u = std::fmod(0.3 + index * 0.6180339887, 1.0);
  return {1200 + 10000 * u, 800 + 2500 * (1 - u)};
}

// Two-pole resonator with unit gain at DC.
struct Resonator {
  double a = 1, b = 0, c = 0, y1 = 0, y2 = 0;
  void set(double freq, double bw, double rate) {
    const double t = 1.0 / rate;
    c = -std::exp(-2 * pi * bw * t);
    b = 2 * std::exp(-pi * bw * t) * std::cos(2 * pi * freq * t);
    a = 1 - b - c;
  }
  double operator()(double x) {
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Constant 0 dB peak band-pass biquad.
struct BandPass {
  double b0 = 0, b2 = 0, a1 = 0, a2 = 0, x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  void set(double freq, double bw, double rate) {
    const double w0 = 2 * pi * freq / rate;
    const double q = std::max(0.3, freq / bw);
    const double alpha = std::sin(w0) / (2 * q);
    const double a0 = 1 + alpha;
    b0 = alpha / a0;
    b2 = -alpha / a0;
    a1 = -2 * std::cos(w0) / a0;
    a2 = (1 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

SingerSpec generate_singer(uint64_t seed, const PhoneInventory& inventory, int singer_id) {
  util::Rng rng(util::derive_seed(seed, 0x5157));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SingerSpec s;
  s.singer_id = singer_id;
  const double tract = 0.85 + 0.3 * u(rng);  // vocal tract length scaling
  s.f0_min_hz = 110.0 + 110.0 * u(rng);
  s.f0_max_hz = s.f0_min_hz * 2.0;
  s.vibrato_rate_hz = 4.5 + 2.0 * u(rng);
  s.vibrato_cents = 8.0 + 14.0 * u(rng);
  s.tilt = 0.82 + 0.14 * u(rng);

  s.vowel_formants.assign(inventory.size(), {});
  s.consonant_band.assign(inventory.size(), {0, 0});
  int vowel_index = 0, consonant_index = 0;
  for (int p = 0; p < inventory.size(); ++p) {
    if (inventory.kind(p) == PhoneKind::kVowel) {
      const auto chart = canonical_vowel(vowel_index++);
      std::vector<Formant> f;
      double prev = 0;
      for (int k = 0; k < 4; ++k) {
        double freq = chart[k] * tract * (0.95 + 0.1 * u(rng));
        freq = std::max(freq, prev + 150.0);
        prev = freq;
        f.push_back({freq, kBandwidths[k] * (0.8 + 0.4 * u(rng))});
      }
      s.vowel_formants[p] = std::move(f);
    } else if (inventory.kind(p) == PhoneKind::kConsonant) {
      const auto [center, bw] = canonical_consonant(consonant_index++);
      s.consonant_band[p] = {center * (0.9 + 0.2 * u(rng)), bw * (0.85 + 0.3 * u(rng))};
    }
  }
  return s;
}

Utterance synthesize_utterance(const SingerSpec& spec, const PhoneInventory& inventory,
                               const std::vector<PhoneSpan>& phones,
                               const std::vector<Note>& notes, uint64_t seed,
                               const dsp::FeatureConfig& features) {
  features.validate();
  if (phones.empty()) throw std::invalid_argument("synthesize_utterance: empty phone sequence");
  double total = 0;
  for (const auto& p : phones) {
    if (!(p.duration_s > 0)) throw std::invalid_argument("synthesize_utterance: duration <= 0");
    if (p.phone < 0 || p.phone >= inventory.size()) {
      throw std::invalid_argument("synthesize_utterance: phone id out of range");
    }
    total += p.duration_s;
  }
  double note_total = 0;
  for (const auto& n : notes) {
    if (n.f0_hz < spec.f0_min_hz * (1 - 1e-9) || n.f0_hz > spec.f0_max_hz * (1 + 1e-9)) {
      throw std::invalid_argument("synthesize_utterance: note " + std::to_string(n.f0_hz) +
                                  " Hz outside singer range");
    }
    if (!(n.duration_s > 0)) throw std::invalid_argument("synthesize_utterance: note duration <= 0");
    note_total += n.duration_s;
  }
  bool any_vowel = false;
  for (const auto& p : phones) any_vowel |= inventory.kind(p.phone) == PhoneKind::kVowel;
  if (any_vowel && notes.empty()) throw std::invalid_argument("synthesize_utterance: no notes");

  const int rate = features.sample_rate;
  const Index n_samples = static_cast<Index>(std::lround(total * rate));
  const int hop = features.hop_samples();

  // Phone boundaries in samples and in frames.
  std::vector<Index> sample_edge{0}, frame_edge{0};
  double t = 0;
  for (const auto& p : phones) {
    t += p.duration_s;
    sample_edge.push_back(std::min(n_samples, static_cast<Index>(std::lround(t * rate))));
    frame_edge.push_back(static_cast<Index>(std::lround(t * rate / hop)));
  }

  util::Rng rng(util::derive_seed(seed, 0xa0d10));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double vib_phase = std::uniform_real_distribution<double>(0, 2 * pi)(rng);

  auto note_at = [&](double time) {
    double acc = 0;
    for (const auto& n : notes) {
      acc += n.duration_s;
      if (time < acc) return n.f0_hz;
    }
    return notes.back().f0_hz;
  };
  (void)note_total;
  auto f0_at = [&](double time) {
    const double cents = spec.vibrato_cents * std::sin(2 * pi * spec.vibrato_rate_hz * time + vib_phase);
    return note_at(time) * std::pow(2.0, cents / 1200.0);
  };

  std::vector<double> out(n_samples, 0.0);
  std::vector<double> chain(n_samples, 0.0);
  Resonator formants[4];
  BandPass band[2];
  double phase = 0, tilt_state = 0;

  for (size_t k = 0; k < phones.size(); ++k) {
    const int id = phones[k].phone;
    const Index a = sample_edge[k], b = sample_edge[k + 1];
    if (b <= a) continue;
    const PhoneKind kind = inventory.kind(id);
    if (kind == PhoneKind::kSilence) continue;

    if (kind == PhoneKind::kVowel) {
      for (int f = 0; f < 4; ++f) {
        formants[f].set(spec.vowel_formants[id][f].freq_hz, spec.vowel_formants[id][f].bandwidth_hz,
                        rate);
      }
      for (Index n = a; n < b; ++n) {
        phase += f0_at(double(n) / rate) / rate;
        double src = 0;
        if (phase >= 1.0) {
          phase -= 1.0;
          src = 1.0;
        }
        tilt_state = src + spec.tilt * tilt_state;
        double y = tilt_state;
        for (auto& r : formants) y = r(y);
        chain[n] = y;
      }
    } else {
      for (auto& bp : band) bp.set(spec.consonant_band[id].freq_hz, spec.consonant_band[id].bandwidth_hz, rate);
      for (Index n = a; n < b; ++n) {
        double y = gauss(rng);
        for (auto& bp : band) y = bp(y);
        chain[n] = y;
      }
    }

    double energy = 0;
    for (Index n = a; n < b; ++n) energy += chain[n] * chain[n];
    const double rms = std::sqrt(energy / double(b - a));
    const double target = kind == PhoneKind::kVowel ? kVowelRms : kConsonantRms;
    const double gain = rms > 1e-12 ? target / rms : 0.0;
    const Index fade = std::min<Index>(static_cast<Index>(kFadeSeconds * rate), (b - a) / 2);
    for (Index n = a; n < b; ++n) {
      double env = 1.0;
      const Index from_start = n - a, to_end = b - 1 - n;
      if (fade > 0 && from_start < fade) env = 0.5 - 0.5 * std::cos(pi * from_start / fade);
      if (fade > 0 && to_end < fade) env = std::min(env, 0.5 - 0.5 * std::cos(pi * to_end / fade));
      out[n] = gain * env * chain[n];
    }
  }

  Utterance u;
  u.singer_id = spec.singer_id;
  u.audio.sample_rate = rate;
  u.audio.samples.resize(n_samples);
  for (Index n = 0; n < n_samples; ++n) {
    u.audio.samples[n] = static_cast<float>(std::clamp(out[n], -1.0, 1.0));
  }
  if (static_cast<Index>(u.audio.samples.size()) < features.window_samples()) {
    throw std::invalid_argument("synthesize_utterance: utterance shorter than one analysis window");
  }
  u.mel = dsp::compute_mel(u.audio, features);
  const Index frames = u.mel.n_frames();
  u.phones.resize(frames);
  u.f0.f0_hz.assign(frames, 0.0f);
  u.f0.voiced.assign(frames, 0);
  size_t k = 0;
  for (Index j = 0; j < frames; ++j) {
    while (k + 1 < phones.size() && j >= frame_edge[k + 1]) ++k;
    const int id = phones[k].phone;
    u.phones[j] = id;
    if (inventory.kind(id) == PhoneKind::kVowel) {
      u.f0.f0_hz[j] = static_cast<float>(f0_at(double(j) * hop / rate));
      u.f0.voiced[j] = 1;
    }
  }
  return u;
}

Song compose_song(const SingerSpec& spec, const PhoneInventory& inventory, double seconds,
                  uint64_t seed) {
  util::Rng rng(util::derive_seed(seed, 0x50e6));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto vowels = inventory.ids_of(PhoneKind::kVowel);
  const auto consonants = inventory.ids_of(PhoneKind::kConsonant);
  const int sil = inventory.silence_id();
  const int semitones =
      static_cast<int>(std::floor(12.0 * std::log2(spec.f0_max_hz / spec.f0_min_hz) + 1e-9));

  Song song;
  double note = spec.f0_min_hz * std::pow(2.0, int(u(rng) * (semitones + 1)) / 12.0);
  auto push = [&](int phone, double dur) {
    song.phones.push_back({phone, dur});
    song.notes.push_back({note, dur});
  };
  push(sil, 0.15 + 0.15 * u(rng));
  while (true) {
    double used = 0;
    for (const auto& p : song.phones) used += p.duration_s;
    if (used > seconds - 1.2) break;
    // Melody: mostly steps, sometimes leaps, within the singer's range.
    int step = static_cast<int>(std::lround((u(rng) - 0.5) * 8));
    int current = static_cast<int>(std::lround(12.0 * std::log2(note / spec.f0_min_hz)));
    current = std::clamp(current + step, 0, semitones);
    note = spec.f0_min_hz * std::pow(2.0, current / 12.0);
    if (!consonants.empty() && u(rng) < 0.6) {
      push(consonants[static_cast<size_t>(u(rng) * consonants.size())], 0.06 + 0.08 * u(rng));
    }
    push(vowels[static_cast<size_t>(u(rng) * vowels.size())], 0.25 + 0.55 * u(rng));
    if (u(rng) < 0.15) push(sil, 0.1 + 0.2 * u(rng));
  }
  double used = 0;
  for (const auto& p : song.phones) used += p.duration_s;
  push(sil, std::max(0.15, seconds - used));
  return song;
}

}  // namespace timbre::corpus
