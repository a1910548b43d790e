#pragma once

// Synthetic multi-singer corpus: a source-filter singing generator with exact
// phone labels and F0, aligned feature datasets, segment batching and the
// feature container format.

#include "timbre/container.hpp"
#include "timbre/dsp.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace timbre::corpus {

using dsp::Index;

enum class PhoneKind { kSilence, kVowel, kConsonant };

class UnknownPhone : public std::invalid_argument {
 public:
  explicit UnknownPhone(const std::string& symbol)
      : std::invalid_argument("unknown phone symbol '" + symbol + "'"), symbol_(symbol) {}
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

class PhoneInventory {
 public:
  // sil + 6 vowels + 5 consonants.
  static PhoneInventory default_inventory();
  // sil + n_vowels + n_consonants; up to 43 symbols. Vowels beyond the six
  // canonical ones get formant targets spread over the vowel space.
  static PhoneInventory synthetic(int n_vowels, int n_consonants);

  PhoneInventory(std::vector<std::string> symbols, std::vector<PhoneKind> kinds);

  int size() const { return static_cast<int>(symbols_.size()); }
  int one_hot_dim() const { return size(); }
  int silence_id() const { return silence_id_; }
  int id(const std::string& symbol) const;  // throws UnknownPhone
  const std::string& symbol(int id) const { return symbols_.at(id); }
  PhoneKind kind(int id) const { return kinds_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  std::vector<int> ids_of(PhoneKind kind) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<PhoneKind> kinds_;
  int silence_id_ = -1;
};

struct Formant {
  double freq_hz;
  double bandwidth_hz;
};

struct SingerSpec {
  int singer_id = 0;
  // Indexed by phone id; empty for non-vowels. Four formants, ascending.
  std::vector<std::vector<Formant>> vowel_formants;
  // Indexed by phone id; noise band of each consonant.
  std::vector<Formant> consonant_band;
  double f0_min_hz = 110;
  double f0_max_hz = 440;
  double vibrato_rate_hz = 5.5;
  double vibrato_cents = 15;
  double tilt = 0.9;  // one-pole glottal source low-pass coefficient
};

SingerSpec generate_singer(uint64_t seed, const PhoneInventory& inventory, int singer_id = 0);

struct PhoneSpan {
  int phone;
  double duration_s;
};

struct Note {
  double f0_hz;
  double duration_s;
};

struct Utterance {
  dsp::AudioClip audio;
  dsp::MelSpectrogram mel;
  std::vector<int32_t> phones;  // per frame; empty when the dataset carries no labels
  dsp::F0Track f0;
  int singer_id = 0;

  Index n_frames() const { return mel.n_frames(); }
};

// Impulse train with vibrato through per-vowel formant resonators, band-passed
// noise for consonants, digital silence for sil. Labels switch at the nearest
// frame; F0 is the commanded note (with vibrato) on vowel frames, 0 elsewhere.
Utterance synthesize_utterance(const SingerSpec& spec, const PhoneInventory& inventory,
                               const std::vector<PhoneSpan>& phones,
                               const std::vector<Note>& notes, uint64_t seed,
                               const dsp::FeatureConfig& features = {});

struct Song {
  std::vector<PhoneSpan> phones;
  std::vector<Note> notes;
};

// Random syllable sequence of roughly `seconds` length with notes drawn from
// the singer's range on a semitone grid.
Song compose_song(const SingerSpec& spec, const PhoneInventory& inventory, double seconds,
                  uint64_t seed);

// Aligned utterances of one feature configuration. Label reads go through
// labels() / utterance() and are counted, so audio-only consumers can prove
// they never touched annotations.
class Dataset {
 public:
  Dataset() = default;
  Dataset(dsp::FeatureConfig features, int n_phones, bool has_labels);
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);

  void add(Utterance u);
  size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool has_labels() const { return has_labels_; }
  int n_phones() const { return n_phones_; }
  const dsp::FeatureConfig& features() const { return features_; }

  const dsp::MelSpectrogram& mel(size_t i) const { return items_.at(i).mel; }
  const dsp::F0Track& f0(size_t i) const { return items_.at(i).f0; }
  const dsp::AudioClip& audio(size_t i) const { return items_.at(i).audio; }
  int singer(size_t i) const { return items_.at(i).singer_id; }
  Index n_frames(size_t i) const { return items_.at(i).n_frames(); }
  double duration_s() const;

  const std::vector<int32_t>& labels(size_t i) const;
  const Utterance& utterance(size_t i) const;
  uint64_t label_reads() const { return label_reads_.load(); }

  // Copy without annotations.
  Dataset audio_only() const;
  std::vector<int> singers() const;

 private:
  dsp::FeatureConfig features_;
  int n_phones_ = 0;
  bool has_labels_ = false;
  std::vector<Utterance> items_;
  mutable std::atomic<uint64_t> label_reads_{0};
};

struct CorpusOptions {
  int n_singers = 7;
  int songs_per_singer = 10;
  int validation_songs = 1;
  double song_seconds = 15.0;
  int first_singer_id = 0;
  dsp::FeatureConfig features;
};

struct CorpusSplit {
  Dataset train;
  Dataset validation;
};

// Deterministic in seed; each utterance has its own derived seed, so the
// result does not depend on generation order or thread count.
CorpusSplit build_corpus(const CorpusOptions& options, const PhoneInventory& inventory,
                         uint64_t seed);

// Leading utterances of `train` until at least `seconds` of audio.
Dataset cloning_subset(const Dataset& train, double seconds = 180.0);

struct ExperimentCorpora {
  CorpusSplit multi;   // phase A singers
  CorpusSplit target;  // held-out singer, id = multi singer count
  Dataset clone;       // ~3 min of target training audio
};

// The target options' first_singer_id is overridden to follow the multi-singer ids.
ExperimentCorpora build_experiment_corpora(const CorpusOptions& multi, CorpusOptions target,
                                           double clone_seconds, const PhoneInventory& inventory,
                                           uint64_t seed);

struct Segment {
  size_t utterance = 0;
  Index start = 0;    // first frame, including left context
  Index context = 0;  // frames on each side
  Index valid = 0;
  int singer_id = 0;
  dsp::MelSpectrogram mel;
  std::vector<int32_t> phones;  // empty for audio-only datasets
  dsp::F0Track f0;
  dsp::AudioClip audio;  // samples [start*hop, (start+length)*hop)
  std::vector<uint8_t> mask;  // 1 on the valid region only

  Index length() const { return valid + 2 * context; }
};

struct SegmentOptions {
  int batch_size = 12;
  Index valid_frames = 300;
  Index context_frames = 82;
  bool with_labels = true;
  bool with_audio = true;
};

// Endless stream of batches. batch(step) is a pure function of (seed, step),
// so a resumed run sees the same data; next() walks steps in order.
class SegmentIterator {
 public:
  SegmentIterator(const Dataset& dataset, SegmentOptions options, uint64_t seed);
  std::vector<Segment> batch(uint64_t step) const;
  std::vector<Segment> next() { return batch(step_++); }
  uint64_t step() const { return step_; }
  void seek(uint64_t step) { step_ = step; }
  const std::vector<size_t>& eligible() const { return eligible_; }

 private:
  const Dataset& dataset_;
  SegmentOptions options_;
  uint64_t seed_;
  uint64_t step_ = 0;
  std::vector<size_t> eligible_;
  std::vector<double> cumulative_;  // start-position weights
};

Segment make_segment(const Dataset& dataset, size_t utterance, Index start,
                     const SegmentOptions& options);

// Feature container I/O. Fingerprint = feature configuration fingerprint.
void save_features(const Dataset& dataset, const std::filesystem::path& path,
                   const PhoneInventory* inventory = nullptr);
Dataset load_features(const std::filesystem::path& path, const dsp::FeatureConfig& expected);

// Text formats: "phone start_s end_s" and "time_s f0_hz" per line.
struct PhoneTiming {
  int phone;
  double start_s;
  double end_s;
};
std::vector<PhoneTiming> read_phone_timings(const std::filesystem::path& path,
                                            const PhoneInventory& inventory);
void write_phone_timings(const std::filesystem::path& path, const std::vector<int32_t>& frames,
                         const PhoneInventory& inventory, const dsp::FeatureConfig& features);
std::vector<std::pair<double, double>> read_f0_file(const std::filesystem::path& path);
void write_f0_file(const std::filesystem::path& path, const dsp::F0Track& f0,
                   const dsp::FeatureConfig& features);

// Frame labels from timings: frame j takes the phone whose span contains
// j * hop (boundaries rounded to the nearest frame).
std::vector<int32_t> timings_to_frames(const std::vector<PhoneTiming>& timings, Index n_frames,
                                       const dsp::FeatureConfig& features);
// F0 points to a frame track by linear interpolation between neighbouring
// points; f0 <= 0 marks unvoiced.
dsp::F0Track f0_points_to_track(const std::vector<std::pair<double, double>>& points,
                                Index n_frames, const dsp::FeatureConfig& features);

}  // namespace timbre::corpus
