#include "timbre/corpus.hpp"

#include "timbre/util/log.hpp"
#include "timbre/util/random.hpp"

#include <algorithm>
#include <cstdio>

namespace timbre::corpus {

Dataset::Dataset(dsp::FeatureConfig features, int n_phones, bool has_labels)
    : features_(features), n_phones_(n_phones), has_labels_(has_labels) {}

Dataset::Dataset(const Dataset& other)
    : features_(other.features_),
      n_phones_(other.n_phones_),
      has_labels_(other.has_labels_),
      items_(other.items_),
      label_reads_(0) {}

Dataset& Dataset::operator=(const Dataset& other) {
  if (this != &other) {
    features_ = other.features_;
    n_phones_ = other.n_phones_;
    has_labels_ = other.has_labels_;
    items_ = other.items_;
    label_reads_ = 0;
  }
  return *this;
}

void Dataset::add(Utterance u) {
  if (u.mel.n_bands() != features_.n_bands) {
    throw std::invalid_argument("Dataset: utterance has " + std::to_string(u.mel.n_bands()) +
                                " bands, dataset expects " + std::to_string(features_.n_bands));
  }
  if (u.f0.n_frames() != u.n_frames()) {
    throw std::invalid_argument("Dataset: F0 track length differs from mel length");
  }
  if (has_labels_) {
    if (static_cast<Index>(u.phones.size()) != u.n_frames()) {
      throw std::invalid_argument("Dataset: label length differs from mel length");
    }
    for (int32_t p : u.phones) {
      if (p < 0 || p >= n_phones_) throw std::invalid_argument("Dataset: phone id out of range");
    }
  } else {
    u.phones.clear();
  }
  items_.push_back(std::move(u));
}

double Dataset::duration_s() const {
  double total = 0;
  for (const auto& u : items_) {
    total += u.audio.samples.empty()
                 ? double(u.n_frames()) * features_.hop_samples() / features_.sample_rate
                 : double(u.audio.samples.size()) / u.audio.sample_rate;
  }
  return total;
}

const std::vector<int32_t>& Dataset::labels(size_t i) const {
  if (!has_labels_) throw std::logic_error("Dataset: labels requested from an audio-only dataset");
  ++label_reads_;
  return items_.at(i).phones;
}

const Utterance& Dataset::utterance(size_t i) const {
  if (has_labels_) ++label_reads_;
  return items_.at(i);
}

Dataset Dataset::audio_only() const {
  Dataset out(features_, n_phones_, false);
  for (const auto& u : items_) {
    Utterance copy;
    copy.audio = u.audio;
    copy.mel = u.mel;
    copy.f0 = u.f0;
    copy.singer_id = u.singer_id;
    out.items_.push_back(std::move(copy));
  }
  return out;
}

std::vector<int> Dataset::singers() const {
  std::vector<int> out;
  for (const auto& u : items_) out.push_back(u.singer_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CorpusSplit build_corpus(const CorpusOptions& options, const PhoneInventory& inventory,
                         uint64_t seed) {
  if (options.n_singers < 1) throw std::invalid_argument("build_corpus: n_singers < 1");
  if (options.validation_songs < 0 || options.validation_songs >= options.songs_per_singer) {
    throw std::invalid_argument("build_corpus: need 0 <= validation_songs < songs_per_singer");
  }
  const int n_songs = options.songs_per_singer;
  const int total = options.n_singers * n_songs;
  std::vector<SingerSpec> singers;
  for (int s = 0; s < options.n_singers; ++s) {
    const int id = options.first_singer_id + s;
    singers.push_back(generate_singer(util::derive_seed(seed, 1, id), inventory, id));
  }
  std::vector<Utterance> utts(total);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < total; ++k) {
    const int s = k / n_songs, song = k % n_songs;
    const int id = options.first_singer_id + s;
    const Song composed = compose_song(singers[s], inventory, options.song_seconds,
                                       util::derive_seed(seed, 2, id, song));
    utts[k] = synthesize_utterance(singers[s], inventory, composed.phones, composed.notes,
                                   util::derive_seed(seed, 3, id, song), options.features);
  }
  CorpusSplit split{Dataset(options.features, inventory.size(), true),
                    Dataset(options.features, inventory.size(), true)};
  for (int k = 0; k < total; ++k) {
    const bool validation = k % n_songs >= n_songs - options.validation_songs;
    (validation ? split.validation : split.train).add(std::move(utts[k]));
  }
  return split;
}

Dataset cloning_subset(const Dataset& train, double seconds) {
  Dataset out(train.features(), train.n_phones(), train.has_labels());
  double total = 0;
  for (size_t i = 0; i < train.size() && total < seconds; ++i) {
    Utterance u = train.has_labels() ? train.utterance(i) : Utterance{};
    if (!train.has_labels()) {
      u.audio = train.audio(i);
      u.mel = train.mel(i);
      u.f0 = train.f0(i);
      u.singer_id = train.singer(i);
    }
    total += double(u.audio.samples.size()) / u.audio.sample_rate;
    out.add(std::move(u));
  }
  if (total < seconds) {
    util::warn("cloning_subset: only " + std::to_string(total) + " s available, wanted " +
               std::to_string(seconds));
  }
  return out;
}

ExperimentCorpora build_experiment_corpora(const CorpusOptions& multi, CorpusOptions target,
                                           double clone_seconds, const PhoneInventory& inventory,
                                           uint64_t seed) {
  target.first_singer_id = multi.first_singer_id + multi.n_singers;
  target.n_singers = 1;
  target.features = multi.features;
  ExperimentCorpora out{build_corpus(multi, inventory, seed),
                        build_corpus(target, inventory, seed), {}};
  out.clone = cloning_subset(out.target.train, clone_seconds);
  return out;
}

// ---------------------------------------------------------------------------
// Segments

Segment make_segment(const Dataset& dataset, size_t utterance, Index start,
                     const SegmentOptions& options) {
  const Index length = options.valid_frames + 2 * options.context_frames;
  const Index n = dataset.n_frames(utterance);
  if (start < 0 || start + length > n) {
    throw std::out_of_range("make_segment: window exceeds utterance");
  }
  Segment s;
  s.utterance = utterance;
  s.start = start;
  s.context = options.context_frames;
  s.valid = options.valid_frames;
  s.singer_id = dataset.singer(utterance);
  s.mel.values = dataset.mel(utterance).values.middleRows(start, length);
  const auto& f0 = dataset.f0(utterance);
  s.f0.f0_hz.assign(f0.f0_hz.begin() + start, f0.f0_hz.begin() + start + length);
  s.f0.voiced.assign(f0.voiced.begin() + start, f0.voiced.begin() + start + length);
  if (options.with_labels && dataset.has_labels()) {
    const auto& labels = dataset.labels(utterance);
    s.phones.assign(labels.begin() + start, labels.begin() + start + length);
  }
  if (options.with_audio) {
    const auto& audio = dataset.audio(utterance);
    const Index hop = dataset.features().hop_samples();
    s.audio.sample_rate = audio.sample_rate;
    s.audio.samples.assign(length * hop, 0.0f);
    const Index first = start * hop;
    const Index last = std::min<Index>(first + length * hop, audio.samples.size());
    if (last > first) {
      std::copy(audio.samples.begin() + first, audio.samples.begin() + last,
                s.audio.samples.begin());
    }
  }
  s.mask.assign(length, 0);
  std::fill(s.mask.begin() + s.context, s.mask.begin() + s.context + s.valid, 1);
  return s;
}

SegmentIterator::SegmentIterator(const Dataset& dataset, SegmentOptions options, uint64_t seed)
    : dataset_(dataset), options_(options), seed_(seed) {
  if (options_.batch_size < 1 || options_.valid_frames < 1 || options_.context_frames < 0) {
    throw std::invalid_argument("SegmentIterator: bad options");
  }
  const Index length = options_.valid_frames + 2 * options_.context_frames;
  double acc = 0;
  size_t skipped = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const Index n = dataset.n_frames(i);
    if (n < length) {
      ++skipped;
      continue;
    }
    eligible_.push_back(i);
    acc += double(n - length + 1);
    cumulative_.push_back(acc);
  }
  if (skipped > 0) {
    util::warn("SegmentIterator: skipped " + std::to_string(skipped) +
               " utterance(s) shorter than " + std::to_string(length) + " frames");
  }
  if (eligible_.empty()) {
    throw std::invalid_argument("SegmentIterator: no utterance is at least " +
                                std::to_string(length) + " frames long");
  }
}

std::vector<Segment> SegmentIterator::batch(uint64_t step) const {
  util::Rng rng(util::derive_seed(seed_, step));
  std::uniform_real_distribution<double> u(0.0, cumulative_.back());
  const Index length = options_.valid_frames + 2 * options_.context_frames;
  std::vector<Segment> out;
  out.reserve(options_.batch_size);
  for (int b = 0; b < options_.batch_size; ++b) {
    const double r = u(rng);
    size_t k = std::upper_bound(cumulative_.begin(), cumulative_.end(), r) - cumulative_.begin();
    k = std::min(k, cumulative_.size() - 1);
    const size_t utt = eligible_[k];
    const Index span = dataset_.n_frames(utt) - length;
    const Index start = std::uniform_int_distribution<Index>(0, span)(rng);
    out.push_back(make_segment(dataset_, utt, start, options_));
  }
  return out;
}

}  // namespace timbre::corpus
