#include "timbre/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace timbre::corpus {

namespace {

std::string item_key(size_t i, const char* field) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "utt/%05zu/%s", i, field);
  return buf;
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

void save_features(const Dataset& dataset, const std::filesystem::path& path,
                   const PhoneInventory* inventory) {
  io::Container c;
  c.fingerprint = dataset.features().fingerprint();
  c.meta["kind"] = "features";
  c.meta["n_items"] = dataset.size();
  c.meta["feature_config"] = dataset.features();
  c.meta["n_phones"] = dataset.n_phones();
  c.meta["has_labels"] = dataset.has_labels();
  if (inventory) c.meta["inventory"] = inventory->symbols();
  std::vector<int> singers;
  for (size_t i = 0; i < dataset.size(); ++i) {
    singers.push_back(dataset.singer(i));
    const auto& mel = dataset.mel(i).values;
    const int64_t t = mel.rows();
    c.add<float>(item_key(i, "mel"), {t, mel.cols()}, {mel.data(), size_t(mel.size())});
    const auto& f0 = dataset.f0(i);
    c.add<float>(item_key(i, "f0"), {t}, f0.f0_hz);
    c.add<uint8_t>(item_key(i, "voiced"), {t}, f0.voiced);
    const auto& audio = dataset.audio(i).samples;
    c.add<float>(item_key(i, "audio"), {int64_t(audio.size())}, audio);
    if (dataset.has_labels()) c.add<int32_t>(item_key(i, "phones"), {t}, dataset.labels(i));
  }
  c.meta["singers"] = singers;
  c.meta["sample_rate"] = dataset.features().sample_rate;
  io::write_container(c, path);
}

Dataset load_features(const std::filesystem::path& path, const dsp::FeatureConfig& expected) {
  const io::Container c = io::read_container(path, expected.fingerprint());
  if (c.meta.value("kind", "") != "features") {
    throw io::ContainerError(path.string() + ": not a feature container");
  }
  const auto singers = c.meta.at("singers").get<std::vector<int>>();
  const size_t n = c.meta.at("n_items").get<size_t>();
  if (singers.size() != n) throw io::ContainerError(path.string() + ": singer list length");
  Dataset out(expected, c.meta.at("n_phones").get<int>(), c.meta.at("has_labels").get<bool>());
  for (size_t i = 0; i < n; ++i) {
    Utterance u;
    u.singer_id = singers[i];
    std::vector<int64_t> shape;
    const auto mel = c.read<float>(item_key(i, "mel"), &shape);
    if (shape.size() != 2) throw io::ContainerError(path.string() + ": mel must be 2-D");
    u.mel.values = nn::ConstMatMap<float>(mel.data(), shape[0], shape[1]);
    u.f0.f0_hz = c.read<float>(item_key(i, "f0"));
    u.f0.voiced = c.read<uint8_t>(item_key(i, "voiced"));
    u.audio.samples = c.read<float>(item_key(i, "audio"));
    u.audio.sample_rate = expected.sample_rate;
    if (out.has_labels()) u.phones = c.read<int32_t>(item_key(i, "phones"));
    out.add(std::move(u));
  }
  return out;
}

std::vector<PhoneTiming> read_phone_timings(const std::filesystem::path& path,
                                            const PhoneInventory& inventory) {
  auto in = open_text(path);
  std::vector<PhoneTiming> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string symbol;
    PhoneTiming t{};
    if (!(ss >> symbol >> t.start_s >> t.end_s) || !(t.end_s > t.start_s)) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'phone start end' with end > start");
    }
    t.phone = inventory.id(symbol);
    out.push_back(t);
  }
  if (out.empty()) throw std::invalid_argument(path.string() + ": no phone timings");
  return out;
}

void write_phone_timings(const std::filesystem::path& path, const std::vector<int32_t>& frames,
                         const PhoneInventory& inventory, const dsp::FeatureConfig& features) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const double hop_s = features.hop_ms / 1000.0;
  size_t j = 0;
  while (j < frames.size()) {
    size_t k = j;
    while (k < frames.size() && frames[k] == frames[j]) ++k;
    // The last span ends at the last frame's time, so n frames read back as
    // a duration of (n - 1) hops; a one-frame final span keeps a short tail.
    double end = k * hop_s;
    if (k == frames.size()) end = (k - 1 > j ? double(k - 1) : j + 0.4) * hop_s;
    out << inventory.symbol(frames[j]) << ' ' << j * hop_s << ' ' << end << '\n';
    j = k;
  }
}

std::vector<std::pair<double, double>> read_f0_file(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::vector<std::pair<double, double>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, f;
    if (!(ss >> t >> f)) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'time f0'");
    }
    if (!out.empty() && t <= out.back().first) {
      throw std::invalid_argument(path.string() + ": times must increase");
    }
    out.emplace_back(t, f);
  }
  if (out.empty()) throw std::invalid_argument(path.string() + ": no F0 points");
  return out;
}

void write_f0_file(const std::filesystem::path& path, const dsp::F0Track& f0,
                   const dsp::FeatureConfig& features) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const double hop_s = features.hop_ms / 1000.0;
  for (Index j = 0; j < f0.n_frames(); ++j) {
    out << j * hop_s << ' ' << (f0.voiced[j] ? f0.f0_hz[j] : 0.0f) << '\n';
  }
}

std::vector<int32_t> timings_to_frames(const std::vector<PhoneTiming>& timings, Index n_frames,
                                       const dsp::FeatureConfig& features) {
  if (timings.empty()) throw std::invalid_argument("timings_to_frames: no timings");
  const double hop_s = features.hop_ms / 1000.0;
  std::vector<int32_t> out(n_frames, timings.front().phone);
  for (const auto& t : timings) {
    const Index a = std::max<Index>(0, std::lround(t.start_s / hop_s));
    const Index b = std::min<Index>(n_frames, std::lround(t.end_s / hop_s));
    for (Index j = a; j < b; ++j) out[j] = t.phone;
  }
  // Frames past the last span keep the last phone.
  const Index tail = std::lround(timings.back().end_s / hop_s);
  for (Index j = std::max<Index>(0, tail); j < n_frames; ++j) out[j] = timings.back().phone;
  return out;
}

dsp::F0Track f0_points_to_track(const std::vector<std::pair<double, double>>& points,
                                Index n_frames, const dsp::FeatureConfig& features) {
  if (points.empty()) throw std::invalid_argument("f0_points_to_track: no points");
  const double hop_s = features.hop_ms / 1000.0;
  dsp::F0Track track;
  track.f0_hz.assign(n_frames, 0.0f);
  track.voiced.assign(n_frames, 0);
  size_t k = 0;
  for (Index j = 0; j < n_frames; ++j) {
    const double t = j * hop_s;
    while (k + 1 < points.size() && points[k + 1].first <= t) ++k;
    double f;
    if (t <= points.front().first) {
      f = points.front().second;
    } else if (k + 1 >= points.size()) {
      f = points.back().second;
    } else {
      const auto [t0, f0] = points[k];
      const auto [t1, f1] = points[k + 1];
      // Interpolate only between two voiced points.
      if (f0 > 0 && f1 > 0) {
        f = f0 + (f1 - f0) * (t - t0) / (t1 - t0);
      } else {
        f = (t - t0) < (t1 - t) ? f0 : f1;
      }
    }
    if (f > 0) {
      track.f0_hz[j] = static_cast<float>(f);
      track.voiced[j] = 1;
    }
  }
  return track;
}

}  // namespace timbre::corpus
