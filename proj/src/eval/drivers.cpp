#include "timbre/container.hpp"
#include "timbre/eval.hpp"

#include <cmath>

namespace timbre::eval {

namespace {

void check_speaker(const model::ModelConfig& cfg, int speaker) {
  if (speaker < 0 || speaker >= cfg.max_speakers) {
    throw std::invalid_argument("speaker " + std::to_string(speaker) + " outside [0, " +
                                std::to_string(cfg.max_speakers) + ")");
  }
}

void check_bands(const model::ModelConfig& cfg, const dsp::FeatureConfig& features) {
  if (features.n_bands != cfg.n_bands) {
    throw std::invalid_argument("feature config has " + std::to_string(features.n_bands) +
                                " bands, model expects " + std::to_string(cfg.n_bands));
  }
}

}  // namespace

Index frames_for_duration(double seconds, const dsp::FeatureConfig& features) {
  if (!(seconds >= 0)) throw std::invalid_argument("frames_for_duration: negative duration");
  return static_cast<Index>(std::lround(seconds * 1000.0 / features.hop_ms)) + 1;
}

dsp::MelSpectrogram synthesize(const train::Checkpoint& ckpt,
                               const std::vector<corpus::PhoneTiming>& timings,
                               const std::vector<std::pair<double, double>>& f0_points,
                               int speaker, const dsp::FeatureConfig& features) {
  const model::Model model(ckpt.model);
  const auto& cfg = ckpt.model;
  check_speaker(cfg, speaker);
  check_bands(cfg, features);
  if (timings.empty()) throw std::invalid_argument("synthesize: no phone timings");
  if (f0_points.empty()) throw std::invalid_argument("synthesize: no F0 points");
  for (const auto& t : timings) {
    if (t.phone < 0 || t.phone >= cfg.n_phones) {
      throw std::invalid_argument("synthesize: phone id " + std::to_string(t.phone) +
                                  " outside the model inventory");
    }
  }
  const double end = timings.back().end_s;
  const double f0_end = f0_points.back().first;
  const double hop_s = features.hop_ms / 1000.0;
  if (std::abs(end - f0_end) > hop_s + 1e-9) {
    throw DurationMismatch("phone timings end at " + std::to_string(end) + " s, F0 at " +
                           std::to_string(f0_end) + " s (more than one frame apart)");
  }
  const Index n = frames_for_duration(end, features);
  const auto phones = corpus::timings_to_frames(timings, n, features);
  const auto track = corpus::f0_points_to_track(f0_points, n, features);
  const Mat<float> f0 = dsp::normalize_f0(track, model::f0_stats(cfg));
  dsp::MelSpectrogram out;
  out.values = model::infer_autoregressive<float>(model, ckpt.params,
                                                  model::one_hot<float>(phones, cfg.n_phones),
                                                  f0, speaker);
  return out;
}

dsp::MelSpectrogram convert(const train::Checkpoint& ckpt, const dsp::AudioClip& source,
                            const std::vector<std::pair<double, double>>& f0_points, int speaker,
                            const dsp::FeatureConfig& features) {
  const model::Model model(ckpt.model);
  check_speaker(ckpt.model, speaker);
  check_bands(ckpt.model, features);
  if (!model.has_acoustic_encoder()) {
    throw std::invalid_argument("convert: the checkpoint has no acoustic encoder");
  }
  if (f0_points.empty()) throw std::invalid_argument("convert: F0 is required");
  const auto mel = dsp::compute_mel(source, features);
  const auto track = corpus::f0_points_to_track(f0_points, mel.n_frames(), features);
  dsp::MelSpectrogram out;
  out.values = model::infer_voice_conversion<float>(
      model, ckpt.params, mel.values, dsp::normalize_f0(track, model::f0_stats(ckpt.model)),
      speaker);
  return out;
}

void save_mel(const dsp::MelSpectrogram& mel, const dsp::FeatureConfig& features,
              const std::filesystem::path& path, const nlohmann::json& meta) {
  io::Container c;
  c.fingerprint = features.fingerprint();
  c.meta["kind"] = "mel";
  c.meta["feature_config"] = features;
  if (!meta.is_null()) c.meta["info"] = meta;
  c.add<float>("mel", {mel.n_frames(), mel.n_bands()},
               {mel.values.data(), size_t(mel.values.size())});
  io::write_container(c, path);
}

dsp::MelSpectrogram load_mel(const std::filesystem::path& path, dsp::FeatureConfig* features) {
  const auto c = io::read_container(path);
  std::vector<int64_t> shape;
  dsp::MelSpectrogram mel;
  if (c.meta.value("kind", "") == "mel") {
    const auto v = c.read<float>("mel", &shape);
    if (shape.size() != 2) throw io::ContainerError(path.string() + ": mel is not 2-D");
    mel.values = Eigen::Map<const Mat<float>>(v.data(), shape[0], shape[1]);
  } else if (c.meta.value("kind", "") == "features" && c.contains("utt/00000/mel")) {
    // First utterance of a feature file.
    const auto v = c.read<float>("utt/00000/mel", &shape);
    mel.values = Eigen::Map<const Mat<float>>(v.data(), shape.at(0), shape.at(1));
  } else {
    throw io::ContainerError(path.string() + ": no mel spectrogram");
  }
  if (features) c.meta.at("feature_config").get_to(*features);
  return mel;
}

}  // namespace timbre::eval
