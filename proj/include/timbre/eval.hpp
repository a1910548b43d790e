#pragma once

// Objective metrics, the experiment matrix, inference drivers and mel plots.

#include "timbre/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace timbre::eval {

using nn::Index;
using nn::Mat;
using nn::ParamSet;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ProbeResult {
  double train_accuracy = kNaN;
  double test_accuracy = kNaN;
  double balanced_test_accuracy = kNaN;  // mean per-class recall
  int train_frames = 0;
  int test_frames = 0;
};

// Metrics are NaN where they do not apply (no acoustic encoder, reference row).
struct MetricReport {
  std::string system;
  int n_utterances = 0;
  int64_t n_frames = 0;
  double recon_teacher_forced = kNaN;  // linguistic path, noise-free
  double recon_autoregressive = kNaN;  // linguistic path
  double recon_acoustic = kNaN;        // acoustic path, teacher-forced
  double embedding_distance = kNaN;    // mean per-frame L2, E_A vs E_L
  ProbeResult probe_linguistic;
  ProbeResult probe_acoustic;
  double invariance_ratio = kNaN;
  double invariance_shift = kNaN;
  double phone_distance = kNaN;
};

nlohmann::json to_json(const MetricReport& r);

struct EvalOptions {
  int max_utterances = 0;  // 0: all
  bool autoregressive = true;
  double invariance_semitones = 2.0;
  int probe_block = 25;  // frames per split block; every third block is held out
  int probe_iterations = 300;
  double probe_lr = 0.05;
  double probe_l2 = 1e-4;
};

void to_json(nlohmann::json& j, const EvalOptions& o);
void from_json(const nlohmann::json& j, EvalOptions& o);

// Mean squared error over every frame and band.
double mel_mse(const Mat<float>& a, const Mat<float>& b);

// Multinomial logistic regression on frozen features. Frames are cut into
// blocks of `block`; blocks 0, 1 train and block 2 tests, repeating.
ProbeResult phone_probe(const Mat<float>& features, const std::vector<int32_t>& labels,
                        int n_classes, const EvalOptions& options);

// Mean over frames and +/- semitone shifts of |E_A(x) - E_A(shift(x))|, the
// mean pairwise distance between phone centroids of E_A(x), and their ratio.
struct Invariance {
  double shift = kNaN;
  double phone_distance = kNaN;
  double ratio = kNaN;
};
Invariance transposition_invariance(const model::Model& model, const ParamSet<float>& params,
                                    const corpus::Dataset& data, const EvalOptions& options);

// Needs labels. Each utterance is decoded with its own singer's row.
MetricReport evaluate(const train::Checkpoint& ckpt, const corpus::Dataset& validation,
                      const EvalOptions& options = {}, const std::string& system = "");

// Mel error after Griffin-Lim resynthesis and re-analysis: the floor set by
// the feature representation itself.
MetricReport reference_report(const corpus::Dataset& validation, const EvalOptions& options = {},
                              int iterations = 32);

struct MatrixConfig {
  model::ModelConfig model;
  train::TrainConfig phase_a;      // multi-singer, both encoders
  train::TrainConfig supervised;   // target only, no acoustic encoder
  train::TrainConfig adapt;        // target audio
  train::TrainConfig pretrain;     // multi-singer, no acoustic encoder
  train::TrainConfig clone;        // cloning subset, both variants
  EvalOptions eval;
  int reference_iterations = 32;
};

void to_json(nlohmann::json& j, const MatrixConfig& c);
void from_json(const nlohmann::json& j, MatrixConfig& c);

struct MatrixHooks {
  // Called for every training step of every run, tagged with the run name.
  std::function<void(const std::string&, const train::StepRecord&)> on_step;
  // Called once per finished run.
  std::function<void(const std::string&, const train::Checkpoint&)> on_checkpoint;
};

// Rows: supervised, semi-supervised, supervised-cloning,
// semi-supervised-cloning, reference. Every row is scored on the target
// validation set.
std::vector<MetricReport> run_experiment_matrix(const corpus::ExperimentCorpora& corpora,
                                                const MatrixConfig& config,
                                                const MatrixHooks& hooks = {});

// ---------------------------------------------------------------------------
// Inference drivers.

class DurationMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Frames covering `seconds`: round(seconds / hop) + 1.
Index frames_for_duration(double seconds, const dsp::FeatureConfig& features);

// Phone timings and F0 points must end within one frame of each other.
dsp::MelSpectrogram synthesize(const train::Checkpoint& ckpt,
                               const std::vector<corpus::PhoneTiming>& timings,
                               const std::vector<std::pair<double, double>>& f0_points,
                               int speaker, const dsp::FeatureConfig& features);

// Mel of `source` re-rendered with `speaker`'s decoder conditioning.
dsp::MelSpectrogram convert(const train::Checkpoint& ckpt, const dsp::AudioClip& source,
                            const std::vector<std::pair<double, double>>& f0_points, int speaker,
                            const dsp::FeatureConfig& features);

void save_mel(const dsp::MelSpectrogram& mel, const dsp::FeatureConfig& features,
              const std::filesystem::path& path, const nlohmann::json& meta = {});
dsp::MelSpectrogram load_mel(const std::filesystem::path& path,
                             dsp::FeatureConfig* features = nullptr);

// ---------------------------------------------------------------------------
// Plots.

struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // row-major, top row first
};

// Heatmap of the mel (one image row per band, low bands at the bottom), then
// nearest-neighbour scaled by `scale`. Values map linearly from [lo, hi] onto
// the colour ramp; lo == hi picks the data range.
Image render_mel(const dsp::MelSpectrogram& mel, int scale = 1, double lo = 0, double hi = 0);

// render_mel framed with axes, ticks and labels ("time (s)", "mel band").
Image render_mel_figure(const dsp::MelSpectrogram& mel, double hop_seconds, int scale = 2);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace timbre::eval
