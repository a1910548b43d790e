#pragma once

// The timbre model: acoustic and linguistic encoders producing interchangeable
// frame embeddings, a non-causal long-scope decoder D1 and a causal
// autoregressive short-scope decoder D2.
//
//   e     = k E_A(x_aug) + (1 - k) E_L(y)
//   c     = [F0 (2) | speaker (S)]
//   x_hat = D2(shift(x) + eps2, [D1([e + eps1, c]), c])
//   L     = l_recon mean((x - x_hat)^2) + l_enc mean((E_A(x_aug) - E_L(y))^2)
//
// Mel frames are mapped to (x - mel_offset) * mel_scale inside the network;
// losses and outputs are in log-mel units.

#include "timbre/corpus.hpp"
#include "timbre/nn/block.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

namespace timbre::model {

using nn::Index;
using nn::Mat;
using nn::ParamSet;

struct ModelConfig {
  int n_bands = 100;
  int n_phones = 12;
  int embedding_dim = 120;
  int speaker_dim = 16;
  int max_speakers = 16;

  int encoder_channels = 70;
  int encoder_kernel = 3;
  std::vector<int> encoder_dilations{1, 2, 4, 1, 2, 4, 1, 2, 4};
  int d1_channels = 70;
  int d1_out = 120;
  std::vector<int> d1_dilations{1, 2, 4, 1, 2, 4, 1, 2, 4, 1};
  int d2_channels = 200;
  int d2_hidden = 200;
  int d2_kernel = 2;
  std::vector<int> d2_dilations{1, 2, 4, 8, 16, 1, 2, 4};

  // false: the supervised baseline, which has no acoustic encoder.
  bool acoustic_encoder = true;
  // true: c conditions every gated layer; false: c is only concatenated to
  // the block inputs.
  bool per_layer_conditioning = true;
  double leaky_alpha = 0.2;

  double mel_offset = -5.0;
  double mel_scale = 1.0 / 6.0;
  double f0_log_min = 4.382026634673881;  // log(80)
  double f0_log_max = 6.684611727667927;  // log(800)

  static ModelConfig paper(int n_phones = 12);
  // Quarter channel widths, same depths and dilations.
  static ModelConfig toy(int n_phones = 12);

  int control_dim() const { return 2 + speaker_dim; }
  void validate() const;
  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::shared_ptr<const nn::ParamLayout> layout() const { return layout_; }
  const nn::BlockLayout& acoustic_encoder() const;
  const nn::BlockLayout& linguistic_encoder() const { return el_; }
  const nn::BlockLayout& d1() const { return d1_; }
  const nn::BlockLayout& d2() const { return d2_; }
  int speaker_table() const { return speaker_table_; }
  bool has_acoustic_encoder() const { return config_.acoustic_encoder; }

  // Frames of context each side of a segment's valid region so that no
  // valid output sees zero padding.
  Index context_frames() const;

  template <typename T>
  ParamSet<T> init(uint64_t seed) const;

  // Parameter ids by group: "E_A/", "E_L/", "D1/", "D2/", "spk/".
  std::vector<int> group(const std::string& prefix) const { return layout_->group(prefix); }

 private:
  ModelConfig config_;
  std::shared_ptr<nn::ParamLayout> layout_;
  nn::BlockLayout ea_, el_, d1_, d2_;
  int speaker_table_ = -1;
};

// B sequences of equal length stacked along rows.
template <typename T>
struct Batch {
  Index seq_len = 0;
  Mat<T> mel;       // [B*T x bands] target log-mel
  Mat<T> acoustic;  // [B*T x bands] acoustic encoder input (possibly transposed)
  Mat<T> phones;    // [B*T x n_phones] one-hot; empty when unlabelled
  Mat<T> f0;        // [B*T x 2] normalized F0
  std::vector<int> speakers;  // one per sequence
  std::vector<T> mask;        // one per row; 1 on frames that enter the loss

  Index sequences() const { return seq_len > 0 ? mel.rows() / seq_len : 0; }
  Index rows() const { return mel.rows(); }
};

template <typename T>
Mat<T> one_hot(const std::vector<int32_t>& phones, int n_phones);

dsp::F0Stats f0_stats(const ModelConfig& config);

// acoustic[b] replaces the encoder input of segment b when given.
template <typename T>
Batch<T> make_batch(const Model& model, const std::vector<corpus::Segment>& segments,
                    const std::vector<dsp::MelSpectrogram>* acoustic = nullptr);

// Whole utterance i as a single-sequence batch with every frame unmasked.
template <typename T>
Batch<T> utterance_batch(const Model& model, const corpus::Dataset& data, size_t i,
                         bool with_labels);

// ---------------------------------------------------------------------------
// Building blocks of the forward pass.

template <typename T>
Mat<T> encode_acoustic(const Model& model, const ParamSet<T>& params, const Mat<T>& mel,
                       Index seq_len);
template <typename T>
Mat<T> encode_linguistic(const Model& model, const ParamSet<T>& params, const Mat<T>& phones,
                         Index seq_len);
// e = k eA + (1 - k) eL, k in {0, 1}.
template <typename T>
Mat<T> switch_embedding(const Mat<T>& ea, const Mat<T>& el, int k);
// [F0 | speaker row], speaker broadcast over each sequence.
template <typename T>
Mat<T> control_track(const Model& model, const ParamSet<T>& params, const Mat<T>& f0,
                     const std::vector<int>& speakers, Index seq_len);

template <typename T>
Mat<T> normalize_mel(const Model& model, const Mat<T>& mel);
template <typename T>
Mat<T> denormalize_mel(const Model& model, const Mat<T>& mel_n);

struct NoiseSpec {
  double sigma1 = 0.3;
  double sigma2 = 0.2;
  double switch_p = 0.5;
  void validate() const;
};

// x_hat from embedding e, control c and the teacher-forced history of x.
template <typename T>
Mat<T> decode_teacher_forced(const Model& model, const ParamSet<T>& params, const Mat<T>& e,
                             const Mat<T>& c, const Mat<T>& x_target, Index seq_len,
                             const NoiseSpec& noise, uint64_t seed);

// ---------------------------------------------------------------------------
// Training objective.

enum class LossMode {
  kSwitch,      // both encoders, k ~ Bernoulli(switch_p) per sequence
  kAcoustic,    // k = 1, E_L not evaluated, no L_enc
  kLinguistic,  // k = 0, E_A not evaluated, no L_enc
};

struct LossOptions {
  LossMode mode = LossMode::kSwitch;
  NoiseSpec noise;
  double lambda_recon = 1.0;
  double lambda_enc = 0.2;
  bool train_encoders = true;  // false: no gradient reaches E_A / E_L
  std::optional<int> fixed_k;  // kSwitch only: overrides the draw
};

struct LossTerms {
  double total = 0;
  double recon = 0;
  double enc = 0;
  std::vector<int> k;  // per sequence
};

// Intermediate values of one evaluation, for inspection.
template <typename T>
struct Trace {
  Mat<T> ea, el, e;
  Mat<T> d1_input;  // [e + eps1 | c]
  Mat<T> d2_input;  // shifted normalized target + eps2
  Mat<T> x_hat;     // log-mel
};

// All randomness (k, eps1, eps2) comes from `seed`. Gradients are
// accumulated into `grads` when given.
template <typename T>
LossTerms loss_terms(const Model& model, const ParamSet<T>& params, const Batch<T>& batch,
                     const LossOptions& options, uint64_t seed,
                     std::type_identity_t<ParamSet<T>>* grads = nullptr,
                     std::type_identity_t<Trace<T>>* trace = nullptr);

// ---------------------------------------------------------------------------
// Inference (noise-free, single utterance).

// D2 is stepped frame by frame on its own predictions, starting from a zero
// history. With `forced_history`, frame t is fed forced_history[t-1] instead.
template <typename T>
Mat<T> decode_autoregressive(const Model& model, const ParamSet<T>& params, const Mat<T>& e,
                             const Mat<T>& c, const Mat<T>* forced_history = nullptr);

template <typename T>
Mat<T> infer_autoregressive(const Model& model, const ParamSet<T>& params, const Mat<T>& phones,
                            const Mat<T>& f0, int speaker);

template <typename T>
Mat<T> infer_voice_conversion(const Model& model, const ParamSet<T>& params,
                              const Mat<T>& mel_source, const Mat<T>& f0, int speaker);

}  // namespace timbre::model
