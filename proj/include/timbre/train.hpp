#pragma once

// Optimization: learning-rate schedule, Adam, checkpoints and the three
// training phases (supervised encoder-decoder training, decoder adaptation
// from audio only, cloning).

#include "timbre/model.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace timbre::train {

using model::Model;
using model::ModelConfig;
using nn::Index;
using nn::ParamSet;

struct TrainConfig {
  int batch_size = 12;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double base_lr = 5e-4;
  int warmup = 700;
  double decay_factor = 0.15;
  int decay_steps = 10000;
  double lambda_recon = 1.0;
  double lambda_enc = 0.2;
  double sigma1 = 0.3;
  double sigma2 = 0.2;
  double switch_p = 0.5;
  double clip_norm = 5.0;  // 0 disables clipping
  int max_steps = 20000;
  uint64_t seed = 1;
  int valid_frames = 300;
  double augment_semitones = 4.0;  // transposition range, +/-; 0 disables
  int checkpoint_every = 0;        // 0: only at the end

  void validate() const;
  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// base_lr * min(step / warmup, 1) * decay_factor^(max(0, step - warmup) / decay_steps)
double lr_schedule(int64_t step, const TrainConfig& config);

// Adam with bias correction. Parameters marked frozen are never read or
// written, and neither are their moments.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::shared_ptr<const nn::ParamLayout> layout, double beta1, double beta2, double eps);

  void step(ParamSet<T>& params, const ParamSet<T>& grads, double lr,
            const std::vector<uint8_t>& trainable);
  int64_t t() const { return t_; }

  ParamSet<T>& m() { return m_; }
  ParamSet<T>& v() { return v_; }
  const ParamSet<T>& m() const { return m_; }
  const ParamSet<T>& v() const { return v_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  ParamSet<T> m_, v_;
  int64_t t_ = 0;
};

// Global L2 norm over trainable tensors; scales them down to max_norm.
// Returns the norm before clipping.
double clip_global_norm(ParamSet<float>& grads, const std::vector<uint8_t>& trainable,
                        double max_norm);

// Per parameter id: 1 unless its name starts with one of `frozen_prefixes`.
std::vector<uint8_t> trainable_mask(const nn::ParamLayout& layout,
                                    const std::vector<std::string>& frozen_prefixes);

// Stable hash over feature configuration, singers, labels presence and mel
// values.
std::string dataset_fingerprint(const corpus::Dataset& data);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ParamSet<float> params;
  Adam<float> adam;
  int64_t step = 0;
  std::string phase;  // "supervised", "adapt", "clone-supervised", "init"
  std::string corpus_fingerprint;
  nlohmann::json extra = nlohmann::json::object();
};

// Fresh parameters and optimizer state for `config`.
Checkpoint initial_checkpoint(const ModelConfig& model, const TrainConfig& train);

// The container fingerprint is the model configuration fingerprint, so a
// checkpoint cannot be loaded into a different architecture.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

struct StepRecord {
  int64_t step = 0;  // number of updates applied, after this one
  double lr = 0;
  double loss = 0;
  double recon = 0;
  double enc = 0;
  double grad_norm = 0;
  double wall_time = 0;  // seconds since the run started
};

nlohmann::json to_json(const StepRecord& r);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Phase {
  std::string name;
  model::LossMode mode = model::LossMode::kSwitch;
  std::vector<std::string> frozen;  // parameter name prefixes
  bool augment = true;
  bool use_labels = true;
};

struct RunHooks {
  std::function<void(const StepRecord&)> on_step;
  // Periodic and divergence checkpoints go here when set.
  std::optional<std::filesystem::path> checkpoint_path;
};

// Continue `ckpt` on `data` until ckpt.step == until_step. Batches, k, noise
// and transposition factors depend only on (seed, step), so a resumed run
// retraces an uninterrupted one.
void run_phase(const Model& model, Checkpoint& ckpt, const corpus::Dataset& data,
               const Phase& phase, int64_t until_step, const RunHooks& hooks = {});

// Phase A: E_A, E_L, D1, D2 and speakers trained jointly on labelled
// multi-singer data. A model without an acoustic encoder trains E_L, D1, D2
// only (supervised baseline).
Checkpoint train_supervised(const corpus::Dataset& data, const ModelConfig& model,
                            const TrainConfig& config, const RunHooks& hooks = {});

// Phase B: encoders frozen, k = 1, reconstruction loss only, labels never
// read. The decoder is warm-started unless from_scratch.
Checkpoint adapt_decoder(const Checkpoint& phase_a, const corpus::Dataset& target,
                         const TrainConfig& config, bool from_scratch = false,
                         const RunHooks& hooks = {});

// supervised = false: adapt_decoder on the small corpus. supervised = true:
// fine-tune every parameter on the labelled small corpus.
Checkpoint clone(const Checkpoint& phase_a, const corpus::Dataset& small,
                 const TrainConfig& config, bool supervised, const RunHooks& hooks = {});

// True when every parameter under `prefix` is bitwise equal in a and b.
bool same_bytes(const ParamSet<float>& a, const ParamSet<float>& b, const std::string& prefix);

}  // namespace timbre::train
