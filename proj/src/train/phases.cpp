#include "timbre/train.hpp"

#include "timbre/util/log.hpp"
#include "timbre/util/random.hpp"

#include <cmath>

namespace timbre::train {

nlohmann::json to_json(const StepRecord& r) {
  return {{"step", r.step},   {"lr", r.lr},           {"L", r.loss},
          {"L_recon", r.recon}, {"L_enc", r.enc},     {"grad_norm", r.grad_norm},
          {"wall_time", r.wall_time}};
}

namespace {

bool all_finite(const ParamSet<float>& g) {
  for (float v : g.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<dsp::MelSpectrogram> transposed_inputs(const std::vector<corpus::Segment>& segs,
                                                   const corpus::Dataset& data, double semitones,
                                                   uint64_t seed) {
  std::vector<double> factors;
  util::Rng rng(seed);
  std::uniform_real_distribution<double> u(-semitones, semitones);
  for (size_t i = 0; i < segs.size(); ++i) factors.push_back(std::pow(2.0, u(rng) / 12.0));
  std::vector<dsp::MelSpectrogram> out(segs.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < segs.size(); ++i) {
    out[i] = dsp::transpose_augment(segs[i].audio, segs[i].length(), factors[i], data.features());
  }
  return out;
}

}  // namespace

void run_phase(const Model& model, Checkpoint& ckpt, const corpus::Dataset& data,
               const Phase& phase, int64_t until_step, const RunHooks& hooks) {
  const TrainConfig& cfg = ckpt.train;
  cfg.validate();
  if (ckpt.model.fingerprint() != model.config().fingerprint()) {
    throw std::invalid_argument("run_phase: checkpoint belongs to a different model");
  }
  if (data.empty()) throw std::invalid_argument("run_phase: empty dataset");
  if (phase.use_labels && !data.has_labels()) {
    throw std::invalid_argument("run_phase: phase '" + phase.name + "' needs labelled data");
  }
  model::LossMode mode = phase.mode;
  if (mode == model::LossMode::kSwitch && !model.has_acoustic_encoder()) {
    mode = model::LossMode::kLinguistic;
  }
  const bool augment = phase.augment && cfg.augment_semitones > 0 &&
                       mode != model::LossMode::kLinguistic;
  const auto trainable = trainable_mask(ckpt.params.layout(), phase.frozen);
  bool encoders_frozen = true;
  for (const char* prefix : {"E_A/", "E_L/"}) {
    for (int id : ckpt.params.layout().group(prefix)) encoders_frozen &= trainable[id] == 0;
  }

  corpus::SegmentOptions so;
  so.batch_size = cfg.batch_size;
  so.valid_frames = cfg.valid_frames;
  so.context_frames = model.context_frames();
  so.with_labels = phase.use_labels;
  so.with_audio = augment;
  const uint64_t phase_seed = util::derive_seed(cfg.seed, util::fnv1a64(phase.name));
  const corpus::SegmentIterator it(data, so, phase_seed);

  model::LossOptions opt;
  opt.mode = mode;
  opt.noise = {cfg.sigma1, cfg.sigma2, cfg.switch_p};
  opt.lambda_recon = cfg.lambda_recon;
  opt.lambda_enc = cfg.lambda_enc;
  opt.train_encoders = !encoders_frozen;

  const uint64_t reads_before = data.label_reads();
  ParamSet<float> grads(ckpt.params.layout_ptr());
  const auto start = std::chrono::steady_clock::now();
  while (ckpt.step < until_step) {
    const int64_t s = ckpt.step;
    const auto segs = it.batch(uint64_t(s));
    std::vector<dsp::MelSpectrogram> acoustic;
    if (augment) {
      acoustic = transposed_inputs(segs, data, cfg.augment_semitones,
                                   util::derive_seed(phase_seed, 0xa06, uint64_t(s)));
    }
    const auto batch = model::make_batch<float>(model, segs, augment ? &acoustic : nullptr);
    grads.set_zero();
    const auto terms = model::loss_terms<float>(
        model, ckpt.params, batch, opt, util::derive_seed(phase_seed, 0x1055, uint64_t(s)),
        &grads);
    if (!std::isfinite(terms.total) || !all_finite(grads)) {
      if (hooks.checkpoint_path) save_checkpoint(ckpt, *hooks.checkpoint_path);
      throw DivergenceError("training diverged at step " + std::to_string(s) + " (L = " +
                            std::to_string(terms.total) + ")");
    }
    StepRecord rec;
    rec.grad_norm = clip_global_norm(grads, trainable, cfg.clip_norm);
    rec.lr = lr_schedule(s + 1, cfg);
    ckpt.adam.step(ckpt.params, grads, rec.lr, trainable);
    ckpt.step = s + 1;
    rec.step = ckpt.step;
    rec.loss = terms.total;
    rec.recon = terms.recon;
    rec.enc = terms.enc;
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (hooks.on_step) hooks.on_step(rec);
    if (hooks.checkpoint_path && cfg.checkpoint_every > 0 &&
        ckpt.step % cfg.checkpoint_every == 0) {
      save_checkpoint(ckpt, *hooks.checkpoint_path);
    }
  }
  if (!phase.use_labels && data.label_reads() != reads_before) {
    throw std::logic_error("phase '" + phase.name + "' read annotations");
  }
}

Checkpoint train_supervised(const corpus::Dataset& data, const ModelConfig& model_config,
                            const TrainConfig& config, const RunHooks& hooks) {
  const Model model(model_config);
  Checkpoint ckpt = initial_checkpoint(model_config, config);
  ckpt.phase = "supervised";
  ckpt.corpus_fingerprint = dataset_fingerprint(data);
  ckpt.extra["singers"] = data.singers();
  Phase phase{"supervised", model::LossMode::kSwitch, {}, true, true};
  run_phase(model, ckpt, data, phase, config.max_steps, hooks);
  return ckpt;
}

namespace {

Checkpoint restart_from(const Checkpoint& base, const TrainConfig& config, const char* phase,
                        const corpus::Dataset& data) {
  config.validate();
  const Model model(base.model);
  Checkpoint ckpt;
  ckpt.model = base.model;
  ckpt.train = config;
  ckpt.params = base.params;
  ckpt.adam = Adam<float>(ckpt.params.layout_ptr(), config.beta1, config.beta2, config.adam_eps);
  ckpt.step = 0;
  ckpt.phase = phase;
  ckpt.corpus_fingerprint = dataset_fingerprint(data);
  ckpt.extra = base.extra;
  ckpt.extra["base_phase"] = base.phase;
  ckpt.extra["base_corpus_fingerprint"] = base.corpus_fingerprint;
  ckpt.extra["target_singers"] = data.singers();
  return ckpt;
}

Checkpoint adapt(const Checkpoint& phase_a, const corpus::Dataset& target,
                 const TrainConfig& config, bool from_scratch, const RunHooks& hooks,
                 const char* name) {
  const Model model(phase_a.model);
  if (!model.has_acoustic_encoder()) {
    throw std::invalid_argument("adapt_decoder: the checkpoint has no acoustic encoder");
  }
  Checkpoint ckpt = restart_from(phase_a, config, name, target);
  if (from_scratch) {
    const auto fresh = model.init<float>(util::derive_seed(config.seed, 0xf5e5));
    for (const char* prefix : {"D1/", "D2/"}) {
      for (int id : model.group(prefix)) {
        const auto src = fresh.span(id);
        std::copy(src.begin(), src.end(), ckpt.params.span(id).begin());
      }
    }
  }
  Phase phase{name, model::LossMode::kAcoustic, {"E_A/", "E_L/"}, false, false};
  run_phase(model, ckpt, target, phase, config.max_steps, hooks);
  for (const char* prefix : {"E_A/", "E_L/"}) {
    if (!same_bytes(ckpt.params, phase_a.params, prefix)) {
      throw std::logic_error(std::string("adapt_decoder: ") + prefix + " changed while frozen");
    }
  }
  return ckpt;
}

}  // namespace

Checkpoint adapt_decoder(const Checkpoint& phase_a, const corpus::Dataset& target,
                         const TrainConfig& config, bool from_scratch, const RunHooks& hooks) {
  return adapt(phase_a, target, config, from_scratch, hooks, "adapt");
}

Checkpoint clone(const Checkpoint& phase_a, const corpus::Dataset& small,
                 const TrainConfig& config, bool supervised, const RunHooks& hooks) {
  if (!supervised) return adapt(phase_a, small, config, false, hooks, "clone");
  const Model model(phase_a.model);
  Checkpoint ckpt = restart_from(phase_a, config, "clone-supervised", small);
  Phase phase{"clone-supervised", model::LossMode::kSwitch, {}, true, true};
  run_phase(model, ckpt, small, phase, config.max_steps, hooks);
  return ckpt;
}

}  // namespace timbre::train
