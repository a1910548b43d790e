#include "timbre/train.hpp"

#include "timbre/util/random.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace timbre::train {

void TrainConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw std::invalid_argument(std::string("TrainConfig: ") + what + " must be > 0");
  };
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("TrainConfig: Adam betas must be in [0, 1)");
  }
  positive(adam_eps, "adam_eps");
  positive(base_lr, "base_lr");
  if (warmup < 1) throw std::invalid_argument("TrainConfig: warmup must be >= 1");
  positive(decay_factor, "decay_factor");
  if (decay_steps < 1) throw std::invalid_argument("TrainConfig: decay_steps must be >= 1");
  if (!(lambda_recon >= 0) || !(lambda_enc >= 0)) {
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  }
  model::NoiseSpec{sigma1, sigma2, switch_p}.validate();
  if (!(clip_norm >= 0)) throw std::invalid_argument("TrainConfig: clip_norm must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
  if (valid_frames < 1) throw std::invalid_argument("TrainConfig: valid_frames must be >= 1");
  if (!(augment_semitones >= 0)) throw std::invalid_argument("TrainConfig: augment_semitones");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"base_lr", c.base_lr},
       {"warmup", c.warmup},
       {"decay_factor", c.decay_factor},
       {"decay_steps", c.decay_steps},
       {"lambda_recon", c.lambda_recon},
       {"lambda_enc", c.lambda_enc},
       {"sigma1", c.sigma1},
       {"sigma2", c.sigma2},
       {"switch_p", c.switch_p},
       {"clip_norm", c.clip_norm},
       {"max_steps", c.max_steps},
       {"seed", c.seed},
       {"valid_frames", c.valid_frames},
       {"augment_semitones", c.augment_semitones},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  nlohmann::json full = c;
  for (const auto& [key, value] : j.items()) {
    if (!full.contains(key)) throw std::invalid_argument("train: unknown key '" + key + "'");
    full[key] = value;
  }
  c.batch_size = full["batch_size"];
  c.beta1 = full["beta1"];
  c.beta2 = full["beta2"];
  c.adam_eps = full["adam_eps"];
  c.base_lr = full["base_lr"];
  c.warmup = full["warmup"];
  c.decay_factor = full["decay_factor"];
  c.decay_steps = full["decay_steps"];
  c.lambda_recon = full["lambda_recon"];
  c.lambda_enc = full["lambda_enc"];
  c.sigma1 = full["sigma1"];
  c.sigma2 = full["sigma2"];
  c.switch_p = full["switch_p"];
  c.clip_norm = full["clip_norm"];
  c.max_steps = full["max_steps"];
  c.seed = full["seed"];
  c.valid_frames = full["valid_frames"];
  c.augment_semitones = full["augment_semitones"];
  c.checkpoint_every = full["checkpoint_every"];
}

std::string TrainConfig::fingerprint() const {
  const nlohmann::json j = *this;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(util::fnv1a64(j.dump())));
  return buf;
}

double lr_schedule(int64_t step, const TrainConfig& c) {
  if (step < 0) throw std::invalid_argument("lr_schedule: step < 0");
  const double warm = std::min(double(step) / c.warmup, 1.0);
  const double decay_exp = std::max(0.0, double(step - c.warmup)) / c.decay_steps;
  return c.base_lr * warm * std::pow(c.decay_factor, decay_exp);
}

template <typename T>
Adam<T>::Adam(std::shared_ptr<const nn::ParamLayout> layout, double beta1, double beta2,
              double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(layout), v_(layout) {}

template <typename T>
void Adam<T>::step(ParamSet<T>& params, const ParamSet<T>& grads, double lr,
                   const std::vector<uint8_t>& trainable) {
  const auto& entries = params.layout().entries();
  nn::require(trainable.size() == entries.size(), "Adam: trainable mask size");
  nn::require(grads.values().size() == params.values().size() &&
                  m_.values().size() == params.values().size(),
              "Adam: layout mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  T* p = params.values().data();
  const T* g = grads.values().data();
  T* m = m_.values().data();
  T* v = v_.values().data();
  for (size_t id = 0; id < entries.size(); ++id) {
    if (!trainable[id]) continue;
    const Index end = entries[id].offset + entries[id].size();
    for (Index i = entries[id].offset; i < end; ++i) {
      const double gi = g[i];
      const double mi = beta1_ * double(m[i]) + (1.0 - beta1_) * gi;
      const double vi = beta2_ * double(v[i]) + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(double(p[i]) - lr * (mi / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

double clip_global_norm(ParamSet<float>& grads, const std::vector<uint8_t>& trainable,
                        double max_norm) {
  const auto& entries = grads.layout().entries();
  double sq = 0;
  for (size_t id = 0; id < entries.size(); ++id) {
    if (!trainable[id]) continue;
    for (float g : grads.span(static_cast<int>(id))) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (size_t id = 0; id < entries.size(); ++id) {
      if (!trainable[id]) continue;
      for (float& g : grads.span(static_cast<int>(id))) g *= scale;
    }
  }
  return norm;
}

std::vector<uint8_t> trainable_mask(const nn::ParamLayout& layout,
                                    const std::vector<std::string>& frozen_prefixes) {
  std::vector<uint8_t> mask(layout.entries().size(), 1);
  for (const auto& prefix : frozen_prefixes) {
    for (int id : layout.group(prefix)) mask[id] = 0;
  }
  return mask;
}

bool same_bytes(const ParamSet<float>& a, const ParamSet<float>& b, const std::string& prefix) {
  const auto ids = a.layout().group(prefix);
  if (ids != b.layout().group(prefix)) return false;
  for (int id : ids) {
    const auto x = a.span(id), y = b.span(id);
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size_bytes()) != 0) return false;
  }
  return true;
}

std::string dataset_fingerprint(const corpus::Dataset& data) {
  uint64_t h = util::fnv1a64(data.features().fingerprint());
  h = util::derive_seed(h, data.size(), data.has_labels() ? 1 : 0, data.n_phones());
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& mel = data.mel(i).values;
    const std::string_view bytes(reinterpret_cast<const char*>(mel.data()),
                                 sizeof(float) * size_t(mel.size()));
    h = util::derive_seed(h, util::fnv1a64(bytes), uint64_t(data.singer(i)));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace timbre::train
