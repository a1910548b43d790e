#include "timbre/model.hpp"

#include "timbre/util/random.hpp"

#include <cmath>
#include <cstdio>

namespace timbre::model {

ModelConfig ModelConfig::paper(int n_phones) {
  ModelConfig c;
  c.n_phones = n_phones;
  return c;
}

ModelConfig ModelConfig::toy(int n_phones) {
  ModelConfig c;
  c.n_phones = n_phones;
  c.embedding_dim = 30;
  c.encoder_channels = 18;
  c.d1_channels = 18;
  c.d1_out = 30;
  c.d2_channels = 50;
  c.d2_hidden = 50;
  return c;
}

void ModelConfig::validate() const {
  if (n_bands < 1 || n_phones < 1 || embedding_dim < 1 || speaker_dim < 1 || max_speakers < 1) {
    throw std::invalid_argument("ModelConfig: dimensions must be positive");
  }
  if (!(mel_scale > 0)) throw std::invalid_argument("ModelConfig: mel_scale must be > 0");
  if (!(f0_log_max > f0_log_min)) throw std::invalid_argument("ModelConfig: bad F0 range");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"n_bands", c.n_bands},
       {"n_phones", c.n_phones},
       {"embedding_dim", c.embedding_dim},
       {"speaker_dim", c.speaker_dim},
       {"max_speakers", c.max_speakers},
       {"encoder_channels", c.encoder_channels},
       {"encoder_kernel", c.encoder_kernel},
       {"encoder_dilations", c.encoder_dilations},
       {"d1_channels", c.d1_channels},
       {"d1_out", c.d1_out},
       {"d1_dilations", c.d1_dilations},
       {"d2_channels", c.d2_channels},
       {"d2_hidden", c.d2_hidden},
       {"d2_kernel", c.d2_kernel},
       {"d2_dilations", c.d2_dilations},
       {"acoustic_encoder", c.acoustic_encoder},
       {"per_layer_conditioning", c.per_layer_conditioning},
       {"leaky_alpha", c.leaky_alpha},
       {"mel_offset", c.mel_offset},
       {"mel_scale", c.mel_scale},
       {"f0_log_min", c.f0_log_min},
       {"f0_log_max", c.f0_log_max}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  nlohmann::json full = c;
  for (const auto& [key, value] : j.items()) {
    if (!full.contains(key)) throw std::invalid_argument("model: unknown key '" + key + "'");
    full[key] = value;
  }
  c.n_bands = full["n_bands"];
  c.n_phones = full["n_phones"];
  c.embedding_dim = full["embedding_dim"];
  c.speaker_dim = full["speaker_dim"];
  c.max_speakers = full["max_speakers"];
  c.encoder_channels = full["encoder_channels"];
  c.encoder_kernel = full["encoder_kernel"];
  c.encoder_dilations = full["encoder_dilations"].get<std::vector<int>>();
  c.d1_channels = full["d1_channels"];
  c.d1_out = full["d1_out"];
  c.d1_dilations = full["d1_dilations"].get<std::vector<int>>();
  c.d2_channels = full["d2_channels"];
  c.d2_hidden = full["d2_hidden"];
  c.d2_kernel = full["d2_kernel"];
  c.d2_dilations = full["d2_dilations"].get<std::vector<int>>();
  c.acoustic_encoder = full["acoustic_encoder"];
  c.per_layer_conditioning = full["per_layer_conditioning"];
  c.leaky_alpha = full["leaky_alpha"];
  c.mel_offset = full["mel_offset"];
  c.mel_scale = full["mel_scale"];
  c.f0_log_min = full["f0_log_min"];
  c.f0_log_max = full["f0_log_max"];
}

std::string ModelConfig::fingerprint() const {
  const nlohmann::json j = *this;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(util::fnv1a64(j.dump())));
  return buf;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  layout_ = std::make_shared<nn::ParamLayout>();
  const int cdim = config_.control_dim();
  const bool per_layer = config_.per_layer_conditioning;

  nn::BlockConfig enc;
  enc.kernel_size = config_.encoder_kernel;
  enc.dilations = config_.encoder_dilations;
  enc.residual_channels = enc.skip_channels = config_.encoder_channels;
  enc.hidden_channels = enc.out_channels = config_.embedding_dim;
  enc.out_activation = nn::OutputActivation::kTanh;
  enc.leaky_alpha = config_.leaky_alpha;
  if (config_.acoustic_encoder) {
    enc.in_dim = config_.n_bands;
    ea_ = nn::register_block(*layout_, "E_A/", enc);
  }
  enc.in_dim = config_.n_phones;
  el_ = nn::register_block(*layout_, "E_L/", enc);

  nn::BlockConfig d1 = enc;
  d1.in_dim = config_.embedding_dim + cdim;
  d1.cond_dim = per_layer ? cdim : 0;
  d1.dilations = config_.d1_dilations;
  d1.residual_channels = d1.skip_channels = config_.d1_channels;
  d1.hidden_channels = d1.out_channels = config_.d1_out;
  d1_ = nn::register_block(*layout_, "D1/", d1);

  nn::BlockConfig d2;
  d2.in_dim = per_layer ? config_.n_bands : config_.n_bands + config_.d1_out + cdim;
  d2.cond_dim = per_layer ? config_.d1_out + cdim : 0;
  d2.kernel_size = config_.d2_kernel;
  d2.dilations = config_.d2_dilations;
  d2.residual_channels = d2.skip_channels = config_.d2_channels;
  d2.hidden_channels = config_.d2_hidden;
  d2.out_channels = config_.n_bands;
  d2.causal = true;
  d2.out_activation = nn::OutputActivation::kLinear;
  d2.leaky_alpha = config_.leaky_alpha;
  d2_ = nn::register_block(*layout_, "D2/", d2);

  speaker_table_ = layout_->add("spk/table", config_.max_speakers, config_.speaker_dim);
}

const nn::BlockLayout& Model::acoustic_encoder() const {
  if (!config_.acoustic_encoder) throw std::logic_error("model has no acoustic encoder");
  return ea_;
}

Index Model::context_frames() const {
  const auto enc = nn::receptive_field(el_.config);
  const auto d1 = nn::receptive_field(d1_.config);
  const auto d2 = nn::receptive_field(d2_.config);
  const Index left = enc.past + d1.past + d2.past + 1;
  const Index right = enc.future + d1.future;
  return std::max(left, right);
}

template <typename T>
ParamSet<T> Model::init(uint64_t seed) const {
  ParamSet<T> p(layout_);
  if (config_.acoustic_encoder) nn::init_block(ea_, p, util::derive_seed(seed, 1));
  nn::init_block(el_, p, util::derive_seed(seed, 2));
  nn::init_block(d1_, p, util::derive_seed(seed, 3));
  nn::init_block(d2_, p, util::derive_seed(seed, 4));
  util::Rng rng(util::derive_seed(seed, 5));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (T& v : p.span(speaker_table_)) v = static_cast<T>(u(rng));
  return p;
}

template ParamSet<float> Model::init<float>(uint64_t) const;
template ParamSet<double> Model::init<double>(uint64_t) const;

}  // namespace timbre::model
