#include "timbre/model.hpp"

#include "timbre/util/random.hpp"

#include <cmath>

namespace timbre::model {

using nn::require;
using nn::SeqBatch;

dsp::F0Stats f0_stats(const ModelConfig& config) {
  return {config.f0_log_min, config.f0_log_max};
}

void NoiseSpec::validate() const {
  if (!(sigma1 >= 0) || !(sigma2 >= 0)) throw std::invalid_argument("NoiseSpec: sigma < 0");
  if (!(switch_p >= 0 && switch_p <= 1)) throw std::invalid_argument("NoiseSpec: switch_p");
}

template <typename T>
Mat<T> one_hot(const std::vector<int32_t>& phones, int n_phones) {
  Mat<T> out = Mat<T>::Zero(static_cast<Index>(phones.size()), n_phones);
  for (size_t i = 0; i < phones.size(); ++i) {
    if (phones[i] < 0 || phones[i] >= n_phones) {
      throw std::invalid_argument("one_hot: phone id " + std::to_string(phones[i]) +
                                  " outside inventory of " + std::to_string(n_phones));
    }
    out(static_cast<Index>(i), phones[i]) = T(1);
  }
  return out;
}

template <typename T>
Batch<T> make_batch(const Model& model, const std::vector<corpus::Segment>& segments,
                    const std::vector<dsp::MelSpectrogram>* acoustic) {
  const auto& cfg = model.config();
  require(!segments.empty(), "make_batch: no segments");
  require(!acoustic || acoustic->size() == segments.size(), "make_batch: acoustic count");
  const Index len = segments[0].length();
  const Index n = len * static_cast<Index>(segments.size());
  bool labelled = true;
  for (const auto& s : segments) {
    require(s.length() == len && s.mel.n_frames() == len, "make_batch: ragged segments");
    require(s.mel.n_bands() == cfg.n_bands, "make_batch: band count mismatch");
    labelled = labelled && static_cast<Index>(s.phones.size()) == len;
  }
  Batch<T> b;
  b.seq_len = len;
  b.mel.resize(n, cfg.n_bands);
  b.acoustic.resize(n, cfg.n_bands);
  b.f0.resize(n, 2);
  if (labelled) b.phones.resize(n, cfg.n_phones);
  b.mask.resize(n);
  const auto stats = f0_stats(cfg);
  for (size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const Index r0 = static_cast<Index>(i) * len;
    if (s.singer_id < 0 || s.singer_id >= cfg.max_speakers) {
      throw std::invalid_argument("make_batch: singer id " + std::to_string(s.singer_id) +
                                  " exceeds the speaker table");
    }
    b.mel.middleRows(r0, len) = s.mel.values.cast<T>();
    if (acoustic) {
      require((*acoustic)[i].n_frames() == len, "make_batch: acoustic frame count");
      b.acoustic.middleRows(r0, len) = (*acoustic)[i].values.cast<T>();
    } else {
      b.acoustic.middleRows(r0, len) = b.mel.middleRows(r0, len);
    }
    b.f0.middleRows(r0, len) = dsp::normalize_f0(s.f0, stats).cast<T>();
    if (labelled) b.phones.middleRows(r0, len) = one_hot<T>(s.phones, cfg.n_phones);
    for (Index t = 0; t < len; ++t) b.mask[r0 + t] = static_cast<T>(s.mask[t]);
    b.speakers.push_back(s.singer_id);
  }
  return b;
}

template <typename T>
Batch<T> utterance_batch(const Model& model, const corpus::Dataset& data, size_t i,
                         bool with_labels) {
  const auto& cfg = model.config();
  const Index len = data.n_frames(i);
  require(data.mel(i).n_bands() == cfg.n_bands, "utterance_batch: band count mismatch");
  require(data.singer(i) >= 0 && data.singer(i) < cfg.max_speakers,
          "utterance_batch: singer id exceeds the speaker table");
  Batch<T> b;
  b.seq_len = len;
  b.mel = data.mel(i).values.cast<T>();
  b.acoustic = b.mel;
  b.f0 = dsp::normalize_f0(data.f0(i), f0_stats(cfg)).cast<T>();
  if (with_labels) b.phones = one_hot<T>(data.labels(i), cfg.n_phones);
  b.speakers = {data.singer(i)};
  b.mask.assign(len, T(1));
  return b;
}

template <typename T>
Mat<T> normalize_mel(const Model& model, const Mat<T>& mel) {
  const T off = static_cast<T>(model.config().mel_offset);
  const T scale = static_cast<T>(model.config().mel_scale);
  return ((mel.array() - off) * scale).matrix();
}

template <typename T>
Mat<T> denormalize_mel(const Model& model, const Mat<T>& mel_n) {
  const T off = static_cast<T>(model.config().mel_offset);
  const T scale = static_cast<T>(model.config().mel_scale);
  return (mel_n.array() / scale + off).matrix();
}

namespace {

template <typename T>
Mat<T> run_block(const nn::BlockLayout& block, const ParamSet<T>& params, const Mat<T>& x,
                 Index seq_len, const std::type_identity_t<SeqBatch<T>>* cond = nullptr,
                 std::type_identity_t<nn::BlockCache<T>>* cache = nullptr) {
  SeqBatch<T> in(x, seq_len), out;
  nn::block_forward<T>(block, params, in, cond, out, cache);
  return std::move(out.data);
}

template <typename T>
Mat<T> hcat(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Previous frame of each sequence; the first frame of every sequence is zero.
template <typename T>
Mat<T> shift_frames(const Mat<T>& x, Index seq_len) {
  Mat<T> out = Mat<T>::Zero(x.rows(), x.cols());
  for (Index s = 0; s < x.rows() / seq_len; ++s) {
    out.middleRows(s * seq_len + 1, seq_len - 1) = x.middleRows(s * seq_len, seq_len - 1);
  }
  return out;
}

template <typename T>
Mat<T> gaussian(Index rows, Index cols, double sigma, util::Rng& rng) {
  Mat<T> out = Mat<T>::Zero(rows, cols);
  if (sigma == 0) return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<T>(dist(rng));
  return out;
}

// D1 and D2 activations of one teacher-forced pass. Caches keep pointers into
// the conditioning members, so a state must stay in place once used.
template <typename T>
struct DecodeState {
  SeqBatch<T> d1_cond, d2_cond;
  Mat<T> d1_in, d1_out, d2_in, d2_out;
  nn::BlockCache<T> d1_cache, d2_cache;
};

template <typename T>
void decode_forward(const Model& m, const ParamSet<T>& p, const Mat<T>& e_noisy, const Mat<T>& c,
                    const Mat<T>& history, Index seq_len, DecodeState<T>& s, bool keep) {
  const bool per_layer = m.config().per_layer_conditioning;
  s.d1_in = hcat(e_noisy, c);
  if (per_layer) s.d1_cond = SeqBatch<T>(c, seq_len);
  s.d1_out = run_block(m.d1(), p, s.d1_in, seq_len, per_layer ? &s.d1_cond : nullptr,
                       keep ? &s.d1_cache : nullptr);
  if (per_layer) {
    s.d2_cond = SeqBatch<T>(hcat(s.d1_out, c), seq_len);
    s.d2_in = history;
  } else {
    s.d2_in = hcat(hcat(history, s.d1_out), c);
  }
  s.d2_out = run_block(m.d2(), p, s.d2_in, seq_len, per_layer ? &s.d2_cond : nullptr,
                       keep ? &s.d2_cache : nullptr);
}

// Returns d(e_noisy); accumulates d(c) into dc.
template <typename T>
Mat<T> decode_backward(const Model& m, const ParamSet<T>& p, const DecodeState<T>& s,
                       const Mat<T>& dx_hat_n, ParamSet<T>& grads, Mat<T>& dc) {
  const auto& cfg = m.config();
  const Index n = dx_hat_n.rows();
  const Index cdim = cfg.control_dim();
  const Index e_dim = cfg.embedding_dim;
  Mat<T> dd1_out;
  if (cfg.per_layer_conditioning) {
    Mat<T> dcond2 = Mat<T>::Zero(n, cfg.d1_out + cdim);
    nn::block_backward<T>(m.d2(), p, s.d2_cache, dx_hat_n, grads, nullptr, &dcond2);
    dd1_out = dcond2.leftCols(cfg.d1_out);
    dc += dcond2.rightCols(cdim);
  } else {
    Mat<T> dx2;
    nn::block_backward<T>(m.d2(), p, s.d2_cache, dx_hat_n, grads, &dx2, nullptr);
    dd1_out = dx2.middleCols(cfg.n_bands, cfg.d1_out);
    dc += dx2.rightCols(cdim);
  }
  Mat<T> dx1;
  Mat<T> dcond1 = Mat<T>::Zero(n, cdim);
  nn::block_backward<T>(m.d1(), p, s.d1_cache, dd1_out, grads, &dx1,
                        cfg.per_layer_conditioning ? &dcond1 : nullptr);
  dc += dx1.rightCols(cdim) + dcond1;
  return dx1.leftCols(e_dim);
}

}  // namespace

template <typename T>
Mat<T> encode_acoustic(const Model& model, const ParamSet<T>& params, const Mat<T>& mel,
                       Index seq_len) {
  require(mel.cols() == model.config().n_bands,
          "encode_acoustic: mel has " + std::to_string(mel.cols()) + " bands, model expects " +
              std::to_string(model.config().n_bands));
  return run_block(model.acoustic_encoder(), params, normalize_mel(model, mel), seq_len);
}

template <typename T>
Mat<T> encode_linguistic(const Model& model, const ParamSet<T>& params, const Mat<T>& phones,
                         Index seq_len) {
  require(phones.cols() == model.config().n_phones,
          "encode_linguistic: input has " + std::to_string(phones.cols()) +
              " phone channels, model expects " + std::to_string(model.config().n_phones));
  return run_block(model.linguistic_encoder(), params, phones, seq_len);
}

template <typename T>
Mat<T> switch_embedding(const Mat<T>& ea, const Mat<T>& el, int k) {
  require(ea.rows() == el.rows() && ea.cols() == el.cols(), "switch_embedding: shape mismatch");
  require(k == 0 || k == 1, "switch_embedding: k must be 0 or 1");
  return k == 1 ? ea : el;
}

template <typename T>
Mat<T> control_track(const Model& model, const ParamSet<T>& params, const Mat<T>& f0,
                     const std::vector<int>& speakers, Index seq_len) {
  const auto& cfg = model.config();
  require(f0.cols() == 2, "control_track: F0 must have 2 channels");
  require(seq_len > 0 && f0.rows() == seq_len * static_cast<Index>(speakers.size()),
          "control_track: F0 rows do not match the speaker count");
  Mat<T> c(f0.rows(), cfg.control_dim());
  c.leftCols(2) = f0;
  const auto table = params.view(model.speaker_table());
  for (size_t s = 0; s < speakers.size(); ++s) {
    require(speakers[s] >= 0 && speakers[s] < cfg.max_speakers,
            "control_track: speaker id out of range");
    c.block(static_cast<Index>(s) * seq_len, 2, seq_len, cfg.speaker_dim).rowwise() =
        table.row(speakers[s]);
  }
  return c;
}

template <typename T>
Mat<T> decode_teacher_forced(const Model& model, const ParamSet<T>& params, const Mat<T>& e,
                             const Mat<T>& c, const Mat<T>& x_target, Index seq_len,
                             const NoiseSpec& noise, uint64_t seed) {
  noise.validate();
  const auto& cfg = model.config();
  require(e.rows() == c.rows() && e.rows() == x_target.rows(),
          "decode_teacher_forced: inputs are not frame-aligned");
  require(e.cols() == cfg.embedding_dim && c.cols() == cfg.control_dim() &&
              x_target.cols() == cfg.n_bands,
          "decode_teacher_forced: channel mismatch");
  util::Rng rng(util::derive_seed(seed, 0xdec0));
  const Mat<T> eps1 = gaussian<T>(e.rows(), e.cols(), noise.sigma1, rng);
  const Mat<T> eps2 = gaussian<T>(x_target.rows(), x_target.cols(), noise.sigma2, rng);
  const Mat<T> history = shift_frames(normalize_mel(model, x_target), seq_len) + eps2;
  DecodeState<T> s;
  decode_forward(model, params, Mat<T>(e + eps1), c, history, seq_len, s, false);
  return denormalize_mel(model, s.d2_out);
}

template <typename T>
LossTerms loss_terms(const Model& model, const ParamSet<T>& params, const Batch<T>& batch,
                     const LossOptions& options, uint64_t seed,
                     std::type_identity_t<ParamSet<T>>* grads,
                     std::type_identity_t<Trace<T>>* trace) {
  options.noise.validate();
  const auto& cfg = model.config();
  const Index n = batch.rows();
  const Index len = batch.seq_len;
  require(len > 0 && n % len == 0, "loss_terms: bad sequence length");
  const Index n_seq = n / len;
  require(batch.mel.cols() == cfg.n_bands, "loss_terms: band count mismatch");
  require(static_cast<Index>(batch.mask.size()) == n, "loss_terms: mask length");
  require(static_cast<Index>(batch.speakers.size()) == n_seq, "loss_terms: speaker count");
  require(batch.f0.rows() == n, "loss_terms: F0 rows");
  if (grads) require(grads->layout_ptr() == params.layout_ptr(), "loss_terms: grad layout");

  const bool run_ea = options.mode != LossMode::kLinguistic;
  const bool run_el = options.mode != LossMode::kAcoustic;
  const bool both = run_ea && run_el;
  if (run_ea) require(model.has_acoustic_encoder(), "loss_terms: model has no acoustic encoder");
  if (run_el) {
    require(batch.phones.rows() == n && batch.phones.cols() == cfg.n_phones,
            "loss_terms: linguistic input required");
  }

  double valid = 0;
  for (T m : batch.mask) valid += static_cast<double>(m);
  if (!(valid > 0)) throw std::invalid_argument("loss_terms: every frame is masked");

  util::Rng rng(util::derive_seed(seed, 0x1055));
  LossTerms out;
  for (Index s = 0; s < n_seq; ++s) {
    int k = run_ea ? 1 : 0;
    if (options.mode == LossMode::kSwitch) {
      k = options.fixed_k ? *options.fixed_k
                          : int(std::bernoulli_distribution(options.noise.switch_p)(rng));
    }
    out.k.push_back(k);
  }
  const Mat<T> eps1 = gaussian<T>(n, cfg.embedding_dim, options.noise.sigma1, rng);
  const Mat<T> eps2 = gaussian<T>(n, cfg.n_bands, options.noise.sigma2, rng);

  const bool backprop = grads != nullptr;
  const bool enc_grads = backprop && options.train_encoders;
  const Mat<T> acoustic = batch.acoustic.rows() == n ? batch.acoustic : batch.mel;

  nn::BlockCache<T> ea_cache, el_cache;
  Mat<T> ea, el;
  if (run_ea) {
    ea = run_block(model.acoustic_encoder(), params, normalize_mel(model, acoustic), len,
                   nullptr, enc_grads ? &ea_cache : nullptr);
  }
  if (run_el) {
    el = run_block(model.linguistic_encoder(), params, batch.phones, len, nullptr,
                   enc_grads ? &el_cache : nullptr);
  }
  Mat<T> e(n, cfg.embedding_dim);
  for (Index s = 0; s < n_seq; ++s) {
    e.middleRows(s * len, len) = out.k[s] == 1 ? ea.middleRows(s * len, len)
                                               : el.middleRows(s * len, len);
  }
  const Mat<T> c = control_track(model, params, batch.f0, batch.speakers, len);
  const Mat<T> x_n = normalize_mel(model, batch.mel);
  const Mat<T> history = shift_frames(x_n, len) + eps2;

  DecodeState<T> state;
  decode_forward(model, params, Mat<T>(e + eps1), c, history, len, state, backprop);
  const Mat<T> x_hat = denormalize_mel(model, state.d2_out);

  const Mat<T> diff = x_hat - batch.mel;
  double recon = 0;
  for (Index i = 0; i < n; ++i) {
    if (batch.mask[i] != T(0)) {
      recon += static_cast<double>(batch.mask[i]) * diff.row(i).template cast<double>().squaredNorm();
    }
  }
  out.recon = recon / (valid * cfg.n_bands);
  Mat<T> enc_diff;
  if (both) {
    enc_diff = ea - el;
    double enc = 0;
    for (Index i = 0; i < n; ++i) {
      if (batch.mask[i] != T(0)) {
        enc += static_cast<double>(batch.mask[i]) *
               enc_diff.row(i).template cast<double>().squaredNorm();
      }
    }
    out.enc = enc / (valid * cfg.embedding_dim);
  }
  const double lambda_enc = both ? options.lambda_enc : 0.0;
  out.total = options.lambda_recon * out.recon + lambda_enc * out.enc;

  if (trace) {
    trace->ea = ea;
    trace->el = el;
    trace->e = e;
    trace->d1_input = state.d1_in;
    trace->d2_input = history;
    trace->x_hat = x_hat;
  }
  if (!backprop) return out;

  // d total / d x_hat_n = lambda_recon * 2 (x_hat - x) / (valid * bands) / mel_scale
  const T g_recon = static_cast<T>(2.0 * options.lambda_recon / (valid * cfg.n_bands) /
                                   cfg.mel_scale);
  Mat<T> dx_hat_n(n, cfg.n_bands);
  for (Index i = 0; i < n; ++i) dx_hat_n.row(i) = diff.row(i) * (g_recon * batch.mask[i]);
  Mat<T> dc = Mat<T>::Zero(n, cfg.control_dim());
  const Mat<T> de = decode_backward(model, params, state, dx_hat_n, *grads, dc);

  auto dtable = grads->view(model.speaker_table());
  for (Index s = 0; s < n_seq; ++s) {
    dtable.row(batch.speakers[s]) +=
        dc.block(s * len, 2, len, cfg.speaker_dim).colwise().sum();
  }
  if (!enc_grads) return out;

  const T g_enc = static_cast<T>(2.0 * lambda_enc / (valid * cfg.embedding_dim));
  if (run_ea) {
    Mat<T> dea(n, cfg.embedding_dim);
    for (Index s = 0; s < n_seq; ++s) {
      dea.middleRows(s * len, len) = de.middleRows(s * len, len) * static_cast<T>(out.k[s]);
    }
    if (both) {
      for (Index i = 0; i < n; ++i) dea.row(i) += enc_diff.row(i) * (g_enc * batch.mask[i]);
    }
    nn::block_backward<T>(model.acoustic_encoder(), params, ea_cache, dea, *grads, nullptr,
                          nullptr);
  }
  if (run_el) {
    Mat<T> del(n, cfg.embedding_dim);
    for (Index s = 0; s < n_seq; ++s) {
      del.middleRows(s * len, len) = de.middleRows(s * len, len) * static_cast<T>(1 - out.k[s]);
    }
    if (both) {
      for (Index i = 0; i < n; ++i) del.row(i) -= enc_diff.row(i) * (g_enc * batch.mask[i]);
    }
    nn::block_backward<T>(model.linguistic_encoder(), params, el_cache, del, *grads, nullptr,
                          nullptr);
  }
  return out;
}

template <typename T>
Mat<T> decode_autoregressive(const Model& model, const ParamSet<T>& params, const Mat<T>& e,
                             const Mat<T>& c, const Mat<T>* forced_history) {
  const auto& cfg = model.config();
  const Index len = e.rows();
  require(len > 0 && c.rows() == len, "decode_autoregressive: inputs are not frame-aligned");
  require(!forced_history || forced_history->rows() == len,
          "decode_autoregressive: history length");
  const bool per_layer = cfg.per_layer_conditioning;
  const Mat<T> d1_in = hcat(e, c);
  SeqBatch<T> d1_cond;
  if (per_layer) d1_cond = SeqBatch<T>(c, len);
  const Mat<T> d1_out = run_block(model.d1(), params, d1_in, len, per_layer ? &d1_cond : nullptr);
  const Mat<T> cond = hcat(d1_out, c);
  const Mat<T> forced_n = forced_history ? normalize_mel(model, *forced_history) : Mat<T>();

  nn::BlockStream<T> stream(model.d2(), params);
  Mat<T> out_n(len, cfg.n_bands);
  nn::RowVec<T> prev = nn::RowVec<T>::Zero(cfg.n_bands);
  nn::RowVec<T> input(model.d2().config.in_dim), cond_t(cond.cols());
  for (Index t = 0; t < len; ++t) {
    cond_t = cond.row(t);
    if (per_layer) {
      input = prev;
    } else {
      input << prev, cond_t;
    }
    out_n.row(t) = stream.step(input, per_layer ? &cond_t : nullptr);
    prev = forced_history ? nn::RowVec<T>(forced_n.row(t)) : nn::RowVec<T>(out_n.row(t));
  }
  return denormalize_mel(model, out_n);
}

template <typename T>
Mat<T> infer_autoregressive(const Model& model, const ParamSet<T>& params, const Mat<T>& phones,
                            const Mat<T>& f0, int speaker) {
  const Index len = phones.rows();
  require(f0.rows() == len, "infer_autoregressive: F0 and phone frames differ");
  const Mat<T> e = encode_linguistic(model, params, phones, len);
  return decode_autoregressive(model, params, e, control_track(model, params, f0, {speaker}, len));
}

template <typename T>
Mat<T> infer_voice_conversion(const Model& model, const ParamSet<T>& params,
                              const Mat<T>& mel_source, const Mat<T>& f0, int speaker) {
  const Index len = mel_source.rows();
  require(f0.rows() == len, "infer_voice_conversion: F0 and mel frames differ");
  const Mat<T> e = encode_acoustic(model, params, mel_source, len);
  return decode_autoregressive(model, params, e, control_track(model, params, f0, {speaker}, len));
}

#define TIMBRE_INSTANTIATE(T)                                                                   \
  template Mat<T> one_hot<T>(const std::vector<int32_t>&, int);                                 \
  template Batch<T> make_batch<T>(const Model&, const std::vector<corpus::Segment>&,           \
                                  const std::vector<dsp::MelSpectrogram>*);                     \
  template Batch<T> utterance_batch<T>(const Model&, const corpus::Dataset&, size_t, bool);    \
  template Mat<T> normalize_mel<T>(const Model&, const Mat<T>&);                                \
  template Mat<T> denormalize_mel<T>(const Model&, const Mat<T>&);                              \
  template Mat<T> encode_acoustic<T>(const Model&, const ParamSet<T>&, const Mat<T>&, Index);   \
  template Mat<T> encode_linguistic<T>(const Model&, const ParamSet<T>&, const Mat<T>&, Index); \
  template Mat<T> switch_embedding<T>(const Mat<T>&, const Mat<T>&, int);                       \
  template Mat<T> control_track<T>(const Model&, const ParamSet<T>&, const Mat<T>&,             \
                                   const std::vector<int>&, Index);                             \
  template Mat<T> decode_teacher_forced<T>(const Model&, const ParamSet<T>&, const Mat<T>&,     \
                                           const Mat<T>&, const Mat<T>&, Index,                 \
                                           const NoiseSpec&, uint64_t);                         \
  template LossTerms loss_terms<T>(const Model&, const ParamSet<T>&, const Batch<T>&,           \
                                   const LossOptions&, uint64_t, ParamSet<T>*, Trace<T>*);      \
  template Mat<T> decode_autoregressive<T>(const Model&, const ParamSet<T>&, const Mat<T>&,     \
                                           const Mat<T>&, const Mat<T>*);                       \
  template Mat<T> infer_autoregressive<T>(const Model&, const ParamSet<T>&, const Mat<T>&,      \
                                          const Mat<T>&, int);                                  \
  template Mat<T> infer_voice_conversion<T>(const Model&, const ParamSet<T>&, const Mat<T>&,    \
                                            const Mat<T>&, int);

TIMBRE_INSTANTIATE(float)
TIMBRE_INSTANTIATE(double)

}  // namespace timbre::model
