#include "timbre/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace timbre::eval {

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

nlohmann::json probe_json(const ProbeResult& p) {
  return {{"train_accuracy", num(p.train_accuracy)},
          {"test_accuracy", num(p.test_accuracy)},
          {"balanced_test_accuracy", num(p.balanced_test_accuracy)},
          {"train_frames", p.train_frames},
          {"test_frames", p.test_frames}};
}

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double row_distance_sum(const Mat<float>& a, const Mat<float>& b) {
  return (a - b).cast<double>().rowwise().norm().sum();
}

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  return {{"system", r.system},
          {"n_utterances", r.n_utterances},
          {"n_frames", r.n_frames},
          {"recon_teacher_forced", num(r.recon_teacher_forced)},
          {"recon_autoregressive", num(r.recon_autoregressive)},
          {"recon_acoustic", num(r.recon_acoustic)},
          {"embedding_distance", num(r.embedding_distance)},
          {"probe_linguistic", probe_json(r.probe_linguistic)},
          {"probe_acoustic", probe_json(r.probe_acoustic)},
          {"invariance_ratio", num(r.invariance_ratio)},
          {"invariance_shift", num(r.invariance_shift)},
          {"phone_distance", num(r.phone_distance)}};
}

void to_json(nlohmann::json& j, const EvalOptions& o) {
  j = {{"max_utterances", o.max_utterances},     {"autoregressive", o.autoregressive},
       {"invariance_semitones", o.invariance_semitones}, {"probe_block", o.probe_block},
       {"probe_iterations", o.probe_iterations}, {"probe_lr", o.probe_lr},
       {"probe_l2", o.probe_l2}};
}

void from_json(const nlohmann::json& j, EvalOptions& o) {
  nlohmann::json full = o;
  for (const auto& [key, value] : j.items()) {
    if (!full.contains(key)) throw std::invalid_argument("eval: unknown key '" + key + "'");
    full[key] = value;
  }
  o.max_utterances = full["max_utterances"];
  o.autoregressive = full["autoregressive"];
  o.invariance_semitones = full["invariance_semitones"];
  o.probe_block = full["probe_block"];
  o.probe_iterations = full["probe_iterations"];
  o.probe_lr = full["probe_lr"];
  o.probe_l2 = full["probe_l2"];
}

double mel_mse(const Mat<float>& a, const Mat<float>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    throw std::invalid_argument("mel_mse: shape mismatch");
  }
  return (a - b).cast<double>().squaredNorm() / double(a.size());
}

ProbeResult phone_probe(const Mat<float>& features, const std::vector<int32_t>& labels,
                        int n_classes, const EvalOptions& options) {
  const Index n = features.rows();
  if (n != static_cast<Index>(labels.size())) {
    throw std::invalid_argument("phone_probe: feature and label counts differ");
  }
  if (options.probe_block < 1) throw std::invalid_argument("phone_probe: probe_block < 1");
  std::vector<Index> train_rows, test_rows;
  for (Index i = 0; i < n; ++i) {
    ((i / options.probe_block) % 3 == 2 ? test_rows : train_rows).push_back(i);
  }
  if (train_rows.empty() || test_rows.empty()) {
    throw std::invalid_argument("phone_probe: too few frames for a split");
  }
  const Index d = features.cols();
  auto design = [&](const std::vector<Index>& rows) {
    MatD x(static_cast<Index>(rows.size()), d + 1);
    for (size_t r = 0; r < rows.size(); ++r) {
      x.row(Index(r)).head(d) = features.row(rows[r]).cast<double>();
      x(Index(r), d) = 1.0;
    }
    return x;
  };
  MatD xtr = design(train_rows), xte = design(test_rows);
  // Standardize with training statistics.
  for (Index j = 0; j < d; ++j) {
    const double mean = xtr.col(j).mean();
    const double sd = std::sqrt((xtr.col(j).array() - mean).square().mean());
    const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
    xtr.col(j) = ((xtr.col(j).array() - mean) * inv).matrix();
    xte.col(j) = ((xte.col(j).array() - mean) * inv).matrix();
  }
  MatD y = MatD::Zero(xtr.rows(), n_classes);
  for (size_t r = 0; r < train_rows.size(); ++r) y(Index(r), labels[train_rows[r]]) = 1.0;

  MatD w = MatD::Zero(d + 1, n_classes), m = w, v = w;
  auto softmax = [](MatD z) {
    for (Index r = 0; r < z.rows(); ++r) {
      z.row(r).array() -= z.row(r).maxCoeff();
      z.row(r) = z.row(r).array().exp().matrix();
      z.row(r) /= z.row(r).sum();
    }
    return z;
  };
  const double b1 = 0.9, b2 = 0.999;
  for (int it = 1; it <= options.probe_iterations; ++it) {
    const MatD p = softmax(xtr * w);
    MatD g = xtr.transpose() * (p - y) / double(xtr.rows());
    g.topRows(d) += options.probe_l2 * w.topRows(d);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
    w.array() -= options.probe_lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
  }

  auto predict = [&](const MatD& x) {
    const MatD z = x * w;
    std::vector<int> out(z.rows());
    for (Index r = 0; r < z.rows(); ++r) z.row(r).maxCoeff(&out[r]);
    return out;
  };
  ProbeResult res;
  res.train_frames = static_cast<int>(train_rows.size());
  res.test_frames = static_cast<int>(test_rows.size());
  const auto ptr = predict(xtr), pte = predict(xte);
  int hits = 0;
  for (size_t r = 0; r < train_rows.size(); ++r) hits += ptr[r] == labels[train_rows[r]];
  res.train_accuracy = double(hits) / train_rows.size();
  hits = 0;
  std::map<int, std::pair<int, int>> per_class;  // label -> (hits, count)
  for (size_t r = 0; r < test_rows.size(); ++r) {
    const int label = labels[test_rows[r]];
    const bool ok = pte[r] == label;
    hits += ok;
    per_class[label].first += ok;
    per_class[label].second += 1;
  }
  res.test_accuracy = double(hits) / test_rows.size();
  double recall = 0;
  for (const auto& [label, hc] : per_class) recall += double(hc.first) / hc.second;
  res.balanced_test_accuracy = recall / double(per_class.size());
  return res;
}

Invariance transposition_invariance(const model::Model& model, const ParamSet<float>& params,
                                    const corpus::Dataset& data, const EvalOptions& options) {
  if (!model.has_acoustic_encoder()) return {};
  if (!data.has_labels()) throw std::invalid_argument("transposition_invariance: needs labels");
  const size_t n_utt = options.max_utterances > 0
                           ? std::min<size_t>(data.size(), size_t(options.max_utterances))
                           : data.size();
  const int n_phones = model.config().n_phones;
  const Index dim = model.config().embedding_dim;
  std::vector<double> shift(n_utt, 0.0);
  std::vector<Index> frames(n_utt, 0);
  std::vector<Mat<double>> sums(n_utt);
  std::vector<std::vector<Index>> counts(n_utt);
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < n_utt; ++i) {
    const auto& mel = data.mel(i).values;
    const Index len = mel.rows();
    const Mat<float> ea = model::encode_acoustic(model, params, mel, len);
    for (double s : {options.invariance_semitones, -options.invariance_semitones}) {
      const auto moved =
          dsp::transpose_augment(data.audio(i), len, std::pow(2.0, s / 12.0), data.features());
      shift[i] += row_distance_sum(ea, model::encode_acoustic(model, params, moved.values, len));
    }
    frames[i] = 2 * len;
    sums[i] = Mat<double>::Zero(n_phones, dim);
    counts[i].assign(n_phones, 0);
    const auto& labels = data.labels(i);
    for (Index t = 0; t < len; ++t) {
      sums[i].row(labels[t]) += ea.row(t).cast<double>();
      ++counts[i][labels[t]];
    }
  }
  Mat<double> centroid = Mat<double>::Zero(n_phones, dim);
  std::vector<Index> count(n_phones, 0);
  double total_shift = 0;
  Index total_frames = 0;
  for (size_t i = 0; i < n_utt; ++i) {
    centroid += sums[i];
    for (int p = 0; p < n_phones; ++p) count[p] += counts[i][p];
    total_shift += shift[i];
    total_frames += frames[i];
  }
  std::vector<int> present;
  for (int p = 0; p < n_phones; ++p) {
    if (count[p] > 0) {
      centroid.row(p) /= double(count[p]);
      present.push_back(p);
    }
  }
  Invariance inv;
  if (total_frames == 0 || present.size() < 2) return inv;
  double dist = 0;
  int pairs = 0;
  for (size_t a = 0; a < present.size(); ++a) {
    for (size_t b = a + 1; b < present.size(); ++b) {
      dist += (centroid.row(present[a]) - centroid.row(present[b])).norm();
      ++pairs;
    }
  }
  inv.shift = total_shift / double(total_frames);
  inv.phone_distance = dist / pairs;
  inv.ratio = inv.phone_distance > 0 ? inv.shift / inv.phone_distance : kNaN;
  return inv;
}

MetricReport evaluate(const train::Checkpoint& ckpt, const corpus::Dataset& validation,
                      const EvalOptions& options, const std::string& system) {
  if (validation.empty()) throw std::invalid_argument("evaluate: empty validation set");
  if (!validation.has_labels()) throw std::invalid_argument("evaluate: validation needs labels");
  const model::Model model(ckpt.model);
  const auto& params = ckpt.params;
  const bool acoustic = model.has_acoustic_encoder();
  const size_t n_utt = options.max_utterances > 0
                           ? std::min<size_t>(validation.size(), size_t(options.max_utterances))
                           : validation.size();

  struct PerUtt {
    double tf = 0, ar = 0, ac = 0, dist = 0;
    Index frames = 0;
    Mat<float> el, ea;
  };
  std::vector<PerUtt> res(n_utt);
  const model::NoiseSpec quiet{0.0, 0.0, 0.5};
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < n_utt; ++i) {
    const auto b = model::utterance_batch<float>(model, validation, i, true);
    const Index len = b.seq_len;
    auto& r = res[i];
    r.frames = len;
    r.el = model::encode_linguistic(model, params, b.phones, len);
    const Mat<float> c = model::control_track(model, params, b.f0, b.speakers, len);
    const double n = double(b.mel.size());
    r.tf = mel_mse(model::decode_teacher_forced(model, params, r.el, c, b.mel, len, quiet, 0),
                   b.mel) * n;
    if (options.autoregressive) {
      r.ar = mel_mse(model::decode_autoregressive(model, params, r.el, c), b.mel) * n;
    }
    if (acoustic) {
      r.ea = model::encode_acoustic(model, params, b.mel, len);
      r.ac = mel_mse(model::decode_teacher_forced(model, params, r.ea, c, b.mel, len, quiet, 0),
                     b.mel) * n;
      r.dist = row_distance_sum(r.ea, r.el);
    }
  }

  MetricReport rep;
  rep.system = system.empty() ? ckpt.phase : system;
  rep.n_utterances = static_cast<int>(n_utt);
  double tf = 0, ar = 0, ac = 0, dist = 0;
  Index total = 0;
  for (const auto& r : res) {
    tf += r.tf;
    ar += r.ar;
    ac += r.ac;
    dist += r.dist;
    total += r.frames;
  }
  const double cells = double(total) * model.config().n_bands;
  rep.n_frames = total;
  rep.recon_teacher_forced = tf / cells;
  if (options.autoregressive) rep.recon_autoregressive = ar / cells;

  const Index dim = model.config().embedding_dim;
  std::vector<int32_t> labels;
  labels.reserve(size_t(total));
  Mat<float> el(total, dim), ea(acoustic ? total : 0, dim);
  Index row = 0;
  for (size_t i = 0; i < n_utt; ++i) {
    const auto& l = validation.labels(i);
    labels.insert(labels.end(), l.begin(), l.end());
    el.middleRows(row, res[i].frames) = res[i].el;
    if (acoustic) ea.middleRows(row, res[i].frames) = res[i].ea;
    row += res[i].frames;
  }
  rep.probe_linguistic = phone_probe(el, labels, model.config().n_phones, options);
  if (acoustic) {
    rep.recon_acoustic = ac / cells;
    rep.embedding_distance = dist / double(total);
    rep.probe_acoustic = phone_probe(ea, labels, model.config().n_phones, options);
    const auto inv = transposition_invariance(model, params, validation, options);
    rep.invariance_shift = inv.shift;
    rep.phone_distance = inv.phone_distance;
    rep.invariance_ratio = inv.ratio;
  }
  return rep;
}

MetricReport reference_report(const corpus::Dataset& validation, const EvalOptions& options,
                              int iterations) {
  if (validation.empty()) throw std::invalid_argument("reference_report: empty validation set");
  const size_t n_utt = options.max_utterances > 0
                           ? std::min<size_t>(validation.size(), size_t(options.max_utterances))
                           : validation.size();
  std::vector<double> err(n_utt);
  std::vector<Index> frames(n_utt);
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < n_utt; ++i) {
    const auto& mel = validation.mel(i);
    const auto audio = dsp::griffin_lim(mel, validation.features(), iterations, i);
    const auto again = dsp::compute_mel(audio, validation.features());
    err[i] = mel_mse(again.values.topRows(mel.n_frames()), mel.values) * double(mel.values.size());
    frames[i] = mel.n_frames();
  }
  MetricReport rep;
  rep.system = "reference";
  rep.n_utterances = static_cast<int>(n_utt);
  double total_err = 0;
  for (size_t i = 0; i < n_utt; ++i) {
    total_err += err[i];
    rep.n_frames += frames[i];
  }
  rep.recon_teacher_forced = rep.recon_autoregressive =
      total_err / (double(rep.n_frames) * validation.features().n_bands);
  return rep;
}

}  // namespace timbre::eval
