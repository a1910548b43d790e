#include "timbre/container.hpp"
#include "timbre/eval.hpp"

#include "support/micro.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using namespace timbre;
using namespace timbre::eval;

namespace {

const corpus::PhoneInventory& inv() {
  static const corpus::PhoneInventory i = corpus::PhoneInventory::default_inventory();
  return i;
}

const corpus::ExperimentCorpora& corpora() {
  static const corpus::ExperimentCorpora c = [] {
    corpus::CorpusOptions o;
    o.n_singers = 2;
    o.songs_per_singer = 3;
    o.validation_songs = 1;
    o.song_seconds = 3.0;
    o.features.n_bands = 6;
    corpus::CorpusOptions target = o;
    target.songs_per_singer = 3;
    return corpus::build_experiment_corpora(o, target, 3.0, inv(), 21);
  }();
  return c;
}

model::ModelConfig tiny_model() {
  auto c = timbre::testing::micro_config();
  c.n_phones = inv().size();
  c.max_speakers = 4;
  return c;
}

train::TrainConfig tiny_train(int steps) {
  train::TrainConfig t;
  t.batch_size = 2;
  t.valid_frames = 20;
  t.max_steps = steps;
  t.warmup = 10;
  t.base_lr = 3e-3;
  t.augment_semitones = 2;
  return t;
}

EvalOptions quick() {
  EvalOptions o;
  o.probe_iterations = 60;
  return o;
}

const train::Checkpoint& trained() {
  static const train::Checkpoint c =
      train::train_supervised(corpora().multi.train, tiny_model(), tiny_train(40));
  return c;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("timbre_eval_test_" + name);
}

void zero_group(train::Checkpoint& c, const std::string& prefix) {
  for (int id : c.params.layout().group(prefix)) {
    for (float& v : c.params.span(id)) v = 0.0f;
  }
}

}  // namespace

TEST(Metrics, MelMse) {
  Mat<float> a = Mat<float>::Zero(3, 2), b = Mat<float>::Zero(3, 2);
  EXPECT_EQ(mel_mse(a, b), 0.0);
  b(0, 0) = 2;
  EXPECT_DOUBLE_EQ(mel_mse(a, b), 4.0 / 6.0);
  EXPECT_THROW(mel_mse(a, Mat<float>::Zero(2, 2)), std::invalid_argument);
}

TEST(Probe, SeparableFeaturesAreLearned) {
  util::Rng rng(3);
  std::normal_distribution<double> g(0, 0.1);
  const int n = 600, classes = 4;
  Mat<float> x(n, 3);
  std::vector<int32_t> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = (i / 7) % classes;
    x(i, 0) = float(y[i] == 1) + float(g(rng));
    x(i, 1) = float(y[i] == 2) + float(g(rng));
    x(i, 2) = float(y[i] == 3) + float(g(rng));
  }
  const auto r = phone_probe(x, y, classes, quick());
  EXPECT_GT(r.test_accuracy, 0.99);
  EXPECT_EQ(r.train_frames + r.test_frames, n);
  EXPECT_EQ(r.test_frames, 200);
}

TEST(Probe, ConstantFeaturesGiveChance) {
  const int n = 300;
  std::vector<int32_t> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 5 == 0 ? 1 : i % 3;
  const auto r = phone_probe(Mat<float>::Zero(n, 4), y, 6, quick());
  std::set<int> present;
  for (int i = 0; i < n; ++i) {
    if ((i / 25) % 3 == 2) present.insert(y[i]);
  }
  EXPECT_DOUBLE_EQ(r.balanced_test_accuracy, 1.0 / double(present.size()));
}

TEST(Probe, TrainAccuracyAtLeastTest) {
  util::Rng rng(4);
  std::normal_distribution<double> g(0, 1.0);
  const int n = 900, classes = 5;
  Mat<float> x(n, 6);
  std::vector<int32_t> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = int(rng() % classes);
    for (int j = 0; j < 6; ++j) x(i, j) = float(0.6 * (y[i] == j % classes) + g(rng));
  }
  const auto r = phone_probe(x, y, classes, quick());
  EXPECT_GE(r.train_accuracy, r.test_accuracy);
  EXPECT_GT(r.test_accuracy, 1.0 / classes);
  EXPECT_THROW(phone_probe(x.topRows(10), y, classes, quick()), std::invalid_argument);
}

TEST(Evaluate, RangesAndStructure) {
  const auto r = evaluate(trained(), corpora().target.validation, quick(), "x");
  EXPECT_EQ(r.system, "x");
  EXPECT_EQ(r.n_utterances, int(corpora().target.validation.size()));
  for (double v : {r.recon_teacher_forced, r.recon_autoregressive, r.recon_acoustic,
                   r.embedding_distance, r.invariance_ratio}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  for (const auto& p : {r.probe_linguistic, r.probe_acoustic}) {
    EXPECT_GE(p.test_accuracy, 0.0);
    EXPECT_LE(p.test_accuracy, 1.0);
  }
  const auto j = to_json(r);
  EXPECT_EQ(j["system"], "x");
  EXPECT_TRUE(j["probe_acoustic"].contains("test_accuracy"));
}

TEST(Evaluate, ZeroedEncodersGiveChanceAndNoDistance) {
  train::Checkpoint c = trained();
  zero_group(c, "E_A/");
  zero_group(c, "E_L/");
  const auto& val = corpora().target.validation;
  const auto r = evaluate(c, val, quick());
  EXPECT_EQ(r.embedding_distance, 0.0);
  std::set<int> present;
  Index row = 0;
  for (size_t i = 0; i < val.size(); ++i) {
    for (int32_t p : val.labels(i)) {
      if ((row++ / quick().probe_block) % 3 == 2) present.insert(p);
    }
  }
  EXPECT_DOUBLE_EQ(r.probe_linguistic.balanced_test_accuracy, 1.0 / double(present.size()));
  EXPECT_DOUBLE_EQ(r.probe_acoustic.balanced_test_accuracy, 1.0 / double(present.size()));
}

TEST(Evaluate, BaselineHasNoAcousticMetrics) {
  auto cfg = tiny_model();
  cfg.acoustic_encoder = false;
  const auto c = train::train_supervised(corpora().target.train, cfg, tiny_train(3));
  const auto r = evaluate(c, corpora().target.validation, quick());
  EXPECT_TRUE(std::isnan(r.embedding_distance));
  EXPECT_TRUE(std::isnan(r.probe_acoustic.test_accuracy));
  EXPECT_TRUE(std::isnan(r.invariance_ratio));
  EXPECT_TRUE(std::isfinite(r.recon_autoregressive));
  EXPECT_TRUE(to_json(r)["embedding_distance"].is_null());
}

TEST(Evaluate, Errors) {
  const corpus::Dataset empty(corpora().target.validation.features(), inv().size(), true);
  EXPECT_THROW(evaluate(trained(), empty), std::invalid_argument);
  EXPECT_THROW(evaluate(trained(), corpora().target.validation.audio_only()),
               std::invalid_argument);
}

TEST(Evaluate, ReferenceRowIsFinite) {
  const auto r = reference_report(corpora().target.validation, quick(), 4);
  EXPECT_EQ(r.system, "reference");
  EXPECT_GT(r.recon_autoregressive, 0.0);
  EXPECT_TRUE(std::isfinite(r.recon_autoregressive));
}

TEST(Matrix, RowsAndDeterminism) {
  MatrixConfig cfg;
  cfg.model = tiny_model();
  cfg.phase_a = cfg.supervised = cfg.adapt = cfg.pretrain = cfg.clone = tiny_train(3);
  cfg.eval = quick();
  cfg.eval.autoregressive = false;
  cfg.reference_iterations = 2;
  std::set<std::string> runs;
  MatrixHooks hooks;
  hooks.on_checkpoint = [&](const std::string& name, const train::Checkpoint&) {
    runs.insert(name);
  };
  const auto a = run_experiment_matrix(corpora(), cfg, hooks);
  ASSERT_EQ(a.size(), 5u);
  const std::vector<std::string> names{"supervised", "semi-supervised", "supervised-cloning",
                                       "semi-supervised-cloning", "reference"};
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].system, names[i]);
  EXPECT_EQ(runs.size(), 6u);
  const auto b = run_experiment_matrix(corpora(), cfg);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());

  corpus::ExperimentCorpora missing = corpora();
  missing.clone = corpus::Dataset(missing.clone.features(), inv().size(), true);
  EXPECT_THROW(run_experiment_matrix(missing, cfg), std::invalid_argument);

  const nlohmann::json j = cfg;
  EXPECT_EQ(j.get<MatrixConfig>().clone.fingerprint(), cfg.clone.fingerprint());
}

TEST(Synth, FrameCountAndDeterminism) {
  const auto& c = trained();
  const auto& f = corpora().target.validation.features();
  const std::vector<corpus::PhoneTiming> timings{
      {inv().silence_id(), 0.0, 0.3}, {inv().id("a"), 0.3, 1.5}, {inv().id("s"), 1.5, 2.0}};
  const std::vector<std::pair<double, double>> f0{{0.0, 0.0}, {0.3, 220.0}, {1.5, 230.0},
                                                  {1.51, 0.0}, {2.0, 0.0}};
  const auto a = synthesize(c, timings, f0, 2, f);
  EXPECT_EQ(a.n_frames(), 401);
  EXPECT_EQ(a.n_bands(), 6);
  const auto b = synthesize(c, timings, f0, 2, f);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(frames_for_duration(2.0, f), 401);

  auto late = f0;
  late.back().first = 2.5;
  EXPECT_THROW(synthesize(c, timings, late, 2, f), DurationMismatch);
  auto close = f0;
  close.back().first = 2.004;
  EXPECT_NO_THROW(synthesize(c, timings, close, 2, f));
  EXPECT_THROW(synthesize(c, timings, f0, 9, f), std::invalid_argument);
}

TEST(Synth, UnknownPhoneNamesTheSymbol) {
  const auto path = temp_path("bad.phones");
  {
    std::ofstream out(path);
    out << "sil 0 0.5\nzh 0.5 1.0\n";
  }
  try {
    corpus::read_phone_timings(path, inv());
    FAIL() << "expected UnknownPhone";
  } catch (const corpus::UnknownPhone& e) {
    EXPECT_EQ(e.symbol(), "zh");
    EXPECT_NE(std::string(e.what()).find("zh"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Convert, KeepsFrameCountAndNeedsF0) {
  const auto& val = corpora().target.validation;
  const auto& audio = val.audio(0);
  std::vector<std::pair<double, double>> f0;
  const double hop = val.features().hop_ms / 1000.0;
  for (Index j = 0; j < val.n_frames(0); ++j) {
    f0.emplace_back(j * hop, val.f0(0).voiced[j] ? val.f0(0).f0_hz[j] : 0.0);
  }
  const auto out = convert(trained(), audio, f0, val.singer(0), val.features());
  EXPECT_EQ(out.n_frames(), val.n_frames(0));
  EXPECT_THROW(convert(trained(), audio, {}, val.singer(0), val.features()),
               std::invalid_argument);
}

TEST(MelFile, RoundTrip) {
  dsp::MelSpectrogram m;
  m.values = Mat<float>::Random(7, 6);
  dsp::FeatureConfig f;
  f.n_bands = 6;
  const auto path = temp_path("m.mel");
  save_mel(m, f, path, {{"note", "x"}});
  dsp::FeatureConfig back_f;
  const auto back = load_mel(path, &back_f);
  EXPECT_EQ(back.values, m.values);
  EXPECT_EQ(back_f.fingerprint(), f.fingerprint());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "garbage";
  }
  EXPECT_THROW(load_mel(path), io::ContainerError);
  fs::remove(path);
}

TEST(Plot, HeatmapGeometryAndDeterminism) {
  dsp::MelSpectrogram m;
  m.values = Mat<float>::Random(40, 100);
  const auto a = render_mel(m);
  EXPECT_EQ(a.height, 100);
  EXPECT_EQ(a.width, 40);
  const auto b = render_mel(m);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(render_mel(m, 3).height, 300);
  // Band 0 is the bottom row.
  m.values.setZero();
  m.values(0, 0) = 1;
  const auto c = render_mel(m);
  const size_t bottom_left = size_t(99) * c.width * 3;
  EXPECT_NE(c.rgb[bottom_left + 0], c.rgb[0]);
}

TEST(Plot, SilenceIsUniform) {
  dsp::MelSpectrogram m;
  m.values = Mat<float>::Constant(30, 20, std::log(1e-5f));
  const auto img = render_mel(m);
  for (size_t i = 3; i < img.rgb.size(); ++i) ASSERT_EQ(img.rgb[i], img.rgb[i % 3]);
}

TEST(Plot, PngRoundTripWithAxes) {
  dsp::MelSpectrogram m;
  m.values = Mat<float>::Random(120, 100);
  const auto fig = render_mel_figure(m, 0.005, 2);
  EXPECT_GT(fig.width, 240);
  EXPECT_GT(fig.height, 200);
  size_t black = 0;
  for (size_t i = 0; i + 2 < fig.rgb.size(); i += 3) {
    black += fig.rgb[i] == 0 && fig.rgb[i + 1] == 0 && fig.rgb[i + 2] == 0;
  }
  EXPECT_GT(black, 400u);  // axes, ticks, labels
  const auto path = temp_path("fig.png");
  write_png(fig, path);
  const auto back = read_png(path);
  EXPECT_EQ(back.width, fig.width);
  EXPECT_EQ(back.height, fig.height);
  EXPECT_EQ(back.rgb, fig.rgb);
  fs::remove(path);
  EXPECT_THROW(read_png(path), std::runtime_error);
}
