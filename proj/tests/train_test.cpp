#include "timbre/train.hpp"
#include "timbre/container.hpp"

#include "support/micro.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

namespace fs = std::filesystem;
using namespace timbre;
using namespace timbre::train;

namespace {

const corpus::PhoneInventory& inv() {
  static const corpus::PhoneInventory i = corpus::PhoneInventory::default_inventory();
  return i;
}

corpus::CorpusOptions tiny_options() {
  corpus::CorpusOptions o;
  o.n_singers = 2;
  o.songs_per_singer = 2;
  o.validation_songs = 0;
  o.song_seconds = 3.0;
  o.features.n_bands = 6;
  return o;
}

const corpus::ExperimentCorpora& corpora() {
  static const corpus::ExperimentCorpora c = [] {
    corpus::CorpusOptions target = tiny_options();
    target.songs_per_singer = 2;
    return corpus::build_experiment_corpora(tiny_options(), target, 3.0, inv(), 11);
  }();
  return c;
}

model::ModelConfig tiny_model() {
  auto c = timbre::testing::micro_config();
  c.n_phones = inv().size();
  c.max_speakers = 4;
  return c;
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.batch_size = 2;
  t.valid_frames = 20;
  t.max_steps = steps;
  t.warmup = 10;
  t.base_lr = 3e-3;
  t.augment_semitones = 2;
  t.seed = 5;
  return t;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("timbre_train_test_" + name);
}

bool same_params(const ParamSet<float>& a, const ParamSet<float>& b) {
  return a.values().size() == b.values().size() &&
         std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(float)) == 0;
}

}  // namespace

TEST(Schedule, ReferencePoints) {
  const TrainConfig c;
  EXPECT_NEAR(lr_schedule(700, c), 5e-4, 1e-12);
  EXPECT_NEAR(lr_schedule(350, c), 2.5e-4, 1e-12);
  EXPECT_NEAR(lr_schedule(10700, c), 7.5e-5, 1e-12);
  EXPECT_EQ(lr_schedule(0, c), 0.0);
  EXPECT_THROW(lr_schedule(-1, c), std::invalid_argument);
}

TEST(Schedule, ContinuousAndMonotone) {
  const TrainConfig c;
  EXPECT_NEAR(lr_schedule(699, c), lr_schedule(700, c), 1e-6);
  EXPECT_NEAR(lr_schedule(701, c), lr_schedule(700, c), 1e-6);
  for (int s = 1; s <= 700; ++s) EXPECT_GT(lr_schedule(s, c), lr_schedule(s - 1, c));
  for (int s = 701; s < 40000; s += 37) EXPECT_LE(lr_schedule(s, c), lr_schedule(s - 1, c));
  TrainConfig alt = c;
  alt.decay_factor = 0.85;
  EXPECT_NEAR(lr_schedule(10700, alt), 5e-4 * 0.85, 1e-12);
}

TEST(Adam, MatchesScalarReference) {
  auto layout = std::make_shared<nn::ParamLayout>();
  layout->add("w", 1, 1);
  ParamSet<double> w(layout), g(layout);
  w.values()[0] = 0.25;
  Adam<double> adam(layout, 0.9, 0.999, 1e-8);

  // f(w) = (w - 3)^2 + sin(w)
  auto grad = [](double x) { return 2 * (x - 3) + std::cos(x); };
  double x = 0.25, m = 0, v = 0, b1t = 1, b2t = 1;
  for (int t = 1; t <= 100; ++t) {
    const double lr = 0.05 / std::sqrt(double(t));
    const double gx = grad(x);
    m = 0.9 * m + 0.1 * gx;
    v = 0.999 * v + 0.001 * gx * gx;
    b1t *= 0.9;
    b2t *= 0.999;
    x -= lr * (m / (1 - b1t)) / (std::sqrt(v / (1 - b2t)) + 1e-8);

    g.values()[0] = grad(w.values()[0]);
    adam.step(w, g, lr, {1});
    ASSERT_NEAR(w.values()[0], x, 1e-12) << "step " << t;
  }
  EXPECT_EQ(adam.t(), 100);
}

TEST(Adam, FrozenEntriesUntouched) {
  auto layout = std::make_shared<nn::ParamLayout>();
  layout->add("a", 2, 1);
  layout->add("b", 1, 3);
  ParamSet<float> p(layout), g(layout);
  for (size_t i = 0; i < p.values().size(); ++i) {
    p.values()[i] = float(i);
    g.values()[i] = 1.0f;
  }
  Adam<float> adam(layout, 0.9, 0.999, 1e-8);
  adam.step(p, g, 0.1, {0, 1});
  EXPECT_EQ(p.values()[0], 0.0f);
  EXPECT_EQ(p.values()[1], 1.0f);
  EXPECT_EQ(adam.m().values()[0], 0.0f);
  EXPECT_NE(p.values()[2], 2.0f);
}

TEST(Clip, GlobalNorm) {
  auto layout = std::make_shared<nn::ParamLayout>();
  layout->add("a", 1, 2);
  layout->add("b", 1, 1);
  ParamSet<float> g(layout);
  g.values() = {3.0f, 4.0f, 100.0f};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, {1, 0}, 1.0), 5.0);
  EXPECT_FLOAT_EQ(g.values()[0], 0.6f);
  EXPECT_FLOAT_EQ(g.values()[1], 0.8f);
  EXPECT_EQ(g.values()[2], 100.0f);
  g.values() = {3.0f, 4.0f, 0.0f};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, {1, 1}, 10.0), 5.0);
  EXPECT_EQ(g.values()[0], 3.0f);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = tiny_train(17);
  c.decay_factor = 0.85;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_THROW((nlohmann::json{{"batchsize", 3}}.get<TrainConfig>()), std::invalid_argument);
  TrainConfig bad;
  bad.warmup = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto& data = corpora().multi.train;
  auto ckpt = train_supervised(data, tiny_model(), tiny_train(3));
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(ckpt, path);
  const auto back = load_checkpoint(path, tiny_model());
  EXPECT_TRUE(same_params(back.params, ckpt.params));
  EXPECT_TRUE(same_params(back.adam.m(), ckpt.adam.m()));
  EXPECT_TRUE(same_params(back.adam.v(), ckpt.adam.v()));
  EXPECT_EQ(back.step, 3);
  EXPECT_EQ(back.adam.t(), 3);
  EXPECT_EQ(back.train.fingerprint(), ckpt.train.fingerprint());
  EXPECT_EQ(back.corpus_fingerprint, dataset_fingerprint(data));

  auto other = tiny_model();
  other.d2_hidden = 5;
  EXPECT_THROW(load_checkpoint(path, other), io::ContainerError);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path), io::ContainerError);
}

TEST(Training, ResumeRetracesUninterruptedRun) {
  const auto& data = corpora().multi.train;
  std::vector<double> full, resumed;
  const auto a = train_supervised(data, tiny_model(), tiny_train(50),
                                  {[&](const StepRecord& r) { full.push_back(r.loss); }, {}});

  const auto path = temp_path("resume.ckpt");
  save_checkpoint(train_supervised(data, tiny_model(), tiny_train(20),
                                   {[&](const StepRecord& r) { resumed.push_back(r.loss); }, {}}),
                  path);
  auto ckpt = load_checkpoint(path);
  fs::remove(path);
  ckpt.train.max_steps = 50;
  const Model model(ckpt.model);
  run_phase(model, ckpt, data, {"supervised", model::LossMode::kSwitch, {}, true, true}, 50,
            {[&](const StepRecord& r) { resumed.push_back(r.loss); }, {}});
  ASSERT_EQ(full.size(), 50u);
  EXPECT_EQ(resumed, full);
  EXPECT_TRUE(same_params(ckpt.params, a.params));
}

TEST(Training, LossDecreases) {
  const auto& data = corpora().multi.train;
  std::vector<StepRecord> log;
  TrainConfig cfg = tiny_train(150);
  train_supervised(data, tiny_model(), cfg, {[&](const StepRecord& r) { log.push_back(r); }, {}});
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += log[i].recon;
    last += log[log.size() - 1 - i].recon;
  }
  EXPECT_LT(last, 0.5 * first);
  EXPECT_GT(log.back().wall_time, 0.0);
}

TEST(Training, SupervisedBaselineHasNoAcousticPath) {
  auto cfg = tiny_model();
  cfg.acoustic_encoder = false;
  std::vector<StepRecord> log;
  const auto ckpt = train_supervised(corpora().multi.train, cfg, tiny_train(5),
                                     {[&](const StepRecord& r) { log.push_back(r); }, {}});
  for (const auto& r : log) EXPECT_EQ(r.enc, 0.0);
  EXPECT_THROW(adapt_decoder(ckpt, corpora().target.train.audio_only(), tiny_train(1)),
               std::invalid_argument);
}

TEST(Training, StepLogJson) {
  StepRecord r;
  r.step = 4;
  r.lr = 1e-4;
  r.loss = 2.5;
  r.recon = 2;
  r.enc = 2.5;
  r.wall_time = 0.5;
  const auto j = to_json(r);
  for (const char* key : {"step", "lr", "L", "L_recon", "L_enc", "wall_time"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["L"].get<double>(), 2.5);
  EXPECT_EQ(nlohmann::json::parse(j.dump()), j);
}

TEST(Training, DivergenceGuardSavesAndThrows) {
  const auto& data = corpora().multi.train;
  const Model model(tiny_model());
  auto ckpt = initial_checkpoint(tiny_model(), tiny_train(5));
  ckpt.params.span(model.d2().layers.front().dil_w).front() = std::nanf("");
  const auto path = temp_path("diverged.ckpt");
  fs::remove(path);
  EXPECT_THROW(run_phase(model, ckpt, data, {"supervised", model::LossMode::kSwitch, {}, true, true},
                         5, {{}, path}),
               DivergenceError);
  EXPECT_TRUE(fs::exists(path));
  EXPECT_EQ(ckpt.step, 0);
  fs::remove(path);
}

TEST(Adaptation, FreezesEncodersAndReadsNoLabels) {
  const auto phase_a = train_supervised(corpora().multi.train, tiny_model(), tiny_train(20));
  const auto& target = corpora().target.train;  // labelled, but the phase must not look
  const uint64_t reads = target.label_reads();
  std::vector<StepRecord> log;
  const auto b =
      adapt_decoder(phase_a, target, tiny_train(30), false,
                    {[&](const StepRecord& r) { log.push_back(r); }, {}});
  EXPECT_EQ(target.label_reads(), reads);
  EXPECT_TRUE(same_bytes(b.params, phase_a.params, "E_A/"));
  EXPECT_TRUE(same_bytes(b.params, phase_a.params, "E_L/"));
  EXPECT_FALSE(same_bytes(b.params, phase_a.params, "D1/"));
  EXPECT_FALSE(same_bytes(b.params, phase_a.params, "D2/"));
  for (const auto& r : log) EXPECT_EQ(r.enc, 0.0);
  EXPECT_EQ(b.step, 30);
  EXPECT_EQ(b.phase, "adapt");

  // Only the target singer's speaker row moves.
  const Model model(tiny_model());
  const auto before = phase_a.params.view(model.speaker_table());
  const auto after = b.params.view(model.speaker_table());
  const int tid = target.singer(0);
  for (int s = 0; s < before.rows(); ++s) {
    if (s == tid) {
      EXPECT_NE(before.row(s), after.row(s));
    } else {
      EXPECT_EQ(before.row(s), after.row(s));
    }
  }

  const auto scratch = adapt_decoder(phase_a, target.audio_only(), tiny_train(2), true);
  EXPECT_TRUE(same_bytes(scratch.params, phase_a.params, "E_A/"));
}

TEST(Adaptation, Deterministic) {
  const auto phase_a = train_supervised(corpora().multi.train, tiny_model(), tiny_train(5));
  const auto a = adapt_decoder(phase_a, corpora().target.train.audio_only(), tiny_train(10));
  const auto b = adapt_decoder(phase_a, corpora().target.train.audio_only(), tiny_train(10));
  EXPECT_TRUE(same_params(a.params, b.params));
}

TEST(Cloning, UnsupervisedNeverReadsLabels) {
  const auto phase_a = train_supervised(corpora().multi.train, tiny_model(), tiny_train(5));
  const auto& small = corpora().clone;
  ASSERT_TRUE(small.has_labels());
  const uint64_t reads = small.label_reads();
  const auto c = clone(phase_a, small, tiny_train(10), false);
  EXPECT_EQ(small.label_reads(), reads);
  EXPECT_EQ(c.phase, "clone");
  EXPECT_TRUE(same_bytes(c.params, phase_a.params, "E_L/"));

  const auto s = clone(phase_a, small, tiny_train(10), true);
  EXPECT_GT(small.label_reads(), reads);
  EXPECT_EQ(s.phase, "clone-supervised");
  EXPECT_FALSE(same_bytes(s.params, phase_a.params, "E_L/"));
  EXPECT_THROW(clone(phase_a, small.audio_only(), tiny_train(1), true), std::invalid_argument);
}
