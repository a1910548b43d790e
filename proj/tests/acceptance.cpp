// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [IDS...] [--config FILE] [--work-dir DIR]
//
// Without ids every criterion runs. Exit status is non-zero if any fails.

#include "settings.hpp"
#include "support/gradcheck.hpp"
#include "support/micro.hpp"
#include "support/signals.hpp"
#include "timbre/eval.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace timbre;
using nn::Index;
using nn::Mat;
using nn::ParamSet;
using nn::SeqBatch;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  std::string out(std::snprintf(nullptr, 0, f, args...), '\0');
  std::snprintf(out.data(), out.size() + 1, f, args...);
  return out;
}

struct Context {
  json config;
  fs::path config_dir;
  fs::path work_dir;
  std::optional<fs::path> overfit_checkpoint;  // set by criterion 9
};

template <typename T>
SeqBatch<T> gaussian(Index n_seq, Index len, Index ch, util::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  SeqBatch<T> b(n_seq, len, ch);
  for (Index i = 0; i < b.data.size(); ++i) b.data.data()[i] = static_cast<T>(g(rng));
  return b;
}

// ---------------------------------------------------------------------------

Outcome receptive_fields(Context&) {
  const model::Model m(model::ModelConfig::paper());
  const double hop_ms = dsp::FeatureConfig{}.hop_ms;
  const auto d2 = nn::receptive_field(m.d2().config);
  const auto ea = nn::receptive_field(m.acoustic_encoder().config);
  const auto el = nn::receptive_field(m.linguistic_encoder().config);
  const bool ok = d2.total() == 39 && d2.future == 0 && d2.total() * hop_ms == 195.0 &&
                  d2.total() * hop_ms < 200.0 && ea.total() == 43 && ea.past == 21 &&
                  ea.future == 21 && el.total() == 43 && el.past == 21 && el.future == 21 &&
                  ea.total() * hop_ms == 215.0;
  return {ok, fmt("D2 %d frames (%d past) = %.0f ms; E_A %d, E_L %d frames = %.0f ms", d2.total(),
                  d2.past, d2.total() * hop_ms, ea.total(), el.total(), ea.total() * hop_ms)};
}

Outcome causality(Context&) {
  const model::Model m(model::ModelConfig::paper());
  const auto p = m.init<float>(21);
  const auto& d2 = m.d2();
  const Index len = 64;
  util::Rng rng(22);
  const auto x = gaussian<float>(1, len, d2.config.in_dim, rng);
  const auto c = gaussian<float>(1, len, d2.config.cond_dim, rng);
  SeqBatch<float> y;
  nn::block_forward(d2, p, x, &c, y);

  std::uniform_int_distribution<Index> pick(1, len - 1);
  int violations = 0, reached = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = pick(rng);
    auto xp = x;
    auto cp = c;
    const auto dx = gaussian<float>(1, len - t, d2.config.in_dim, rng, 2.0);
    const auto dc = gaussian<float>(1, len - t, d2.config.cond_dim, rng, 2.0);
    xp.data.bottomRows(len - t) += dx.data;
    cp.data.bottomRows(len - t) += dc.data;
    SeqBatch<float> yp;
    nn::block_forward(d2, p, xp, &cp, yp);
    if (!(yp.data.topRows(t).array() == y.data.topRows(t).array()).all()) ++violations;
    if ((yp.data.row(t).array() != y.data.row(t).array()).any()) ++reached;
  }
  return {violations == 0 && reached == 100,
          fmt("100 trials on a %lld-frame D2 input: %d with a changed past output, %d with a "
              "changed perturbed frame",
              static_cast<long long>(len), violations, reached)};
}

Outcome ar_consistency(Context&) {
  const model::Model m(model::ModelConfig::paper());
  double worst = 0;
  for (uint64_t seed : {31, 32, 33}) {
    const auto p = m.init<float>(seed);
    const Index len = 50;
    auto b = testing::random_batch<float>(m.config(), 1, len, seed + 100);
    b.speakers = {static_cast<int>(seed % 3)};
    const Mat<float> e = model::encode_linguistic(m, p, b.phones, len);
    const Mat<float> c = model::control_track(m, p, b.f0, b.speakers, len);
    const Mat<float> tf =
        model::decode_teacher_forced(m, p, e, c, b.mel, len, model::NoiseSpec{0, 0, 0.5}, 1);
    const Mat<float> ar = model::decode_autoregressive(m, p, e, c, &b.mel);
    worst = std::max(worst, static_cast<double>((tf - ar).cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-5, fmt("max |step-wise - teacher-forced| = %.3g over 3 x 50 frames", worst)};
}

// Parameter, input and conditioning gradients of sum(y * proj) for a block.
double block_gradient_error(const nn::BlockConfig& config, uint64_t seed) {
  auto bp = nn::init_params<double>(config, seed);
  util::Rng rng(seed + 1);
  std::normal_distribution<double> g(0, 0.3);
  for (auto& v : bp.params.values()) v += g(rng);
  const Index n_seq = 2, len = 12;
  const bool has_cond = config.cond_dim > 0;
  const auto x = gaussian<double>(n_seq, len, config.in_dim, rng);
  const auto cond = gaussian<double>(n_seq, len, std::max(config.cond_dim, 1), rng);
  const auto proj = gaussian<double>(n_seq, len, config.out_channels, rng);
  auto loss = [&](const SeqBatch<double>& xin, const SeqBatch<double>& cin) {
    SeqBatch<double> y;
    nn::block_forward(bp.block, bp.params, xin, has_cond ? &cin : nullptr, y);
    return (y.data.array() * proj.data.array()).sum();
  };

  nn::BlockCache<double> cache;
  SeqBatch<double> y;
  nn::block_forward(bp.block, bp.params, x, has_cond ? &cond : nullptr, y, &cache);
  ParamSet<double> grads(bp.params.layout_ptr());
  Mat<double> dx;
  Mat<double> dcond = Mat<double>::Zero(cond.data.rows(), cond.data.cols());
  nn::block_backward(bp.block, bp.params, cache, proj.data, grads, &dx,
                     has_cond ? &dcond : nullptr);
  double worst = testing::check_gradients(bp.params, grads, [&] { return loss(x, cond); })
                     .max_rel_error;

  const double h = 1e-6;
  auto rel = [](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
  };
  const auto dir_x = gaussian<double>(n_seq, len, config.in_dim, rng);
  auto xp = x, xm = x;
  xp.data += h * dir_x.data;
  xm.data -= h * dir_x.data;
  const double num_x = (loss(xp, cond) - loss(xm, cond)) / (2 * h);
  worst = std::max(worst, rel((dx.array() * dir_x.data.array()).sum(), num_x));
  if (has_cond) {
    const auto dir_c = gaussian<double>(n_seq, len, config.cond_dim, rng);
    auto cp = cond, cm = cond;
    cp.data += h * dir_c.data;
    cm.data -= h * dir_c.data;
    const double num_c = (loss(x, cp) - loss(x, cm)) / (2 * h);
    worst = std::max(worst, rel((dcond.array() * dir_c.data.array()).sum(), num_c));
  }
  return worst;
}

Outcome gradients(Context&) {
  const auto cfg = testing::micro_config();
  const model::Model m(cfg);
  std::map<std::string, double> err;
  err["E_A"] = block_gradient_error(m.acoustic_encoder().config, 41);
  err["E_L"] = block_gradient_error(m.linguistic_encoder().config, 42);
  err["D1"] = block_gradient_error(m.d1().config, 43);
  err["D2"] = block_gradient_error(m.d2().config, 44);

  auto p = m.init<double>(45);
  util::Rng rng(46);
  std::normal_distribution<double> g(0, 0.1);
  for (auto& v : p.values()) v += g(rng);
  const auto batch = testing::random_batch<double>(cfg, 2, 20, 47);
  double loss_err = 0;
  for (std::optional<int> k : {std::optional<int>(0), std::optional<int>(1), std::optional<int>()}) {
    model::LossOptions opt;
    opt.fixed_k = k;
    ParamSet<double> grads(m.layout());
    model::loss_terms(m, p, batch, opt, 48, &grads);
    const auto r = testing::check_gradients(
        p, grads, [&] { return model::loss_terms(m, p, batch, opt, 48).total; });
    loss_err = std::max(loss_err, r.max_rel_error);
  }
  err["loss"] = loss_err;

  bool ok = true;
  std::string detail = "max relative error:";
  for (const auto& [name, e] : err) {
    ok = ok && e < 1e-3;
    detail += fmt(" %s %.2g", name.c_str(), e);
  }
  return {ok, detail};
}

bool group_all_zero(const ParamSet<double>& g, const model::Model& m, const std::string& prefix) {
  for (int id : m.group(prefix)) {
    for (double v : g.span(id)) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

Outcome gradient_routing(Context&) {
  const auto cfg = model::ModelConfig::toy();
  const model::Model m(cfg);
  const auto p = m.init<double>(51);
  const auto batch = testing::random_batch<double>(cfg, 2, 40, 52);
  model::LossOptions opt;
  opt.lambda_enc = 0.0;
  bool ok = true;
  std::string detail;
  for (int k : {1, 0}) {
    opt.fixed_k = k;
    ParamSet<double> grads(m.layout());
    model::loss_terms(m, p, batch, opt, 53, &grads);
    const std::string silent = k == 1 ? "E_L/" : "E_A/";
    const std::string live = k == 1 ? "E_A/" : "E_L/";
    const bool zero = group_all_zero(grads, m, silent);
    const bool reaches = !group_all_zero(grads, m, live);
    ok = ok && zero && reaches;
    detail += fmt("k=%d: %s gradient %s, %s gradient %s; ", k, silent.substr(0, 3).c_str(),
                  zero ? "exactly zero" : "NON-ZERO", live.substr(0, 3).c_str(),
                  reaches ? "non-zero" : "ZERO");
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome loss_identities(Context&) {
  const auto cfg = testing::micro_config();
  const model::Model m(cfg);
  const model::LossOptions opt;
  const train::TrainConfig train_defaults;

  auto p = m.init<double>(61);
  auto batch = testing::random_batch<double>(cfg, 2, 20, 62);
  double worst = 0;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const auto t = model::loss_terms(m, p, batch, opt, seed);
    worst = std::max(worst, std::abs(t.total - (1.0 * t.recon + 0.2 * t.enc)) / t.total);
  }
  const bool weights = opt.lambda_recon == 1.0 && opt.lambda_enc == 0.2 &&
                       train_defaults.lambda_recon == 1.0 && train_defaults.lambda_enc == 0.2;

  // Both encoders emit the same non-zero constant.
  auto q = m.init<double>(63);
  util::Rng rng(64);
  const auto bias = gaussian<double>(1, 1, cfg.embedding_dim, rng);
  for (const auto* enc : {&m.acoustic_encoder(), &m.linguistic_encoder()}) {
    q.view(enc->out2_w).setZero();
    q.view(enc->out2_b) = bias.data;
  }
  model::Trace<double> trace;
  const double enc = model::loss_terms(m, q, batch, opt, 65, nullptr, &trace).enc;
  const bool nontrivial = trace.ea.cwiseAbs().minCoeff() > 0;

  // D2 emitting the target exactly.
  auto r = m.init<double>(66);
  r.view(m.d2().out2_w).setZero();
  const double value = -4.0;
  r.view(m.d2().out2_b).setConstant((value - cfg.mel_offset) * cfg.mel_scale);
  batch.mel.setConstant(value);
  const double recon = model::loss_terms(m, r, batch, opt, 67).recon;

  const bool ok = weights && worst <= 4 * std::numeric_limits<double>::epsilon() && enc == 0.0 &&
                  nontrivial && recon <= 1e-24;
  return {ok, fmt("|L - (L_recon + 0.2 L_enc)| / L <= %.2g; L_enc = %g with coinciding embeddings; "
                  "L_recon = %.2g on perfect reconstruction",
                  worst, enc, recon)};
}

Outcome schedule(Context&) {
  const train::TrainConfig c;
  const double a = train::lr_schedule(700, c);
  const double b = train::lr_schedule(350, c);
  const double d = train::lr_schedule(10700, c);
  const bool ok =
      std::abs(a - 5e-4) <= 1e-12 && std::abs(b - 2.5e-4) <= 1e-12 && std::abs(d - 7.5e-5) <= 1e-12;
  return {ok, fmt("lr(700) = %.12g, lr(350) = %.12g, lr(10700) = %.12g", a, b, d)};
}

Outcome freeze_contract(Context& ctx) {
  const auto inv = corpus::PhoneInventory::default_inventory();
  corpus::CorpusOptions multi;
  multi.n_singers = 2;
  multi.songs_per_singer = 2;
  multi.song_seconds = 4.0;
  const auto c = corpus::build_experiment_corpora(multi, multi, 4.0, inv, 71);
  const auto model_cfg = model::ModelConfig::toy(inv.size());
  train::TrainConfig t;
  t.batch_size = 2;
  t.valid_frames = 50;
  t.max_steps = 20;
  t.seed = 72;
  const fs::path path = ctx.work_dir / "freeze_phase_a.ckpt";
  train::save_checkpoint(train::train_supervised(c.multi.train, model_cfg, t), path);
  const auto phase_a = train::load_checkpoint(path);

  t.max_steps = 200;
  const auto target = c.target.train.audio_only();
  const auto adapted = train::adapt_decoder(phase_a, target, t);
  const bool ea = train::same_bytes(adapted.params, phase_a.params, "E_A/");
  const bool el = train::same_bytes(adapted.params, phase_a.params, "E_L/");
  const bool moved = !train::same_bytes(adapted.params, phase_a.params, "D2/");
  return {ea && el && moved && adapted.step == 200 && target.label_reads() == 0,
          fmt("after %lld adaptation steps: E_A %s, E_L %s, D2 %s; %llu label reads",
              static_cast<long long>(adapted.step), ea ? "identical" : "CHANGED",
              el ? "identical" : "CHANGED", moved ? "updated" : "UNCHANGED",
              static_cast<unsigned long long>(target.label_reads()))};
}

struct OverfitRun {
  double initial = 0;
  double final = 0;
  int64_t reached_at = -1;  // first step whose 20-step mean is below target
  train::Checkpoint ckpt;
};

OverfitRun overfit_run(const Context& ctx) {
  const json& o = ctx.config.at("overfit");
  const auto inv = corpus::PhoneInventory::default_inventory();
  corpus::CorpusOptions opt;
  opt.n_singers = 1;
  opt.songs_per_singer = 1;
  opt.validation_songs = 0;
  opt.song_seconds = o.at("song_seconds").get<double>();
  const auto split = corpus::build_corpus(opt, inv, o.at("seed").get<uint64_t>());
  if (split.train.size() != 1) throw std::logic_error("overfit corpus is not one utterance");

  train::TrainConfig t;
  o.at("train").get_to(t);
  t.max_steps = o.at("steps").get<int>();
  const double fraction = o.at("target_fraction").get<double>();

  OverfitRun run;
  std::vector<double> recon;
  const int window = 20;
  double window_sum = 0;
  train::RunHooks hooks;
  hooks.on_step = [&](const train::StepRecord& r) {
    recon.push_back(r.recon);
    window_sum += r.recon;
    if (recon.size() > static_cast<size_t>(window)) window_sum -= recon[recon.size() - 1 - window];
    if (recon.size() == 1) run.initial = r.recon;
    if (recon.size() >= static_cast<size_t>(window) && run.reached_at < 0 &&
        window_sum / window < fraction * run.initial) {
      run.reached_at = r.step;
    }
    if (r.step % 500 == 0) {
      std::cerr << fmt("  overfit step %lld  L_recon %.4g\n", static_cast<long long>(r.step),
                       r.recon);
    }
  };
  run.ckpt = train::train_supervised(split.train, model::ModelConfig::toy(inv.size()), t, hooks);
  run.final = window_sum / window;
  return run;
}

Outcome overfit(Context& ctx) {
  const auto run = overfit_run(ctx);
  const fs::path path = ctx.work_dir / "overfit_a.ckpt";
  train::save_checkpoint(run.ckpt, path);
  ctx.overfit_checkpoint = path;
  const double fraction = ctx.config.at("overfit").at("target_fraction").get<double>();
  return {run.reached_at > 0,
          fmt("L_recon %.4g -> %.4g (%.2f%% of initial, 20-step mean); below %.0f%% at step %lld",
              run.initial, run.final, 100 * run.final / run.initial, 100 * fraction,
              static_cast<long long>(run.reached_at))};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(Context& ctx) {
  if (!ctx.overfit_checkpoint) {
    const fs::path first = ctx.work_dir / "overfit_a.ckpt";
    train::save_checkpoint(overfit_run(ctx).ckpt, first);
    ctx.overfit_checkpoint = first;
  }
  // The second run starts from a different heap state.
  std::vector<char> shift(4100, 1);
  const fs::path second = ctx.work_dir / "overfit_b.ckpt";
  train::save_checkpoint(overfit_run(ctx).ckpt, second);
  const auto a = file_bytes(*ctx.overfit_checkpoint);
  const auto b = file_bytes(second);
  return {!a.empty() && a == b,
          fmt("two overfit runs: checkpoints of %zu and %zu bytes, %s", a.size(), b.size(),
              a == b ? "bit-identical" : "DIFFERENT")};
}

Outcome protocol(Context& ctx) {
  const fs::path protocol_path = ctx.config_dir / ctx.config.at("protocol").get<std::string>();
  const auto settings = cli::load_settings(protocol_path.string());
  const auto inv = corpus::PhoneInventory::default_inventory();
  const auto corpora = settings.corpora(inv);
  const auto matrix = settings.matrix(inv.size());
  std::cerr << fmt("  corpora: multi %.0f s (%d singers), target %.0f s, clone %.0f s\n",
                   corpora.multi.train.duration_s(),
                   static_cast<int>(corpora.multi.train.singers().size()),
                   corpora.target.train.duration_s(), corpora.clone.duration_s());

  std::ofstream steps(ctx.work_dir / "protocol_steps.jsonl");
  eval::MatrixHooks hooks;
  hooks.on_step = [&](const std::string& run, const train::StepRecord& r) {
    if (r.step % 100 != 0) return;
    auto j = train::to_json(r);
    j["run"] = run;
    steps << j.dump() << '\n';
    if (r.step % 1000 == 0) {
      std::cerr << fmt("  %s step %lld  L_recon %.4g\n", run.c_str(),
                       static_cast<long long>(r.step), r.recon);
    }
  };
  const auto rows = eval::run_experiment_matrix(corpora, matrix, hooks);
  std::ofstream report(ctx.work_dir / "protocol_report.jsonl");
  std::map<std::string, eval::MetricReport> by_name;
  for (const auto& r : rows) {
    report << eval::to_json(r).dump() << '\n';
    by_name[r.system] = r;
  }
  const auto& sup = by_name.at("supervised");
  const auto& semi = by_name.at("semi-supervised");
  const json& th = ctx.config.at("thresholds");
  const double max_ratio = th.at("ar_error_ratio").get<double>();
  const double min_probe = th.at("probe_accuracy").get<double>();
  const double max_invariance = th.at("invariance_ratio").get<double>();

  const double ratio = semi.recon_autoregressive / sup.recon_autoregressive;
  const double probe_l = semi.probe_linguistic.test_accuracy;
  const double probe_a = semi.probe_acoustic.test_accuracy;
  const bool a = ratio <= max_ratio;
  const bool b = probe_l > min_probe && probe_a > min_probe;
  const bool c = semi.invariance_ratio < max_invariance;
  return {a && b && c,
          fmt("(a) AR error %.3g vs supervised %.3g, ratio %.3f <= %.2f %s; (b) probe E_L %.3f, "
              "E_A %.3f > %.2f %s; (c) invariance %.3f < %.2f %s",
              semi.recon_autoregressive, sup.recon_autoregressive, ratio, max_ratio,
              a ? "ok" : "FAIL", probe_l, probe_a, min_probe, b ? "ok" : "FAIL",
              semi.invariance_ratio, max_invariance, c ? "ok" : "FAIL")};
}

Outcome augmentation(Context&) {
  const dsp::FeatureConfig cfg;
  const std::vector<double> freqs{220.0, 440.0, 880.0, 1500.0, 3000.0};
  const std::vector<int> semitones{-4, -2, 0, 2, 4};
  int band_ok = 0, frames_ok = 0, total = 0;
  std::string misses;
  for (double f : freqs) {
    const auto clip = testing::tone(f, 1.0);
    const Index labels = dsp::compute_mel(clip, cfg).n_frames();
    for (int s : semitones) {
      const double factor = std::pow(2.0, s / 12.0);
      const auto mel = dsp::transpose_augment(clip, labels, factor, cfg);
      ++total;
      frames_ok += mel.n_frames() == labels;
      const int want = testing::nearest_band(f * factor, cfg);
      // Frames clear of the clip edges.
      bool all = true;
      for (Index t = 10; t + 10 < mel.n_frames(); ++t) all = all && testing::argmax_band(mel, t) == want;
      band_ok += all;
      if (!all) misses += fmt(" %.0fHz*2^(%d/12)", f, s);
    }
  }
  return {band_ok == total && frames_ok == total,
          fmt("%d/%d dominant bands at the nearest band, %d/%d frame counts equal%s", band_ok,
              total, frames_ok, total, misses.empty() ? "" : ("; missed:" + misses).c_str())};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome(Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "receptive-field", 1, receptive_fields},
      {2, "causality", 10, causality},
      {3, "ar-consistency", 10, ar_consistency},
      {4, "gradients", 120, gradients},
      {5, "gradient-routing", 30, gradient_routing},
      {6, "loss-identities", 1, loss_identities},
      {7, "schedule", 1, schedule},
      {8, "freeze-contract", 60, freeze_contract},
      {9, "overfit", 900, overfit},
      {10, "protocol", 7200, protocol},
      {11, "determinism", 1800, determinism},
      {12, "augmentation", 30, augmentation},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> ids;
  std::string config_path = TIMBRE_ACCEPTANCE_CONFIG;
  std::string work_dir;
  app.add_option("ids", ids, "Criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--config", config_path, "Acceptance configuration")->check(CLI::ExistingFile);
  app.add_option("--work-dir", work_dir, "Checkpoints and reports (default: a temporary directory)");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  {
    std::ifstream in(config_path);
    ctx.config = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  }
  ctx.config_dir = fs::path(config_path).parent_path();
  ctx.work_dir = work_dir.empty() ? fs::temp_directory_path() / "timbre_acceptance" : fs::path(work_dir);
  fs::create_directories(ctx.work_dir);

  int failed = 0;
  for (const auto& c : criteria()) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), c.id) == ids.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(ctx);
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = s < c.budget_s;
    const bool pass = out.pass && in_budget;
    failed += !pass;
    std::cout << fmt("%s %2d %-17s %s [%.2f s, budget %.0f s%s]", pass ? "PASS" : "FAIL", c.id,
                     c.name, out.detail.c_str(), s, c.budget_s, in_budget ? "" : ", EXCEEDED")
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
