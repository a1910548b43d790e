// timbre: command-line front end.
//
//   timbre gen-corpus --out DIR
//   timbre features   IN.wav --out OUT.mel
//   timbre train      DATA --out CKPT [--supervised]
//   timbre adapt      DATA --checkpoint CKPT --out CKPT [--from-scratch]
//   timbre clone      DATA --checkpoint CKPT --out CKPT [--supervised]
//   timbre synth      PHONES F0 --checkpoint CKPT --out OUT.mel [--speaker N] [--wav OUT.wav]
//   timbre convert    IN.wav F0 --checkpoint CKPT --out OUT.mel [--speaker N]
//   timbre eval       DATA --checkpoint CKPT --out REPORT.jsonl
//   timbre matrix     DIR --out DIR
//   timbre plot       CONTAINER --out OUT.png
//
// Every command accepts --config FILE (JSON, see configs/) and --seed N.

#include "settings.hpp"
#include "timbre/container.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace timbre;
using cli::load_settings;
using cli::Settings;

namespace {

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Resolved configuration next to an output file or inside an output directory.
void write_snapshot(const Settings& s, int n_phones, const fs::path& out, const json& extra = {}) {
  json j = snapshot(s, n_phones);
  if (!extra.is_null()) j["run"] = extra;
  const fs::path path =
      fs::is_directory(out) ? out / "config.resolved.json" : fs::path(out.string() + ".config.json");
  write_json_file(j, path);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct Loaded {
  corpus::Dataset data;
  corpus::PhoneInventory inventory;
};

// Only symbol lookup is needed downstream; kinds follow the synthetic chart.
corpus::PhoneInventory inventory_from(const json& symbols) {
  if (!symbols.is_array()) return corpus::PhoneInventory::default_inventory();
  const auto chart = corpus::PhoneInventory::synthetic(30, 12);
  std::vector<std::string> syms = symbols.get<std::vector<std::string>>();
  std::vector<corpus::PhoneKind> kinds;
  for (const auto& sym : syms) {
    kinds.push_back(sym == "sil" ? corpus::PhoneKind::kSilence : corpus::PhoneKind::kVowel);
    for (const auto& known : chart.symbols()) {
      if (known == sym) kinds.back() = chart.kind(chart.id(sym));
    }
  }
  return corpus::PhoneInventory(syms, kinds);
}

Loaded load_data(const fs::path& path, const Settings& s) {
  const auto header = io::read_container(path);
  dsp::FeatureConfig stored;
  header.meta.at("feature_config").get_to(stored);
  if (stored.fingerprint() != s.features.fingerprint()) {
    throw std::invalid_argument(path.string() +
                                ": feature configuration differs from the active config");
  }
  return {corpus::load_features(path, s.features), inventory_from(header.meta.value("inventory", json()))};
}

train::RunHooks logging_hooks(const fs::path& out, std::ofstream& log) {
  log.open(out.string() + ".log.jsonl");
  train::RunHooks h;
  h.on_step = [&log](const train::StepRecord& r) {
    log << train::to_json(r).dump() << '\n';
    if (r.step % 100 == 0) {
      log.flush();
      std::cerr << "step " << r.step << "  L " << r.loss << "  L_recon " << r.recon << '\n';
    }
  };
  h.checkpoint_path = out;
  return h;
}

void annotate(train::Checkpoint& ckpt, const Settings& s, const corpus::PhoneInventory& inv) {
  ckpt.extra["features"] = s.features;
  ckpt.extra["inventory"] = inv.symbols();
}

int default_speaker(const train::Checkpoint& ckpt) {
  for (const char* key : {"target_singers", "singers"}) {
    if (ckpt.extra.contains(key) && !ckpt.extra[key].empty()) return ckpt.extra[key].front();
  }
  return 0;
}

dsp::FeatureConfig checkpoint_features(const train::Checkpoint& ckpt, const Settings& s) {
  if (ckpt.extra.contains("features")) return ckpt.extra["features"].get<dsp::FeatureConfig>();
  return s.features;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw std::invalid_argument(std::string(what) + " not found: " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised timbre model: corpus, training, inference, evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<uint64_t> seed;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Overrides every seed in the configuration");

  std::string out, checkpoint, input, input2;
  std::optional<int> steps, speaker;
  bool from_scratch = false, supervised = false;
  std::string wav_out;

  auto add_out = [&](CLI::App* c) { c->add_option("--out", out, "Output path")->required(); };
  auto add_ckpt = [&](CLI::App* c) {
    c->add_option("--checkpoint", checkpoint, "Input checkpoint")->required()->check(CLI::ExistingFile);
  };

  auto* gen = app.add_subcommand("gen-corpus", "Synthesize the multi-singer, target and cloning corpora");
  add_out(gen);
  auto* feat = app.add_subcommand("features", "Log-mel features of a WAV file");
  feat->add_option("wav", input, "Input WAV")->required();
  add_out(feat);
  auto* tr = app.add_subcommand("train", "Phase A: supervised encoder-decoder training");
  tr->add_option("data", input, "Labelled feature file")->required();
  add_out(tr);
  tr->add_option("--steps", steps, "Training steps");
  tr->add_flag("--supervised", supervised, "Supervised baseline without acoustic encoder");
  auto* ad = app.add_subcommand("adapt", "Phase B: decoder adaptation from audio only");
  ad->add_option("data", input, "Target feature file")->required();
  add_ckpt(ad);
  add_out(ad);
  ad->add_option("--steps", steps, "Training steps");
  ad->add_flag("--from-scratch", from_scratch, "Re-initialize the decoders first");
  auto* cl = app.add_subcommand("clone", "Cloning from a small target corpus");
  cl->add_option("data", input, "Cloning feature file")->required();
  add_ckpt(cl);
  add_out(cl);
  cl->add_option("--steps", steps, "Training steps (default 3000)");
  cl->add_flag("--supervised", supervised, "Fine-tune everything with labels");
  auto* sy = app.add_subcommand("synth", "Mel from phone timings and F0");
  sy->add_option("phones", input, "Phone timing file")->required();
  sy->add_option("f0", input2, "F0 file")->required();
  add_ckpt(sy);
  add_out(sy);
  sy->add_option("--speaker", speaker, "Speaker id (default: the checkpoint's target)");
  sy->add_option("--wav", wav_out, "Also write Griffin-Lim audio");
  auto* cv = app.add_subcommand("convert", "Voice conversion of a WAV file");
  cv->add_option("wav", input, "Source WAV")->required();
  cv->add_option("f0", input2, "F0 file")->required();
  add_ckpt(cv);
  add_out(cv);
  cv->add_option("--speaker", speaker, "Target speaker id (default: the checkpoint's target)");
  auto* ev = app.add_subcommand("eval", "Objective metrics on a labelled feature file");
  ev->add_option("data", input, "Validation feature file")->required();
  add_ckpt(ev);
  add_out(ev);
  auto* mx = app.add_subcommand("matrix", "Train and score every system of the comparison");
  mx->add_option("corpus", input, "Directory written by gen-corpus")->required();
  add_out(mx);
  auto* pl = app.add_subcommand("plot", "PNG heatmap of a mel container");
  pl->add_option("container", input, "Mel or feature container")->required();
  add_out(pl);

  CLI11_PARSE(app, argc, argv);

  try {
    Settings s = load_settings(config_path);
    if (seed) s.reseed(*seed);
    const fs::path out_path = out;

    if (gen->parsed()) {
      const auto inv = corpus::PhoneInventory::default_inventory();
      const auto c = s.corpora(inv);
      fs::create_directories(out_path);
      corpus::save_features(c.multi.train, out_path / "multi_train.tfc", &inv);
      corpus::save_features(c.multi.validation, out_path / "multi_valid.tfc", &inv);
      corpus::save_features(c.target.train, out_path / "target_train.tfc", &inv);
      corpus::save_features(c.target.validation, out_path / "target_valid.tfc", &inv);
      corpus::save_features(c.clone, out_path / "target_clone.tfc", &inv);
      // One validation utterance as plain files, for synth and convert.
      const auto& v = c.target.validation;
      corpus::write_phone_timings(out_path / "example.phones", v.labels(0), inv, s.features);
      corpus::write_f0_file(out_path / "example.f0", v.f0(0), s.features);
      dsp::save_wav(v.audio(0), out_path / "example.wav");
      write_snapshot(s, inv.size(), out_path);
      std::cout << json{{"multi_train_s", c.multi.train.duration_s()},
                        {"target_train_s", c.target.train.duration_s()},
                        {"clone_s", c.clone.duration_s()},
                        {"target_singer", c.target.train.singer(0)}}
                       .dump()
                << '\n';
    } else if (feat->parsed()) {
      require_file(input, "WAV");
      const auto clip = dsp::load_wav(input);
      ensure_parent(out_path);
      eval::save_mel(dsp::compute_mel(clip, s.features), s.features, out_path,
                     {{"source", input}});
    } else if (tr->parsed()) {
      const auto d = load_data(input, s);
      auto m = s.model(d.inventory.size());
      if (supervised) m.acoustic_encoder = false;
      if (steps) s.train.max_steps = *steps;
      ensure_parent(out_path);
      write_snapshot(s, d.inventory.size(), out_path, {{"command", "train"}, {"data", input}});
      auto ckpt = train::initial_checkpoint(m, s.train);
      ckpt.phase = "supervised";
      ckpt.corpus_fingerprint = train::dataset_fingerprint(d.data);
      ckpt.extra["singers"] = d.data.singers();
      annotate(ckpt, s, d.inventory);
      std::ofstream log;
      const auto hooks = logging_hooks(out_path, log);
      const model::Model model(m);
      train::run_phase(model, ckpt, d.data,
                       {"supervised", model::LossMode::kSwitch, {}, true, true},
                       s.train.max_steps, hooks);
      train::save_checkpoint(ckpt, out_path);
    } else if (ad->parsed() || cl->parsed()) {
      const bool adapting = ad->parsed();
      auto& cfg = adapting ? s.adapt : s.clone;
      if (steps) cfg.max_steps = *steps;
      const auto base = train::load_checkpoint(checkpoint);
      const auto d = load_data(input, s);
      ensure_parent(out_path);
      write_snapshot(s, d.inventory.size(), out_path,
                     {{"command", adapting ? "adapt" : "clone"},
                      {"data", input},
                      {"checkpoint", checkpoint},
                      {"from_scratch", from_scratch},
                      {"supervised", supervised}});
      std::ofstream log;
      const auto hooks = logging_hooks(out_path, log);
      // Unsupervised phases see audio-only data.
      const bool labelled = !adapting && supervised;
      const corpus::Dataset data = labelled ? d.data : d.data.audio_only();
      auto result = adapting ? train::adapt_decoder(base, data, cfg, from_scratch, hooks)
                             : train::clone(base, data, cfg, supervised, hooks);
      train::save_checkpoint(result, out_path);
    } else if (sy->parsed()) {
      const auto ckpt = train::load_checkpoint(checkpoint);
      const auto features = checkpoint_features(ckpt, s);
      const auto inv = inventory_from(ckpt.extra.value("inventory", json()));
      require_file(input, "phone timing file");
      require_file(input2, "F0 file");
      const auto mel = eval::synthesize(ckpt, corpus::read_phone_timings(input, inv),
                                        corpus::read_f0_file(input2),
                                        speaker.value_or(default_speaker(ckpt)), features);
      ensure_parent(out_path);
      eval::save_mel(mel, features, out_path, {{"phones", input}, {"f0", input2}});
      if (!wav_out.empty()) dsp::save_wav(dsp::griffin_lim(mel, features), wav_out);
      std::cout << json{{"frames", mel.n_frames()}, {"bands", mel.n_bands()}}.dump() << '\n';
    } else if (cv->parsed()) {
      const auto ckpt = train::load_checkpoint(checkpoint);
      const auto features = checkpoint_features(ckpt, s);
      require_file(input, "source WAV");
      if (!fs::exists(input2)) throw std::invalid_argument("F0 file not found: " + input2);
      const auto mel = eval::convert(ckpt, dsp::load_wav(input), corpus::read_f0_file(input2),
                                     speaker.value_or(default_speaker(ckpt)), features);
      ensure_parent(out_path);
      eval::save_mel(mel, features, out_path, {{"source", input}, {"f0", input2}});
      std::cout << json{{"frames", mel.n_frames()}, {"bands", mel.n_bands()}}.dump() << '\n';
    } else if (ev->parsed()) {
      const auto ckpt = train::load_checkpoint(checkpoint);
      const auto d = load_data(input, s);
      const auto report = eval::evaluate(ckpt, d.data, s.eval);
      ensure_parent(out_path);
      std::ofstream f(out_path);
      f << eval::to_json(report).dump() << '\n';
      std::cout << eval::to_json(report).dump(2) << '\n';
    } else if (mx->parsed()) {
      const fs::path dir = input;
      corpus::ExperimentCorpora c;
      auto multi = load_data(dir / "multi_train.tfc", s);
      c.multi.train = std::move(multi.data);
      c.target.train = load_data(dir / "target_train.tfc", s).data;
      c.target.validation = load_data(dir / "target_valid.tfc", s).data;
      c.clone = load_data(dir / "target_clone.tfc", s).data;
      auto cfg = s.matrix(multi.inventory.size());
      if (seed) {
        for (auto* t : {&cfg.phase_a, &cfg.supervised, &cfg.adapt, &cfg.pretrain, &cfg.clone}) {
          t->seed = *seed;
        }
      }
      if (steps) {
        for (auto* t : {&cfg.phase_a, &cfg.supervised, &cfg.adapt, &cfg.pretrain, &cfg.clone}) {
          t->max_steps = *steps;
        }
      }
      fs::create_directories(out_path);
      write_snapshot(s, multi.inventory.size(), out_path, {{"command", "matrix"}, {"corpus", input}});
      std::ofstream log(out_path / "train.log.jsonl");
      eval::MatrixHooks hooks;
      hooks.on_step = [&log](const std::string& run, const train::StepRecord& r) {
        auto j = train::to_json(r);
        j["run"] = run;
        log << j.dump() << '\n';
      };
      hooks.on_checkpoint = [&](const std::string& run, const train::Checkpoint& ck) {
        train::Checkpoint copy = ck;
        annotate(copy, s, multi.inventory);
        train::save_checkpoint(copy, out_path / (run + ".ckpt"));
      };
      const auto rows = eval::run_experiment_matrix(c, cfg, hooks);
      std::ofstream report(out_path / "report.jsonl");
      for (const auto& r : rows) {
        report << eval::to_json(r).dump() << '\n';
        std::cout << eval::to_json(r).dump() << '\n';
      }
    } else if (pl->parsed()) {
      dsp::FeatureConfig features;
      const auto mel = eval::load_mel(input, &features);
      ensure_parent(out_path);
      eval::write_png(eval::render_mel_figure(mel, features.hop_ms / 1000.0), out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
