#include "settings.hpp"

#include <fstream>
#include <stdexcept>

namespace timbre::cli {

model::ModelConfig Settings::model(int n_phones) const {
  model::ModelConfig m = preset == "toy" ? model::ModelConfig::toy(n_phones)
                                         : model::ModelConfig::paper(n_phones);
  model_overrides.get_to(m);
  m.n_phones = n_phones;
  m.n_bands = features.n_bands;
  m.validate();
  return m;
}

eval::MatrixConfig Settings::matrix(int n_phones) const {
  eval::MatrixConfig c;
  c.model = model(n_phones);
  c.phase_a = c.supervised = c.pretrain = train;
  c.adapt = adapt;
  c.clone = clone;
  c.eval = eval;
  matrix_overrides.get_to(c);
  return c;
}

corpus::ExperimentCorpora Settings::corpora(const corpus::PhoneInventory& inventory) const {
  corpus::CorpusOptions target = corpus.multi;
  target.songs_per_singer = corpus.target_songs;
  target.validation_songs = corpus.target_validation_songs;
  return corpus::build_experiment_corpora(corpus.multi, target, corpus.clone_seconds, inventory,
                                          corpus.seed);
}

void Settings::reseed(uint64_t seed) {
  corpus.seed = seed;
  for (auto* t : {&train, &adapt, &clone}) t->seed = seed;
}

Settings load_settings(const std::string& path) {
  Settings s;
  if (path.empty()) return s;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  for (const auto& [key, value] : j.items()) {
    if (key == "features") {
      value.get_to(s.features);
    } else if (key == "corpus") {
      for (const auto& [k, v] : value.items()) {
        if (k == "n_singers") s.corpus.multi.n_singers = v;
        else if (k == "songs_per_singer") s.corpus.multi.songs_per_singer = v;
        else if (k == "validation_songs") s.corpus.multi.validation_songs = v;
        else if (k == "song_seconds") s.corpus.multi.song_seconds = v;
        else if (k == "target_songs") s.corpus.target_songs = v;
        else if (k == "target_validation_songs") s.corpus.target_validation_songs = v;
        else if (k == "clone_seconds") s.corpus.clone_seconds = v;
        else if (k == "seed") s.corpus.seed = v;
        else throw std::invalid_argument("corpus: unknown key '" + k + "'");
      }
    } else if (key == "preset") {
      s.preset = value.get<std::string>();
      if (s.preset != "paper" && s.preset != "toy") {
        throw std::invalid_argument("preset must be 'paper' or 'toy'");
      }
    } else if (key == "model") {
      s.model_overrides = value;
    } else if (key == "train") {
      value.get_to(s.train);
    } else if (key == "adapt") {
      value.get_to(s.adapt);
    } else if (key == "clone") {
      value.get_to(s.clone);
    } else if (key == "eval") {
      value.get_to(s.eval);
    } else if (key == "matrix") {
      s.matrix_overrides = value;
    } else {
      throw std::invalid_argument("config: unknown section '" + key + "'");
    }
  }
  s.corpus.multi.features = s.features;
  return s;
}

nlohmann::json snapshot(const Settings& s, int n_phones) {
  const nlohmann::json c = {{"n_singers", s.corpus.multi.n_singers},
                            {"songs_per_singer", s.corpus.multi.songs_per_singer},
                            {"validation_songs", s.corpus.multi.validation_songs},
                            {"song_seconds", s.corpus.multi.song_seconds},
                            {"target_songs", s.corpus.target_songs},
                            {"target_validation_songs", s.corpus.target_validation_songs},
                            {"clone_seconds", s.corpus.clone_seconds},
                            {"seed", s.corpus.seed}};
  return {{"features", s.features}, {"corpus", c},       {"preset", s.preset},
          {"model", s.model(n_phones)}, {"train", s.train}, {"adapt", s.adapt},
          {"clone", s.clone},          {"eval", s.eval},    {"matrix", s.matrix(n_phones)}};
}

}  // namespace timbre::cli
