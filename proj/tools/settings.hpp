#pragma once

// JSON run configuration shared by the command-line tool and the acceptance
// runner. Comments are allowed; unknown sections and keys are rejected.

#include "timbre/eval.hpp"

#include <json.hpp>

#include <string>

namespace timbre::cli {

struct CorpusSection {
  corpus::CorpusOptions multi;
  int target_songs = 12;
  int target_validation_songs = 2;
  double clone_seconds = 180.0;
  uint64_t seed = 1;
};

struct Settings {
  dsp::FeatureConfig features;
  CorpusSection corpus;
  std::string preset = "paper";
  nlohmann::json model_overrides = nlohmann::json::object();
  train::TrainConfig train;
  train::TrainConfig adapt;
  train::TrainConfig clone;
  eval::EvalOptions eval;
  nlohmann::json matrix_overrides = nlohmann::json::object();

  Settings() { clone.max_steps = 3000; }

  model::ModelConfig model(int n_phones) const;
  eval::MatrixConfig matrix(int n_phones) const;
  corpus::ExperimentCorpora corpora(const corpus::PhoneInventory& inventory) const;
  // Replaces the corpus seed and the train, adapt and clone seeds.
  void reseed(uint64_t seed);
};

Settings load_settings(const std::string& path);

// Fully resolved settings, every default spelled out.
nlohmann::json snapshot(const Settings& s, int n_phones);

}  // namespace timbre::cli
