#include "timbre/eval.hpp"

#include "timbre/util/log.hpp"

namespace timbre::eval {

void to_json(nlohmann::json& j, const MatrixConfig& c) {
  j = {{"model", c.model},       {"phase_a", c.phase_a}, {"supervised", c.supervised},
       {"adapt", c.adapt},       {"pretrain", c.pretrain}, {"clone", c.clone},
       {"eval", c.eval},         {"reference_iterations", c.reference_iterations}};
}

void from_json(const nlohmann::json& j, MatrixConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "model") value.get_to(c.model);
    else if (key == "phase_a") value.get_to(c.phase_a);
    else if (key == "supervised") value.get_to(c.supervised);
    else if (key == "adapt") value.get_to(c.adapt);
    else if (key == "pretrain") value.get_to(c.pretrain);
    else if (key == "clone") value.get_to(c.clone);
    else if (key == "eval") value.get_to(c.eval);
    else if (key == "reference_iterations") c.reference_iterations = value.get<int>();
    else throw std::invalid_argument("matrix: unknown key '" + key + "'");
  }
}

std::vector<MetricReport> run_experiment_matrix(const corpus::ExperimentCorpora& corpora,
                                                const MatrixConfig& config,
                                                const MatrixHooks& hooks) {
  if (corpora.multi.train.empty() || corpora.target.train.empty() || corpora.clone.empty() ||
      corpora.target.validation.empty()) {
    throw std::invalid_argument("run_experiment_matrix: missing corpus component");
  }
  if (!config.model.acoustic_encoder) {
    throw std::invalid_argument("run_experiment_matrix: the model needs an acoustic encoder");
  }
  model::ModelConfig baseline = config.model;
  baseline.acoustic_encoder = false;

  auto run_hooks = [&](const std::string& name) {
    train::RunHooks h;
    if (hooks.on_step) h.on_step = [&hooks, name](const train::StepRecord& r) { hooks.on_step(name, r); };
    return h;
  };
  auto finished = [&](const std::string& name, const train::Checkpoint& ckpt) {
    if (hooks.on_checkpoint) hooks.on_checkpoint(name, ckpt);
  };
  const auto& validation = corpora.target.validation;
  std::vector<MetricReport> rows;

  util::info("matrix: supervised");
  const auto supervised =
      train::train_supervised(corpora.target.train, baseline, config.supervised,
                              run_hooks("supervised"));
  finished("supervised", supervised);
  rows.push_back(evaluate(supervised, validation, config.eval, "supervised"));

  util::info("matrix: phase A");
  const auto phase_a = train::train_supervised(corpora.multi.train, config.model, config.phase_a,
                                               run_hooks("phase-a"));
  finished("phase-a", phase_a);
  util::info("matrix: semi-supervised");
  const auto semi = train::adapt_decoder(phase_a, corpora.target.train.audio_only(), config.adapt,
                                         false, run_hooks("semi-supervised"));
  finished("semi-supervised", semi);
  rows.push_back(evaluate(semi, validation, config.eval, "semi-supervised"));

  util::info("matrix: supervised cloning");
  const auto pretrain = train::train_supervised(corpora.multi.train, baseline, config.pretrain,
                                                run_hooks("pretrain"));
  finished("pretrain", pretrain);
  const auto sup_clone =
      train::clone(pretrain, corpora.clone, config.clone, true, run_hooks("supervised-cloning"));
  finished("supervised-cloning", sup_clone);
  rows.push_back(evaluate(sup_clone, validation, config.eval, "supervised-cloning"));

  util::info("matrix: semi-supervised cloning");
  const auto semi_clone = train::clone(phase_a, corpora.clone.audio_only(), config.clone, false,
                                       run_hooks("semi-supervised-cloning"));
  finished("semi-supervised-cloning", semi_clone);
  rows.push_back(evaluate(semi_clone, validation, config.eval, "semi-supervised-cloning"));

  rows.push_back(reference_report(validation, config.eval, config.reference_iterations));
  return rows;
}

}  // namespace timbre::eval
