#include "timbre/train.hpp"

#include "timbre/util/random.hpp"

namespace timbre::train {

Checkpoint initial_checkpoint(const ModelConfig& model_config, const TrainConfig& train) {
  train.validate();
  const Model model(model_config);
  Checkpoint c;
  c.model = model_config;
  c.train = train;
  c.params = model.init<float>(util::derive_seed(train.seed, 0x1417));
  c.adam = Adam<float>(model.layout(), train.beta1, train.beta2, train.adam_eps);
  c.phase = "init";
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::Container c;
  c.fingerprint = ckpt.model.fingerprint();
  c.meta["kind"] = "checkpoint";
  c.meta["model"] = ckpt.model;
  c.meta["train"] = ckpt.train;
  c.meta["train_fingerprint"] = ckpt.train.fingerprint();
  c.meta["corpus_fingerprint"] = ckpt.corpus_fingerprint;
  c.meta["step"] = ckpt.step;
  c.meta["adam_t"] = ckpt.adam.t();
  c.meta["phase"] = ckpt.phase;
  c.meta["extra"] = ckpt.extra;
  const auto& layout = ckpt.params.layout();
  for (size_t id = 0; id < layout.entries().size(); ++id) {
    const auto& e = layout.entries()[id];
    const std::vector<int64_t> shape{e.rows, e.cols};
    c.add<float>("param/" + e.name, shape, ckpt.params.span(int(id)));
    c.add<float>("adam_m/" + e.name, shape, ckpt.adam.m().span(int(id)));
    c.add<float>("adam_v/" + e.name, shape, ckpt.adam.v().span(int(id)));
  }
  io::write_container(c, path);
}

namespace {

Checkpoint from_container(const io::Container& c, const std::filesystem::path& path) {
  if (c.meta.value("kind", "") != "checkpoint") {
    throw io::ContainerError(path.string() + ": not a checkpoint");
  }
  Checkpoint ckpt;
  ckpt.model = c.meta.at("model").get<ModelConfig>();
  ckpt.train = c.meta.at("train").get<TrainConfig>();
  if (ckpt.model.fingerprint() != c.fingerprint) {
    throw io::ContainerError(path.string() + ": model configuration does not match fingerprint");
  }
  ckpt.corpus_fingerprint = c.meta.at("corpus_fingerprint").get<std::string>();
  ckpt.step = c.meta.at("step").get<int64_t>();
  ckpt.phase = c.meta.at("phase").get<std::string>();
  ckpt.extra = c.meta.at("extra");
  const Model model(ckpt.model);
  ckpt.params = ParamSet<float>(model.layout());
  ckpt.adam = Adam<float>(model.layout(), ckpt.train.beta1, ckpt.train.beta2,
                          ckpt.train.adam_eps);
  ckpt.adam.set_t(c.meta.at("adam_t").get<int64_t>());
  const auto& layout = *model.layout();
  for (size_t id = 0; id < layout.entries().size(); ++id) {
    const auto& e = layout.entries()[id];
    auto fill = [&](const std::string& name, ParamSet<float>& dst) {
      std::vector<int64_t> shape;
      const auto v = c.read<float>(name, &shape);
      if (shape != std::vector<int64_t>{e.rows, e.cols}) {
        throw io::ContainerError(path.string() + ": tensor " + name + " has the wrong shape");
      }
      std::copy(v.begin(), v.end(), dst.span(int(id)).begin());
    };
    fill("param/" + e.name, ckpt.params);
    fill("adam_m/" + e.name, ckpt.adam.m());
    fill("adam_v/" + e.name, ckpt.adam.v());
  }
  return ckpt;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_container(io::read_container(path), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  return from_container(io::read_container(path, expected.fingerprint()), path);
}

}  // namespace timbre::train
