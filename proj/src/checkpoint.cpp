#include "tedi/checkpoint.hpp"

#include <fstream>

#include "tedi/binary_io.hpp"

namespace tedi::io {

namespace {

constexpr char kCheckpointMagic[9] = "TEDICKPT";

void write_tensor(BinaryWriter& w, const nn::Tensor<float>& t) {
  std::vector<std::int32_t> shape(t.shape().begin(), t.shape().end());
  w.array(shape.data(), shape.size());
  w.array(t.data(), static_cast<std::size_t>(t.numel()));
}

nn::Tensor<float> read_tensor(BinaryReader& r) {
  auto shape32 = r.array<std::int32_t>();
  std::vector<int> shape(shape32.begin(), shape32.end());
  auto data = r.array<float>();
  if (static_cast<long>(data.size()) != nn::Tensor<float>::count(shape)) {
    throw ParseError("checkpoint: tensor size does not match its shape");
  }
  return nn::Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace

Checkpoint make_checkpoint(const train::Trainer& trainer, bool with_state) {
  Checkpoint c;
  c.model = trainer.model().config();
  c.schedule = trainer.config().schedule;
  c.training = trainer.config();
  c.skeleton = trainer.dataset().skeleton;
  c.normalization = trainer.dataset().normalization;
  c.fps = trainer.dataset().fps;
  for (const auto& p : trainer.model().parameters()) c.tensors.emplace_back(p.name, p.value);
  if (with_state) c.state = trainer.state();
  return c;
}

void restore_parameters(nn::DenoiserModel<float>& model, const Checkpoint& ckpt) {
  auto& params = model.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (name != params[i].name || !t.same_shape(params[i].value)) {
      throw ValidationError("checkpoint tensor " + name + " " + t.shape_string() + " does not match " +
                            params[i].name + " " + params[i].value.shape_string());
    }
    params[i].value = t;
  }
}

nn::DenoiserModel<float> load_model(const Checkpoint& ckpt) {
  nn::DenoiserModel<float> model(ckpt.model, 0);
  restore_parameters(model, ckpt);
  return model;
}

void save_checkpoint(const Checkpoint& c, std::ostream& os) {
  BinaryWriter w(os);
  w.magic(kCheckpointMagic, kCheckpointVersion);
  nlohmann::json header{{"architecture", c.model},
                        {"schedule", {{"kind", diffusion::to_string(c.schedule)}, {"steps", c.model.steps}}},
                        {"training", c.training},
                        {"fps", c.fps}};
  w.string(header.dump());
  data::write_skeleton(os, *c.skeleton);
  w.array(c.normalization.mean.data(), static_cast<std::size_t>(c.normalization.mean.size()));
  w.array(c.normalization.std.data(), static_cast<std::size_t>(c.normalization.std.size()));
  w.pod<std::uint64_t>(c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    w.string(name);
    write_tensor(w, t);
  }
  w.pod<std::uint8_t>(c.state ? 1 : 0);
  if (c.state) {
    const auto& s = *c.state;
    w.pod<std::int64_t>(s.step);
    w.pod<std::int64_t>(s.random_draws);
    w.pod<std::int64_t>(s.total_draws);
    w.string(s.rng);
    w.pod<std::uint64_t>(s.adam_m.size());
    for (std::size_t i = 0; i < s.adam_m.size(); ++i) {
      write_tensor(w, s.adam_m[i]);
      write_tensor(w, s.adam_v[i]);
    }
    w.pod<std::uint64_t>(s.history.size());
    for (const auto& r : s.history) {
      w.pod<std::int64_t>(r.step);
      w.pod(r.loss.diff);
      w.pod(r.loss.pos);
      w.pod(r.loss.contact);
      w.pod(r.loss.total);
      w.pod(r.random_fraction);
    }
  }
}

Checkpoint load_checkpoint(std::istream& is) {
  BinaryReader r(is, "checkpoint");
  const auto version = r.magic(kCheckpointMagic);
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(r.string());
    c.model = header.at("architecture").get<nn::DenoiserConfig>();
    c.schedule = diffusion::parse_schedule_kind(header.at("schedule").at("kind").get<std::string>());
    c.training = header.at("training").get<train::TrainConfig>();
    c.fps = header.at("fps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  c.skeleton = std::make_shared<const motion::Skeleton>(data::read_skeleton(is));
  auto mean = r.array<double>();
  auto sd = r.array<double>();
  if (mean.size() != sd.size() || static_cast<int>(mean.size()) != c.skeleton->feature_width()) {
    throw ParseError("checkpoint: normalization width mismatch");
  }
  c.normalization.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  c.normalization.std = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.string();
    c.tensors.emplace_back(std::move(name), read_tensor(r));
  }
  if (r.pod<std::uint8_t>()) {
    train::TrainState s;
    s.step = r.pod<std::int64_t>();
    s.random_draws = r.pod<std::int64_t>();
    s.total_draws = r.pod<std::int64_t>();
    s.rng = r.string();
    const auto moments = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < moments; ++i) {
      s.adam_m.push_back(read_tensor(r));
      s.adam_v.push_back(read_tensor(r));
    }
    const auto hist = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < hist; ++i) {
      train::LossRecord rec;
      rec.step = r.pod<std::int64_t>();
      rec.loss.diff = r.pod<double>();
      rec.loss.pos = r.pod<double>();
      rec.loss.contact = r.pod<double>();
      rec.loss.total = r.pod<double>();
      rec.random_fraction = r.pod<double>();
      s.history.push_back(rec);
    }
    c.state = std::move(s);
  }
  return c;
}

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path) {
  atomic_write(path, [&](std::ostream& os) { save_checkpoint(ckpt, os); });
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace tedi::io
