#pragma once

#include <string>
#include <vector>

#include "tedi/dataset.hpp"
#include "tedi/denoiser.hpp"
#include "tedi/trainer.hpp"

namespace tedi::test {

// Small toy dataset: 16-frame windows of the 5-joint toy walker.
inline data::Dataset toy_dataset(std::uint64_t seed = 1, int clips = 4, int len = 64) {
  std::vector<motion::MotionClip> cs;
  std::vector<std::string> names;
  for (const auto& t : data::generate_toy_dataset(seed, clips, len)) {
    cs.push_back(t.clip);
    names.push_back("toy" + std::to_string(names.size()));
  }
  return data::build_dataset(cs, names, 16, 8);
}

inline nn::DenoiserConfig tiny_model(int features = 37) {
  nn::DenoiserConfig c;
  c.frames = 8;
  c.steps = 8;
  c.features = features;
  c.channels = {8, 16, 32};
  c.embed_dim = 8;
  c.groups = 4;
  return c;
}

inline train::TrainConfig tiny_training() {
  train::TrainConfig c;
  c.batch_size = 4;
  c.total_steps = 10;
  c.checkpoint_every = 0;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace tedi::test
