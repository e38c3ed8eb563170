#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tedi/dataset.hpp"
#include "tedi/denoiser.hpp"
#include "tedi/schedule.hpp"
#include "tedi/trainer.hpp"

namespace tedi::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named-tensor container: a JSON header with the architecture, schedule and
// training configuration, then the skeleton, normalization statistics,
// raw float tensors and optionally the optimizer state.
struct Checkpoint {
  nn::DenoiserConfig model;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::kLinear;
  train::TrainConfig training;
  std::shared_ptr<const motion::Skeleton> skeleton;
  data::Normalization normalization;
  double fps = 30.0;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
  std::optional<train::TrainState> state;
};

Checkpoint make_checkpoint(const train::Trainer& trainer, bool with_state = true);

// Model rebuilt from the stored configuration and tensors.
nn::DenoiserModel<float> load_model(const Checkpoint& ckpt);
void restore_parameters(nn::DenoiserModel<float>& model, const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, std::ostream& os);
Checkpoint load_checkpoint(std::istream& is);
// Atomic: written to a temporary file and renamed into place.
void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace tedi::io
