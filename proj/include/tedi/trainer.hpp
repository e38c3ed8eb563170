#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "tedi/dataset.hpp"
#include "tedi/denoiser.hpp"
#include "tedi/rng.hpp"
#include "tedi/schedule.hpp"

namespace tedi::train {

struct TrainConfig {
  double p_random = 2.0 / 3.0;  // probability of drawing the random schedule
  double lambda_diff = 1.0;
  double lambda_pos = 1.0;
  double lambda_contact = 0.1;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int total_steps = 20000;
  int checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;
  bool ground_truth_contacts = false;  // L_contact with dataset labels instead of predicted ones
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::kLinear;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossBreakdown {
  double diff = 0.0;
  double pos = 0.0;
  double contact = 0.0;
  double total = 0.0;
};

struct LossRecord {
  std::int64_t step = 0;
  LossBreakdown loss;
  double random_fraction = 0.0;  // running fraction of random-schedule draws
};

// Everything besides the model weights needed to continue a run exactly.
struct TrainState {
  static constexpr std::size_t kHistory = 1000;

  std::int64_t step = 0;
  std::int64_t random_draws = 0;
  std::int64_t total_draws = 0;
  std::string rng;  // serialized Rng
  std::vector<nn::Tensor<float>> adam_m;
  std::vector<nn::Tensor<float>> adam_v;
  std::deque<LossRecord> history;  // ring buffer of the last kHistory steps

  void push(const LossRecord& r);
};

// Adam with bias correction.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void apply(std::vector<nn::Parameter<float>>& params, TrainState& state, double lr) const;
};

class Trainer {
 public:
  Trainer(const data::Dataset& dataset, const nn::DenoiserConfig& model_config, const TrainConfig& config);
  // Continue from saved weights and state.
  Trainer(const data::Dataset& dataset, nn::DenoiserModel<float> model, const TrainConfig& config,
          TrainState state);

  // One optimization step over a freshly drawn batch.
  LossRecord step();
  // Steps until config.total_steps, writing one CSV row per step to `log`
  // (header first when the log is empty) and calling `on_checkpoint`
  // every checkpoint_every steps.
  void run(std::ostream* log, const std::function<void(const Trainer&)>& on_checkpoint = {});

  const nn::DenoiserModel<float>& model() const { return model_; }
  nn::DenoiserModel<float>& model() { return model_; }
  const TrainState& state() const;
  const TrainConfig& config() const { return config_; }
  const diffusion::VarianceSchedule& schedule() const { return schedule_; }
  const data::Dataset& dataset() const { return dataset_; }

  static void write_log_header(std::ostream& os);
  static void write_log_row(std::ostream& os, const LossRecord& r);

 private:
  void check_dataset() const;

  const data::Dataset& dataset_;
  nn::DenoiserModel<float> model_;
  TrainConfig config_;
  diffusion::VarianceSchedule schedule_;
  mutable TrainState state_;
  Rng rng_;
};

}  // namespace tedi::train
