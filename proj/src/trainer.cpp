#include "tedi/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "tedi/losses.hpp"

namespace tedi::train {

using motion::FeatureMatrix;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(p_random >= 0.0 && p_random <= 1.0)) fail("p_random must lie in [0, 1]");
  if (lambda_diff < 0 || lambda_pos < 0 || lambda_contact < 0) fail("loss weights must be non-negative");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"p_random", c.p_random},
                     {"lambda_diff", c.lambda_diff},
                     {"lambda_pos", c.lambda_pos},
                     {"lambda_contact", c.lambda_contact},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"total_steps", c.total_steps},
                     {"checkpoint_every", c.checkpoint_every},
                     {"seed", c.seed},
                     {"ground_truth_contacts", c.ground_truth_contacts},
                     {"schedule", diffusion::to_string(c.schedule)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("p_random").get_to(c.p_random);
  j.at("lambda_diff").get_to(c.lambda_diff);
  j.at("lambda_pos").get_to(c.lambda_pos);
  j.at("lambda_contact").get_to(c.lambda_contact);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("total_steps").get_to(c.total_steps);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("seed").get_to(c.seed);
  j.at("ground_truth_contacts").get_to(c.ground_truth_contacts);
  c.schedule = diffusion::parse_schedule_kind(j.at("schedule").get<std::string>());
}

void TrainState::push(const LossRecord& r) {
  history.push_back(r);
  while (history.size() > kHistory) history.pop_front();
}

void Adam::apply(std::vector<nn::Parameter<float>>& params, TrainState& state, double lr) const {
  if (state.adam_m.size() != params.size()) {
    state.adam_m.clear();
    state.adam_v.clear();
    for (const auto& p : params) {
      state.adam_m.emplace_back(p.value.shape());
      state.adam_v.emplace_back(p.value.shape());
    }
  }
  const double t = static_cast<double>(state.step + 1);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(beta2, t)));
  const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const float e = static_cast<float>(eps), step = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.empty()) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = state.adam_m[i].data();
    float* v = state.adam_v[i].data();
    for (long k = 0; k < p.value.numel(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      w[k] -= step * (m[k] * c1) / (std::sqrt(v[k] * c2) + e);
    }
  }
}

Trainer::Trainer(const data::Dataset& dataset, const nn::DenoiserConfig& model_config, const TrainConfig& config)
    : Trainer(dataset, nn::DenoiserModel<float>(model_config, config.seed), config, TrainState{}) {}

Trainer::Trainer(const data::Dataset& dataset, nn::DenoiserModel<float> model, const TrainConfig& config,
                 TrainState state)
    : dataset_(dataset),
      model_(std::move(model)),
      config_(config),
      schedule_(diffusion::VarianceSchedule::build(config.schedule, model_.config().steps)),
      state_(std::move(state)),
      rng_(config.seed) {
  config_.validate();
  check_dataset();
  // Separate the batch stream from the init stream that used the same seed.
  if (state_.rng.empty()) {
    rng_ = Rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  } else {
    rng_.deserialize(state_.rng);
  }
}

void Trainer::check_dataset() const {
  const auto& mc = model_.config();
  if (dataset_.windows.empty()) throw ConfigError("training dataset has no windows");
  if (dataset_.feature_width() != mc.features) {
    throw ConfigError("dataset feature width " + std::to_string(dataset_.feature_width()) +
                      " does not match model features " + std::to_string(mc.features));
  }
  if (dataset_.window_len < mc.frames) {
    throw ConfigError("dataset windows of " + std::to_string(dataset_.window_len) +
                      " frames are shorter than model K = " + std::to_string(mc.frames));
  }
  if (mc.steps != mc.frames && config_.p_random < 1.0) {
    throw ConfigError("monotonic schedule needs K == T, got K = " + std::to_string(mc.frames) +
                      ", T = " + std::to_string(mc.steps));
  }
}

const TrainState& Trainer::state() const {
  state_.rng = rng_.serialize();
  return state_;
}

LossRecord Trainer::step() {
  const auto& mc = model_.config();
  const int k = mc.frames;
  const int b = config_.batch_size;
  const auto& norm = dataset_.normalization;
  const motion::Skeleton& skel = *dataset_.skeleton;
  const int contact_col = motion::Layout::contacts(skel.joint_count());

  std::vector<FeatureMatrix> clean_raw(b), clean(b), noisy(b);
  std::vector<diffusion::NoiseLevels> levels(b);
  std::vector<int> random_kind(b);
  for (int s = 0; s < b; ++s) {
    const auto& w = dataset_.windows[rng_.integer(0, static_cast<std::int64_t>(dataset_.windows.size()) - 1)];
    const int start = static_cast<int>(rng_.integer(0, w.frames.rows() - k));
    clean_raw[s] = w.frames.middleRows(start, k);
    clean[s] = norm.normalize(clean_raw[s]);
    random_kind[s] = rng_.bernoulli(config_.p_random) ? 1 : 0;
    levels[s] = random_kind[s] ? diffusion::sample_random_levels(rng_, k, mc.steps)
                               : diffusion::monotonic_levels(k, mc.steps);
    noisy[s] = diffusion::q_sample(clean[s], levels[s], schedule_, rng_);
  }

  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& n : noisy) ptrs.push_back(&n);
  model_.zero_grad();
  nn::Graph<float> g;
  nn::Var out = model_.forward(g, nn::pack_batch<float>(ptrs), levels);
  const nn::Tensor<float>& pred = g.value(out);

  LossBreakdown loss;
  nn::Tensor<float> seed(pred.shape());
  const double inv_b = 1.0 / b;
  for (int s = 0; s < b; ++s) {
    const FeatureMatrix pred_norm = nn::unpack_sample(pred, s);
    const FeatureMatrix pred_raw = norm.denormalize(pred_norm);
    const LossValue ld = diffusion_loss_grad(pred_norm, clean[s]);
    const LossValue lp = positional_loss(skel, pred_raw, clean_raw[s]);
    Eigen::MatrixXd labels;
    if (config_.ground_truth_contacts) labels = clean_raw[s].middleCols(contact_col, motion::kContactChannels);
    const LossValue lc = contact_loss(skel, pred_raw, config_.ground_truth_contacts ? &labels : nullptr);

    loss.diff += ld.value * inv_b;
    loss.pos += lp.value * inv_b;
    loss.contact += lc.value * inv_b;

    // Metric-space gradients go back through the affine denormalization.
    FeatureMatrix grad = config_.lambda_pos * lp.grad + config_.lambda_contact * lc.grad;
    for (int c = 0; c < grad.cols(); ++c) grad.col(c) *= norm.std(c);
    grad += config_.lambda_diff * ld.grad;
    grad *= inv_b;
    for (int c = 0; c < grad.cols(); ++c) {
      for (int t = 0; t < k; ++t) seed[(static_cast<long>(c) * b + s) * k + t] = static_cast<float>(grad(t, c));
    }
  }
  loss.total = config_.lambda_diff * loss.diff + config_.lambda_pos * loss.pos + config_.lambda_contact * loss.contact;

  int random_count = 0;
  for (int r : random_kind) random_count += r;
  if (!std::isfinite(loss.total)) {
    throw NumericError("non-finite training loss at step " + std::to_string(state_.step) + " (seed " +
                       std::to_string(config_.seed) + ", " + std::to_string(random_count) + "/" +
                       std::to_string(b) + " samples on the random schedule, " +
                       diffusion::to_string(config_.schedule) + " variance schedule): diff=" +
                       std::to_string(loss.diff) + " pos=" + std::to_string(loss.pos) +
                       " contact=" + std::to_string(loss.contact));
  }

  g.backward(out, seed);
  Adam{}.apply(model_.parameters(), state_, config_.learning_rate);

  state_.random_draws += random_count;
  state_.total_draws += b;
  ++state_.step;
  LossRecord rec{state_.step, loss,
                 static_cast<double>(state_.random_draws) / static_cast<double>(state_.total_draws)};
  state_.push(rec);
  return rec;
}

void Trainer::run(std::ostream* log, const std::function<void(const Trainer&)>& on_checkpoint) {
  if (log && state_.step == 0) write_log_header(*log);
  while (state_.step < config_.total_steps) {
    const LossRecord rec = step();
    if (log) write_log_row(*log, rec);
    if (on_checkpoint && config_.checkpoint_every > 0 && state_.step % config_.checkpoint_every == 0) {
      on_checkpoint(*this);
    }
  }
  if (log) log->flush();
}

void Trainer::write_log_header(std::ostream& os) { os << "step,L_diff,L_pos,L_contact,schedule_kind_fraction\n"; }

void Trainer::write_log_row(std::ostream& os, const LossRecord& r) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << r.step << ',' << r.loss.diff << ',' << r.loss.pos << ',' << r.loss.contact << ',' << r.random_fraction
     << '\n';
  os.precision(old);
}

}  // namespace tedi::train
