#include "tedi/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tedi/errors.hpp"

namespace tedi::diffusion {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown variance schedule kind '" + name + "' (expected linear or cosine)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

VarianceSchedule::VarianceSchedule(std::vector<double> betas, ScheduleKind kind)
    : betas_(std::move(betas)), kind_(kind) {
  if (betas_.empty()) throw ConfigError("variance schedule needs T >= 1");
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t t = 0; t < betas_.size(); ++t) {
    const double b = betas_[t];
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("beta_" + std::to_string(t + 1) + " = " + std::to_string(b) + " is outside (0, 1)");
    }
    alpha_bars_[t + 1] = alpha_bars_[t] * (1.0 - b);
  }
}

VarianceSchedule VarianceSchedule::from_betas(std::vector<double> betas) {
  return VarianceSchedule(std::move(betas), ScheduleKind::kLinear);
}

VarianceSchedule VarianceSchedule::build(ScheduleKind kind, int steps) {
  if (steps < 1) throw ConfigError("variance schedule needs T >= 1, got " + std::to_string(steps));
  constexpr double kMaxBeta = 0.999;
  std::vector<double> betas(steps);
  if (kind == ScheduleKind::kLinear) {
    const double scale = 1000.0 / steps;
    const double lo = 1e-4 * scale;
    const double hi = 0.02 * scale;
    for (int t = 0; t < steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
      betas[t] = std::min(lo + (hi - lo) * frac, kMaxBeta);
    }
  } else {
    constexpr double s = 0.008;
    auto f = [&](int t) {
      const double x = (static_cast<double>(t) / steps + s) / (1.0 + s) * std::numbers::pi / 2.0;
      return std::cos(x) * std::cos(x);
    };
    for (int t = 1; t <= steps; ++t) {
      betas[t - 1] = std::min(1.0 - f(t) / f(t - 1), kMaxBeta);
    }
  }
  return VarianceSchedule(std::move(betas), kind);
}

NoiseLevels sample_random_levels(Rng& rng, int frames, int steps) {
  if (steps < 1) throw ConfigError("T must be >= 1");
  NoiseLevels levels(frames);
  for (int& l : levels) l = static_cast<int>(rng.integer(0, steps));
  return levels;
}

NoiseLevels monotonic_levels(int frames, int steps) {
  if (frames != steps) {
    throw ConfigError("monotonic schedule needs K == T (K=" + std::to_string(frames) +
                      ", T=" + std::to_string(steps) + ")");
  }
  NoiseLevels levels(frames);
  for (int i = 0; i < frames; ++i) levels[i] = i + 1;
  return levels;
}

void validate_levels(const NoiseLevels& levels, int steps) {
  for (int l : levels) {
    if (l < 0 || l > steps) {
      throw ContractError("noise level " + std::to_string(l) + " outside [0, " + std::to_string(steps) + "]");
    }
  }
}

void q_sample_row(std::span<const double> clean, int level, const VarianceSchedule& schedule,
                  Rng& rng, std::span<double> out) {
  if (level == 0) {
    std::copy(clean.begin(), clean.end(), out.begin());
    return;
  }
  const double abar = schedule.alpha_bar(level);
  const double mean_scale = std::sqrt(abar);
  const double noise_scale = std::sqrt(1.0 - abar);
  for (std::size_t c = 0; c < clean.size(); ++c) {
    out[c] = mean_scale * clean[c] + noise_scale * rng.normal();
  }
}

motion::FeatureMatrix q_sample(const motion::FeatureMatrix& clean, const NoiseLevels& levels,
                               const VarianceSchedule& schedule, Rng& rng) {
  if (static_cast<Eigen::Index>(levels.size()) != clean.rows()) {
    throw ContractError("q_sample: " + std::to_string(levels.size()) + " levels for " +
                        std::to_string(clean.rows()) + " frames");
  }
  validate_levels(levels, schedule.steps());
  motion::FeatureMatrix noisy(clean.rows(), clean.cols());
  const auto width = static_cast<std::size_t>(clean.cols());
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    q_sample_row({clean.row(i).data(), width}, levels[i], schedule, rng, {noisy.row(i).data(), width});
  }
  return noisy;
}

PosteriorCoefficients posterior_coefficients(const VarianceSchedule& schedule, int level) {
  if (level < 1 || level > schedule.steps()) {
    throw ContractError("posterior step needs level in [1, " + std::to_string(schedule.steps()) +
                        "], got " + std::to_string(level));
  }
  const double abar_t = schedule.alpha_bar(level);
  const double abar_prev = schedule.alpha_bar(level - 1);
  const double beta = schedule.beta(level);
  return {std::sqrt(abar_prev) * beta / (1.0 - abar_t),
          std::sqrt(schedule.alpha(level)) * (1.0 - abar_prev) / (1.0 - abar_t)};
}

void posterior_step(std::span<const double> noisy, std::span<const double> clean_pred, int level,
                    const VarianceSchedule& schedule, Rng& rng, bool stochastic,
                    std::span<double> out) {
  const PosteriorCoefficients k = posterior_coefficients(schedule, level);
  const bool add_noise = stochastic && level > 1;
  const double sigma = add_noise ? std::sqrt(schedule.beta(level)) : 0.0;
  for (std::size_t c = 0; c < noisy.size(); ++c) {
    out[c] = k.clean * clean_pred[c] + k.noisy * noisy[c];
    if (add_noise) out[c] += sigma * rng.normal();
  }
}

}  // namespace tedi::diffusion
