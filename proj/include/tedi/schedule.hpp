#pragma once

#include <span>
#include <string>
#include <vector>

#include "tedi/motion.hpp"
#include "tedi/rng.hpp"

namespace tedi::diffusion {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

// Fixed variance schedule beta_1..beta_T with cumulative products
// alpha_bar(0) = 1, alpha_bar(t) = prod_{j<=t} (1 - beta_j).
class VarianceSchedule {
 public:
  // linear: betas from 1e-4 * 1000/T to 0.02 * 1000/T, clamped below 0.999.
  // cosine: alpha_bar from the squared-cosine curve with offset 0.008.
  static VarianceSchedule build(ScheduleKind kind, int steps);
  static VarianceSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }
  // 1 <= t <= T
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  // 0 <= t <= T
  double alpha_bar(int t) const { return alpha_bars_.at(t); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  explicit VarianceSchedule(std::vector<double> betas, ScheduleKind kind);

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  ScheduleKind kind_ = ScheduleKind::kLinear;
};

// Per-frame diffusion levels, each in {0..T}.
using NoiseLevels = std::vector<int>;

// Each level i.i.d. uniform over the integers {0..T}.
NoiseLevels sample_random_levels(Rng& rng, int frames, int steps);
// [1, 2, ..., K]; requires K == T.
NoiseLevels monotonic_levels(int frames, int steps);
void validate_levels(const NoiseLevels& levels, int steps);

// Noise frame i to level t_i: sqrt(abar) f_i + sqrt(1 - abar) eps_i.
motion::FeatureMatrix q_sample(const motion::FeatureMatrix& clean, const NoiseLevels& levels,
                               const VarianceSchedule& schedule, Rng& rng);
void q_sample_row(std::span<const double> clean, int level, const VarianceSchedule& schedule,
                  Rng& rng, std::span<double> out);

struct PosteriorCoefficients {
  double clean;  // on the predicted clean frame
  double noisy;  // on the current noisy frame
};

PosteriorCoefficients posterior_coefficients(const VarianceSchedule& schedule, int level);

// One reverse step from `level` to `level - 1` given a clean-frame
// prediction. The stochastic term uses the fixed variance beta_t and is
// skipped at level 1 so the result is clean.
void posterior_step(std::span<const double> noisy, std::span<const double> clean_pred, int level,
                    const VarianceSchedule& schedule, Rng& rng, bool stochastic,
                    std::span<double> out);

}  // namespace tedi::diffusion
