#pragma once

#include <cstdint>
#include <vector>

#include "tedi/denoiser.hpp"
#include "tedi/rng.hpp"
#include "tedi/schedule.hpp"

namespace tedi::sample {

using motion::FeatureMatrix;

// Anything that maps a noisy K x F buffer plus per-frame levels to a clean
// prediction. Lets tests drive the sampler with mocks.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual FeatureMatrix predict(const FeatureMatrix& noisy, const diffusion::NoiseLevels& levels) = 0;
};

class ModelDenoiser : public Denoiser {
 public:
  explicit ModelDenoiser(nn::DenoiserModel<float>& model) : model_(model) {}
  FeatureMatrix predict(const FeatureMatrix& noisy, const diffusion::NoiseLevels& levels) override {
    return model_.predict(noisy, levels);
  }

 private:
  nn::DenoiserModel<float>& model_;
};

struct SamplerConfig {
  bool stochastic = true;  // add sqrt(beta_t) noise in each posterior step
  bool literal = false;    // shift raw clean predictions, re-noised, instead of posterior steps
  int gap = 5;             // guide frames closer than this to the buffer head are left alone
};

// K frames whose position i (1-based) always carries noise level i.
struct MotionBuffer {
  FeatureMatrix frames;
  diffusion::NoiseLevels levels;
  std::int64_t emitted_count = 0;
  std::int64_t inserted_count = 0;
  std::vector<std::int64_t> tags;  // insertion index of the frame at each position

  int size() const { return static_cast<int>(frames.rows()); }
  // Throws ContractError if levels drift from [1..K] or frames are non-finite.
  void check() const;
};

// Frame i of the primer noised to level i.
MotionBuffer init_buffer(const FeatureMatrix& primer, const diffusion::VarianceSchedule& schedule, Rng& rng);

// A clip injected at future global frame indices: frame j (1-based)
// targets index start + j. `channels` restricts the overwrite (empty = all).
struct MotionGuide {
  FeatureMatrix frames;
  std::int64_t start = 0;
  std::vector<int> channels;

  std::int64_t length() const { return frames.rows(); }
};

// Sorted, non-overlapping, start >= K.
void validate_guides(const std::vector<MotionGuide>& guides, int buffer_frames);

struct Replacement {
  int position;  // 1-based buffer position
  int guide;     // index into the guide list
  int frame;     // 1-based frame within the guide
};

// Guide frames with n + gap <= start + j <= n + K at global step n.
std::vector<Replacement> replacement_plan(const std::vector<MotionGuide>& guides, std::int64_t step, int buffer_frames,
                                          int gap);

// Root channels (o_x, o_z, o_y) to follow; row j is output frame j.
struct TrajectorySpec {
  FeatureMatrix root;  // N x 3
};

class Sampler {
 public:
  Sampler(Denoiser& denoiser, const diffusion::VarianceSchedule& schedule, SamplerConfig config = {});

  // One forward pass, one posterior step per position, guide overwrite,
  // pop the clean head and push fresh noise. `step` is the 1-based global
  // step index n. Returns the emitted frame.
  Eigen::RowVectorXd step(MotionBuffer& buffer, Rng& rng, std::int64_t step,
                          const std::vector<MotionGuide>& guides = {}, std::vector<Replacement>* applied = nullptr);

  FeatureMatrix generate(const FeatureMatrix& primer, std::int64_t n_frames, Rng& rng);
  FeatureMatrix generate_guided(const FeatureMatrix& primer, const std::vector<MotionGuide>& guides,
                                std::int64_t n_frames, Rng& rng);
  // Generates traj.root.rows() frames unless `n_frames` is larger.
  FeatureMatrix generate_trajectory(const FeatureMatrix& primer, const TrajectorySpec& traj, Rng& rng,
                                    std::int64_t n_frames = 0);

  std::int64_t forward_calls() const { return forward_calls_; }
  const SamplerConfig& config() const { return config_; }

 private:
  FeatureMatrix run(const FeatureMatrix& primer, const std::vector<MotionGuide>& guides, std::int64_t n_frames,
                    Rng& rng);

  Denoiser& denoiser_;
  const diffusion::VarianceSchedule& schedule_;
  SamplerConfig config_;
  std::int64_t forward_calls_ = 0;
};

// Trajectory as a root-channel guide aligned with the output frames.
MotionGuide trajectory_guide(const TrajectorySpec& traj);

}  // namespace tedi::sample
