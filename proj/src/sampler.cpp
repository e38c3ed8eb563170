#include "tedi/sampler.hpp"

#include <algorithm>
#include <sstream>

namespace tedi::sample {

void MotionBuffer::check() const {
  const int k = size();
  if (static_cast<int>(levels.size()) != k) throw ContractError("motion buffer: level vector length drifted");
  for (int i = 0; i < k; ++i) {
    if (levels[i] != i + 1) throw ContractError("motion buffer: levels are no longer [1..K]");
  }
  if (!frames.allFinite()) throw ContractError("motion buffer: non-finite frame");
}

MotionBuffer init_buffer(const FeatureMatrix& primer, const diffusion::VarianceSchedule& schedule, Rng& rng) {
  const int k = static_cast<int>(primer.rows());
  if (k < 1 || k > schedule.steps()) {
    throw ContractError("primer has " + std::to_string(k) + " frames, buffer needs " + std::to_string(schedule.steps()));
  }
  MotionBuffer b;
  b.levels.resize(k);
  for (int i = 0; i < k; ++i) b.levels[i] = i + 1;
  b.frames = diffusion::q_sample(primer, b.levels, schedule, rng);
  b.tags.resize(k);
  for (int i = 0; i < k; ++i) b.tags[i] = i;
  b.inserted_count = k;
  return b;
}

void validate_guides(const std::vector<MotionGuide>& guides, int buffer_frames) {
  for (std::size_t i = 0; i < guides.size(); ++i) {
    const auto& g = guides[i];
    if (g.length() < 1) throw ValidationError("guide " + std::to_string(i + 1) + " is empty");
    if (g.start < buffer_frames) {
      throw ValidationError("guide " + std::to_string(i + 1) + " starts at frame " + std::to_string(g.start) +
                            ", before the buffer length K = " + std::to_string(buffer_frames));
    }
    if (i > 0) {
      const auto& prev = guides[i - 1];
      if (g.start < prev.start) throw ValidationError("guides are not sorted by start frame");
      if (g.start < prev.start + prev.length()) {
        throw ValidationError("guide " + std::to_string(i + 1) + " overlaps guide " + std::to_string(i));
      }
    }
  }
}

std::vector<Replacement> replacement_plan(const std::vector<MotionGuide>& guides, std::int64_t step, int buffer_frames,
                                          int gap) {
  std::vector<Replacement> plan;
  for (std::size_t gi = 0; gi < guides.size(); ++gi) {
    const auto& g = guides[gi];
    const std::int64_t lo = std::max<std::int64_t>(1, step + gap - g.start);
    const std::int64_t hi = std::min<std::int64_t>(g.length(), step + buffer_frames - g.start);
    for (std::int64_t j = lo; j <= hi; ++j) {
      plan.push_back({static_cast<int>(g.start + j - step), static_cast<int>(gi), static_cast<int>(j)});
    }
  }
  return plan;
}

MotionGuide trajectory_guide(const TrajectorySpec& traj) {
  if (traj.root.cols() != motion::kRootChannels) {
    throw ValidationError("trajectory must have 3 columns, got " + std::to_string(traj.root.cols()));
  }
  if (traj.root.rows() < 1) throw ValidationError("trajectory is empty");
  MotionGuide g;
  g.frames = traj.root;
  g.start = 1;
  g.channels = {motion::Layout::kRootX, motion::Layout::kRootZ, motion::Layout::kRootY};
  return g;
}

Sampler::Sampler(Denoiser& denoiser, const diffusion::VarianceSchedule& schedule, SamplerConfig config)
    : denoiser_(denoiser), schedule_(schedule), config_(config) {
  if (config_.gap < 1) throw ConfigError("guide gap must be at least 1");
}

Eigen::RowVectorXd Sampler::step(MotionBuffer& buffer, Rng& rng, std::int64_t step,
                                 const std::vector<MotionGuide>& guides, std::vector<Replacement>* applied) {
  const int k = buffer.size();
  const int f = static_cast<int>(buffer.frames.cols());
  const FeatureMatrix pred = denoiser_.predict(buffer.frames, buffer.levels);
  ++forward_calls_;
  if (pred.rows() != k || pred.cols() != f) throw ContractError("denoiser returned a clip of the wrong shape");
  if (!pred.allFinite()) {
    std::ostringstream os;
    os << "non-finite prediction at step " << step << "; buffer:\n" << buffer.frames;
    throw NumericError(os.str());
  }

  FeatureMatrix next(k, f);
  for (int i = 1; i <= k; ++i) {
    std::span<const double> clean(pred.row(i - 1).data(), f);
    std::span<double> out(next.row(i - 1).data(), f);
    if (config_.literal) {
      diffusion::q_sample_row(clean, i - 1, schedule_, rng, out);
    } else {
      diffusion::posterior_step(std::span<const double>(buffer.frames.row(i - 1).data(), f), clean, i, schedule_, rng,
                                config_.stochastic, out);
    }
  }

  const auto plan = replacement_plan(guides, step, k, config_.gap);
  for (const auto& r : plan) {
    const auto& g = guides[r.guide];
    const int width = static_cast<int>(g.frames.cols());
    std::vector<double> noised(width);
    diffusion::q_sample_row(std::span<const double>(g.frames.row(r.frame - 1).data(), width), r.position - 1,
                            schedule_, rng, noised);
    if (g.channels.empty()) {
      if (width != f) throw ValidationError("guide width does not match the buffer");
      for (int c = 0; c < f; ++c) next(r.position - 1, c) = noised[c];
    } else {
      for (int c = 0; c < width; ++c) next(r.position - 1, g.channels[c]) = noised[c];
    }
  }
  if (applied) *applied = plan;

  Eigen::RowVectorXd emitted = next.row(0);
  buffer.frames.topRows(k - 1) = next.bottomRows(k - 1);
  for (int c = 0; c < f; ++c) buffer.frames(k - 1, c) = rng.normal();
  std::rotate(buffer.tags.begin(), buffer.tags.begin() + 1, buffer.tags.end());
  buffer.tags.back() = buffer.inserted_count++;
  ++buffer.emitted_count;
  return emitted;
}

FeatureMatrix Sampler::run(const FeatureMatrix& primer, const std::vector<MotionGuide>& guides, std::int64_t n_frames,
                           Rng& rng) {
  if (n_frames < 0) throw ContractError("cannot generate a negative number of frames");
  if (primer.rows() != schedule_.steps()) {
    throw ContractError("primer has " + std::to_string(primer.rows()) + " frames, buffer K is " +
                        std::to_string(schedule_.steps()));
  }
  FeatureMatrix out(n_frames, primer.cols());
  if (n_frames == 0) return out;
  MotionBuffer buffer = init_buffer(primer, schedule_, rng);
  for (std::int64_t n = 1; n <= n_frames; ++n) out.row(n - 1) = step(buffer, rng, n, guides);
  return out;
}

FeatureMatrix Sampler::generate(const FeatureMatrix& primer, std::int64_t n_frames, Rng& rng) {
  return run(primer, {}, n_frames, rng);
}

FeatureMatrix Sampler::generate_guided(const FeatureMatrix& primer, const std::vector<MotionGuide>& guides,
                                       std::int64_t n_frames, Rng& rng) {
  validate_guides(guides, static_cast<int>(primer.rows()));
  for (const auto& g : guides) {
    if (g.frames.cols() != primer.cols()) throw ValidationError("guide width does not match the primer");
  }
  return run(primer, guides, n_frames, rng);
}

FeatureMatrix Sampler::generate_trajectory(const FeatureMatrix& primer, const TrajectorySpec& traj, Rng& rng,
                                           std::int64_t n_frames) {
  const std::vector<MotionGuide> guides{trajectory_guide(traj)};
  return run(primer, guides, std::max<std::int64_t>(n_frames, traj.root.rows()), rng);
}

}  // namespace tedi::sample
