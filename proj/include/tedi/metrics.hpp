#pragma once

#include <iosfwd>
#include <vector>

#include "tedi/motion.hpp"

namespace tedi::eval {

struct WindowVariance {
  int start = 0;
  double variance = 0.0;
};

// Population variance of root-relative FK joint positions inside each
// window, averaged over joints and axes. Windows start every `stride`
// frames (window / 2 when stride is 0).
std::vector<WindowVariance> windowed_pose_variance(const motion::MotionClip& clip, int window, int stride = 0,
                                                   motion::RotationMode mode = motion::RotationMode::kClamped);

// Mean horizontal foot displacement between frames t and t+1 over the
// (foot, t) pairs whose contact label at t is >= 0.5; 0 if there are none.
double foot_slide(const motion::MotionClip& clip, motion::RotationMode mode = motion::RotationMode::kClamped);

struct MetricReport {
  std::vector<WindowVariance> windowed_variance;
  double foot_slide = 0.0;
  int frames = 0;
  double runtime_seconds = 0.0;

  double min_variance() const;
  double mean_variance() const;
};

MetricReport evaluate_clip(const motion::MotionClip& clip, int window, int stride = 0);

// window_start,variance
void write_variance_csv(std::ostream& os, const std::vector<WindowVariance>& series);
std::vector<WindowVariance> read_variance_csv(std::istream& is);
// key = value lines
void write_summary(std::ostream& os, const MetricReport& report);

}  // namespace tedi::eval
