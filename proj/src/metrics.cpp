#include "tedi/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "tedi/errors.hpp"

namespace tedi::eval {

using motion::JointPositions;

std::vector<WindowVariance> windowed_pose_variance(const motion::MotionClip& clip, int window, int stride,
                                                   motion::RotationMode mode) {
  if (window < 1 || window > clip.length()) {
    throw ContractError("variance window " + std::to_string(window) + " does not fit a clip of " +
                        std::to_string(clip.length()) + " frames");
  }
  if (stride <= 0) stride = std::max(1, window / 2);
  const auto positions = motion::clip_positions(clip, mode);
  const int joints = clip.skeleton->joint_count();

  std::vector<JointPositions> rel(positions.size());
  for (std::size_t t = 0; t < positions.size(); ++t) {
    rel[t] = positions[t].rowwise() - positions[t].row(0);
  }

  std::vector<WindowVariance> out;
  for (int start = 0; start + window <= clip.length(); start += stride) {
    JointPositions mean = JointPositions::Zero(joints, 3);
    for (int t = start; t < start + window; ++t) mean += rel[t];
    mean /= window;
    double acc = 0.0;
    for (int t = start; t < start + window; ++t) acc += (rel[t] - mean).squaredNorm();
    out.push_back({start, acc / (static_cast<double>(window) * joints * 3)});
  }
  return out;
}

double foot_slide(const motion::MotionClip& clip, motion::RotationMode mode) {
  if (clip.length() < 2) throw ContractError("foot slide needs at least 2 frames");
  const auto positions = motion::clip_positions(clip, mode);
  const int contact_col = motion::Layout::contacts(clip.skeleton->joint_count());
  const auto& feet = clip.skeleton->foot_joints();
  double total = 0.0;
  long count = 0;
  for (int c = 0; c < motion::kContactChannels; ++c) {
    const int j = feet[c];
    for (int t = 0; t + 1 < clip.length(); ++t) {
      if (clip.frames(t, contact_col + c) < 0.5) continue;
      const double dx = positions[t + 1](j, 0) - positions[t](j, 0);
      const double dz = positions[t + 1](j, 2) - positions[t](j, 2);
      total += std::sqrt(dx * dx + dz * dz);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double MetricReport::min_variance() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& w : windowed_variance) m = std::min(m, w.variance);
  return windowed_variance.empty() ? 0.0 : m;
}

double MetricReport::mean_variance() const {
  if (windowed_variance.empty()) return 0.0;
  double s = 0.0;
  for (const auto& w : windowed_variance) s += w.variance;
  return s / static_cast<double>(windowed_variance.size());
}

MetricReport evaluate_clip(const motion::MotionClip& clip, int window, int stride) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricReport r;
  r.windowed_variance = windowed_pose_variance(clip, window, stride);
  r.foot_slide = foot_slide(clip);
  r.frames = clip.length();
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void write_variance_csv(std::ostream& os, const std::vector<WindowVariance>& series) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "window_start,variance\n";
  for (const auto& w : series) os << w.start << ',' << w.variance << '\n';
  os.precision(old);
}

std::vector<WindowVariance> read_variance_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "window_start,variance") {
    throw ParseError("variance csv: missing header", 1);
  }
  std::vector<WindowVariance> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("variance csv: expected two fields", lineno);
    try {
      out.push_back({std::stoi(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::logic_error&) {
      throw ParseError("variance csv: bad number", lineno);
    }
  }
  return out;
}

void write_summary(std::ostream& os, const MetricReport& r) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "frames = " << r.frames << '\n'
     << "windows = " << r.windowed_variance.size() << '\n'
     << "min_variance = " << r.min_variance() << '\n'
     << "mean_variance = " << r.mean_variance() << '\n'
     << "foot_slide = " << r.foot_slide << '\n'
     << "runtime_seconds = " << r.runtime_seconds << '\n';
  os.precision(old);
}

}  // namespace tedi::eval
