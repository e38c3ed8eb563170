#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "tedi/motion.hpp"

namespace tedi::data {

enum class Channel { kXpos, kYpos, kZpos, kXrot, kYrot, kZrot };

struct BvhOptions {
  // File units are multiplied by this to get meters.
  double scale = 1.0;
  // Left heel, right heel, left toe, right toe. Missing names fall back to
  // the skeleton's leaf joints.
  std::array<std::string, 4> foot_joints{"LeftFoot", "RightFoot", "LeftToeBase", "RightToeBase"};
};

// Parsed BVH: skeleton plus raw per-frame channels in file order.
struct BvhData {
  motion::Skeleton skeleton;
  std::vector<std::vector<Channel>> channels;  // per joint, file order
  Eigen::MatrixXd values;                      // K x total channels (degrees / file units)
  double frame_time = 1.0 / 30.0;
  double scale = 1.0;

  int frame_count() const { return static_cast<int>(values.rows()); }
  double fps() const { return 1.0 / frame_time; }
  // Rotation of joint j at frame t from its Euler channels (intrinsic,
  // applied in file order).
  motion::Mat3 rotation(int frame, int joint) const;
  // Root translation in meters.
  motion::Vec3 root_translation(int frame) const;
};

BvhData parse_bvh(std::istream& is, const BvhOptions& options = {});
BvhData read_bvh_file(const std::string& path, const BvhOptions& options = {});

// Feature clip with o_xz as per-frame deltas (frame 0 gets zero) and
// contacts from the height/speed heuristic.
motion::MotionClip bvh_to_clip(const BvhData& bvh, const motion::ContactThresholds& thresholds = {});

// Writes ZXY Euler channels with absolute root positions accumulated from
// the o_xz displacements. `scale` converts meters back to file units.
void export_bvh(const motion::MotionClip& clip, std::ostream& os, double scale = 1.0,
                motion::RotationMode mode = motion::RotationMode::kClamped);
void write_bvh_file(const motion::MotionClip& clip, const std::string& path, double scale = 1.0);

}  // namespace tedi::data
