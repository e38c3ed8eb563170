#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tedi::motion {

inline constexpr int kRotationFeatures = 6;  // Q
inline constexpr int kContactChannels = 4;   // C
inline constexpr int kRootChannels = 3;      // o_x, o_z, o_y

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using SixD = std::array<double, 6>;

// K x F, row layout [o_x, o_z, o_y, R(J*6), L(4)].
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// J x 3 global joint positions for one frame.
using JointPositions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 offset = Vec3::Zero();
};

// Joint hierarchy with fixed bone offsets. Joints are topologically sorted
// (parent index < own index) and there is exactly one root at index 0.
class Skeleton {
 public:
  // Foot joints in order: left heel, right heel, left toe, right toe.
  using FootJoints = std::array<int, kContactChannels>;

  Skeleton() = default;
  Skeleton(std::vector<Joint> joints, FootJoints feet);

  int joint_count() const { return static_cast<int>(joints_.size()); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(int j) const { return joints_[j]; }
  const FootJoints& foot_joints() const { return feet_; }
  int find(const std::string& name) const;  // -1 if absent

  // J*Q + C + 3
  int feature_width() const { return feature_width_for(joint_count()); }
  static int feature_width_for(int joints) {
    return joints * kRotationFeatures + kContactChannels + kRootChannels;
  }

  bool operator==(const Skeleton& other) const;

 private:
  std::vector<Joint> joints_;
  FootJoints feet_{};
};

// Column offsets into a feature row.
struct Layout {
  static constexpr int kRootX = 0;
  static constexpr int kRootZ = 1;
  static constexpr int kRootY = 2;
  static constexpr int kRotations = 3;
  static int rotation(int joint) { return kRotations + joint * kRotationFeatures; }
  static int contacts(int joints) { return kRotations + joints * kRotationFeatures; }
};

struct MotionClip {
  FeatureMatrix frames;
  std::shared_ptr<const Skeleton> skeleton;
  double fps = 30.0;

  int length() const { return static_cast<int>(frames.rows()); }
  // Throws ValidationError if the width does not match the skeleton,
  // the clip is empty, or any entry is non-finite.
  void validate() const;
};

// How to treat degenerate 6D input: throw (data time) or re-orthogonalize
// with a 1e-8 jitter (model output time).
enum class RotationMode { kStrict, kClamped };

inline constexpr double kDegenerateNorm = 1e-8;

// Gram-Schmidt on the two stored columns; third column by cross product.
Mat3 sixd_to_matrix(std::span<const double, 6> features, RotationMode mode = RotationMode::kStrict);
// First two columns of a proper rotation. Throws ValidationError otherwise.
SixD matrix_to_sixd(const Mat3& rot, double tol = 1e-6);

Mat3 axis_angle(const Vec3& axis, double angle);

// Reverse pass of sixd_to_matrix: accumulates dL/d(features) given dL/dR.
void sixd_to_matrix_backward(std::span<const double, 6> features, const Mat3& grad_rot,
                             std::span<double, 6> grad_features,
                             RotationMode mode = RotationMode::kClamped);

// Global joint positions for one pose. `rotations` holds J*6 features;
// the root is placed at (root_xz.x, root_y, root_xz.y) plus its offset.
JointPositions forward_kinematics(const Skeleton& skeleton, std::span<const double> rotations,
                                  const Eigen::Vector2d& root_xz, double root_y,
                                  RotationMode mode = RotationMode::kStrict);

// FK that keeps its intermediates so gradients can be pulled back to the
// 6D features and root position.
class FkPass {
 public:
  FkPass(const Skeleton& skeleton, std::span<const double> rotations, const Vec3& root,
         RotationMode mode = RotationMode::kClamped);

  const JointPositions& positions() const { return positions_; }

  // grad_positions: J x 3. Adds into grad_rotations (J*6) and grad_root (3).
  void backward(const JointPositions& grad_positions, std::span<double> grad_rotations,
                Vec3& grad_root) const;

 private:
  const Skeleton* skeleton_;
  std::vector<double> rotations_;
  RotationMode mode_;
  std::vector<Mat3> local_;
  std::vector<Mat3> global_;
  JointPositions positions_;
};

// Absolute root positions with o_xz displacements accumulated from the
// first frame (frame 0 displacement included).
std::vector<Vec3> accumulate_root(const FeatureMatrix& frames);

// FK for every frame of a clip using accumulated root positions.
std::vector<JointPositions> clip_positions(const MotionClip& clip,
                                           RotationMode mode = RotationMode::kStrict);

struct ContactThresholds {
  double height = 0.05;  // m
  double speed = 0.15;   // m/s
};

// K x 4 binary labels: 1 iff the foot joint is below the height threshold
// and its forward-difference speed is below the speed threshold. The last
// frame reuses the previous frame's speed.
Eigen::MatrixXd compute_contact_labels(const std::vector<JointPositions>& positions,
                                       const Skeleton::FootJoints& feet, double fps,
                                       const ContactThresholds& thresholds = {});

}  // namespace tedi::motion
