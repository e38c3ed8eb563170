#include "tedi/motion.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "tedi/errors.hpp"

namespace tedi::motion {

Skeleton::Skeleton(std::vector<Joint> joints, FootJoints feet)
    : joints_(std::move(joints)), feet_(feet) {
  if (joints_.empty()) throw ValidationError("skeleton has no joints");
  if (joints_[0].parent != -1) throw ValidationError("joint 0 must be the root");
  for (int j = 0; j < joint_count(); ++j) {
    const Joint& jt = joints_[j];
    if (j > 0 && (jt.parent < 0 || jt.parent >= j)) {
      throw ValidationError("joint '" + jt.name + "' has parent " + std::to_string(jt.parent) +
                            "; parents must precede children and only joint 0 is a root");
    }
    if (!jt.offset.allFinite()) throw ValidationError("joint '" + jt.name + "' has a non-finite offset");
  }
  for (int f : feet_) {
    if (f < 0 || f >= joint_count()) {
      throw ValidationError("foot joint index " + std::to_string(f) + " out of range");
    }
  }
}

int Skeleton::find(const std::string& name) const {
  for (int j = 0; j < joint_count(); ++j) {
    if (joints_[j].name == name) return j;
  }
  return -1;
}

bool Skeleton::operator==(const Skeleton& other) const {
  if (joint_count() != other.joint_count() || feet_ != other.feet_) return false;
  for (int j = 0; j < joint_count(); ++j) {
    const Joint& a = joints_[j];
    const Joint& b = other.joints_[j];
    if (a.name != b.name || a.parent != b.parent || a.offset != b.offset) return false;
  }
  return true;
}

void MotionClip::validate() const {
  if (!skeleton) throw ValidationError("motion clip has no skeleton");
  if (frames.rows() < 1) throw ValidationError("motion clip is empty");
  if (frames.cols() != skeleton->feature_width()) {
    throw ValidationError("motion clip width " + std::to_string(frames.cols()) +
                          " does not match skeleton feature width " +
                          std::to_string(skeleton->feature_width()));
  }
  if (!frames.allFinite()) throw ValidationError("motion clip contains non-finite values");
}

namespace {

// Unit vector orthogonal to `v` along the axis where v is smallest.
Vec3 orthogonal_axis(const Vec3& v) {
  int axis = 0;
  v.cwiseAbs().minCoeff(&axis);
  Vec3 e = Vec3::Unit(axis);
  return (e - v.dot(e) * v).normalized();
}

struct GramSchmidt {
  Vec3 a1, a2;  // inputs after jitter
  double n1, n2, d;
  Vec3 b1, u, b2, b3;
};

GramSchmidt gram_schmidt(std::span<const double, 6> f, RotationMode mode) {
  GramSchmidt g;
  g.a1 = Vec3(f[0], f[1], f[2]);
  g.a2 = Vec3(f[3], f[4], f[5]);
  g.n1 = g.a1.norm();
  if (!(g.n1 > kDegenerateNorm)) {
    if (mode == RotationMode::kStrict) throw DegenerateRotationError("6D rotation: first column is near zero");
    g.a1 += Vec3(kDegenerateNorm, 0.0, 0.0);
    g.n1 = g.a1.norm();
  }
  g.b1 = g.a1 / g.n1;
  g.d = g.b1.dot(g.a2);
  g.u = g.a2 - g.d * g.b1;
  g.n2 = g.u.norm();
  if (!(g.n2 > kDegenerateNorm)) {
    if (mode == RotationMode::kStrict) {
      throw DegenerateRotationError("6D rotation: columns are parallel or second column is near zero");
    }
    g.u += kDegenerateNorm * orthogonal_axis(g.b1);
    g.n2 = g.u.norm();
  }
  g.b2 = g.u / g.n2;
  g.b3 = g.b1.cross(g.b2);
  return g;
}

}  // namespace

Mat3 sixd_to_matrix(std::span<const double, 6> features, RotationMode mode) {
  for (double v : features) {
    if (!std::isfinite(v)) throw DegenerateRotationError("6D rotation: non-finite feature");
  }
  const GramSchmidt g = gram_schmidt(features, mode);
  Mat3 r;
  r.col(0) = g.b1;
  r.col(1) = g.b2;
  r.col(2) = g.b3;
  return r;
}

void sixd_to_matrix_backward(std::span<const double, 6> features, const Mat3& grad_rot,
                             std::span<double, 6> grad_features, RotationMode mode) {
  const GramSchmidt g = gram_schmidt(features, mode);
  Vec3 gb1 = grad_rot.col(0);
  Vec3 gb2 = grad_rot.col(1);
  const Vec3 gb3 = grad_rot.col(2);
  // b3 = b1 x b2
  gb1 += g.b2.cross(gb3);
  gb2 += gb3.cross(g.b1);
  // b2 = u / |u|
  const Vec3 gu = (gb2 - g.b2 * g.b2.dot(gb2)) / g.n2;
  // u = a2 - (b1.a2) b1
  Vec3 ga2 = gu;
  const double gd = -g.b1.dot(gu);
  gb1 += -g.d * gu + gd * g.a2;
  ga2 += gd * g.b1;
  // b1 = a1 / |a1|
  const Vec3 ga1 = (gb1 - g.b1 * g.b1.dot(gb1)) / g.n1;
  for (int i = 0; i < 3; ++i) {
    grad_features[i] += ga1[i];
    grad_features[3 + i] += ga2[i];
  }
}

SixD matrix_to_sixd(const Mat3& rot, double tol) {
  if (!rot.allFinite()) throw ValidationError("rotation matrix has non-finite entries");
  const double orth = (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > tol || std::abs(rot.determinant() - 1.0) > tol) {
    throw ValidationError("matrix is not a proper rotation (orthonormality error " +
                          std::to_string(orth) + ", det " + std::to_string(rot.determinant()) + ")");
  }
  return {rot(0, 0), rot(1, 0), rot(2, 0), rot(0, 1), rot(1, 1), rot(2, 1)};
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

FkPass::FkPass(const Skeleton& skeleton, std::span<const double> rotations, const Vec3& root,
               RotationMode mode)
    : skeleton_(&skeleton), rotations_(rotations.begin(), rotations.end()), mode_(mode) {
  const int joints = skeleton.joint_count();
  if (static_cast<int>(rotations.size()) != joints * kRotationFeatures) {
    throw ContractError("FK expects " + std::to_string(joints * kRotationFeatures) +
                        " rotation features, got " + std::to_string(rotations.size()));
  }
  local_.resize(joints);
  global_.resize(joints);
  positions_.resize(joints, 3);
  for (int j = 0; j < joints; ++j) {
    local_[j] = sixd_to_matrix(rotations.subspan(j * kRotationFeatures).first<6>(), mode);
    const Joint& jt = skeleton.joint(j);
    if (jt.parent < 0) {
      global_[j] = local_[j];
      positions_.row(j) = (root + jt.offset).transpose();
    } else {
      global_[j] = global_[jt.parent] * local_[j];
      positions_.row(j) = positions_.row(jt.parent) + (global_[jt.parent] * jt.offset).transpose();
    }
  }
}

void FkPass::backward(const JointPositions& grad_positions, std::span<double> grad_rotations,
                      Vec3& grad_root) const {
  const int joints = skeleton_->joint_count();
  std::vector<Vec3> gpos(joints);
  std::vector<Mat3> gglobal(joints, Mat3::Zero());
  for (int j = 0; j < joints; ++j) gpos[j] = grad_positions.row(j).transpose();

  std::vector<Mat3> glocal(joints, Mat3::Zero());
  for (int j = joints - 1; j >= 0; --j) {
    const Joint& jt = skeleton_->joint(j);
    if (jt.parent < 0) {
      grad_root += gpos[j];
      glocal[j] += gglobal[j];
      continue;
    }
    const int p = jt.parent;
    // P_j = P_p + G_p o_j
    gpos[p] += gpos[j];
    gglobal[p] += gpos[j] * jt.offset.transpose();
    // G_j = G_p R_j
    gglobal[p] += gglobal[j] * local_[j].transpose();
    glocal[j] += global_[p].transpose() * gglobal[j];
  }
  for (int j = 0; j < joints; ++j) {
    std::span<const double> rot(rotations_);
    sixd_to_matrix_backward(rot.subspan(j * kRotationFeatures).first<6>(), glocal[j],
                            grad_rotations.subspan(j * kRotationFeatures).first<6>(), mode_);
  }
}

JointPositions forward_kinematics(const Skeleton& skeleton, std::span<const double> rotations,
                                  const Eigen::Vector2d& root_xz, double root_y, RotationMode mode) {
  return FkPass(skeleton, rotations, Vec3(root_xz.x(), root_y, root_xz.y()), mode).positions();
}

std::vector<Vec3> accumulate_root(const FeatureMatrix& frames) {
  std::vector<Vec3> roots(frames.rows());
  double x = 0.0, z = 0.0;
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    x += frames(t, Layout::kRootX);
    z += frames(t, Layout::kRootZ);
    roots[t] = Vec3(x, frames(t, Layout::kRootY), z);
  }
  return roots;
}

std::vector<JointPositions> clip_positions(const MotionClip& clip, RotationMode mode) {
  const Skeleton& skel = *clip.skeleton;
  const int joints = skel.joint_count();
  const auto roots = accumulate_root(clip.frames);
  std::vector<JointPositions> out;
  out.reserve(clip.length());
  for (int t = 0; t < clip.length(); ++t) {
    std::span<const double> row(clip.frames.row(t).data() + Layout::kRotations,
                                static_cast<std::size_t>(joints * kRotationFeatures));
    out.push_back(FkPass(skel, row, roots[t], mode).positions());
  }
  return out;
}

Eigen::MatrixXd compute_contact_labels(const std::vector<JointPositions>& positions,
                                       const Skeleton::FootJoints& feet, double fps,
                                       const ContactThresholds& thresholds) {
  const int frames = static_cast<int>(positions.size());
  if (frames < 2) throw ContractError("contact labels need at least 2 frames");
  Eigen::MatrixXd labels(frames, kContactChannels);
  for (int c = 0; c < kContactChannels; ++c) {
    const int j = feet[c];
    double speed = 0.0;
    for (int t = 0; t < frames; ++t) {
      if (t + 1 < frames) {
        speed = (positions[t + 1].row(j) - positions[t].row(j)).norm() * fps;
      }
      const double height = positions[t](j, 1);
      labels(t, c) = (height < thresholds.height && speed < thresholds.speed) ? 1.0 : 0.0;
    }
  }
  return labels;
}

}  // namespace tedi::motion
