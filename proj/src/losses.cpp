#include "tedi/losses.hpp"

#include <cmath>
#include <vector>

#include "tedi/errors.hpp"

namespace tedi::train {

using motion::FeatureMatrix;
using motion::FkPass;
using motion::JointPositions;
using motion::Layout;
using motion::Vec3;

namespace {

void require_shape(const motion::Skeleton& skel, const FeatureMatrix& m, const char* what) {
  if (m.cols() != skel.feature_width()) {
    throw ContractError(std::string(what) + ": feature width " + std::to_string(m.cols()) +
                        " does not match skeleton width " + std::to_string(skel.feature_width()));
  }
}

// FK over a whole clip, keeping per-frame passes for the reverse sweep.
class ClipFk {
 public:
  ClipFk(const motion::Skeleton& skel, const FeatureMatrix& frames, motion::RotationMode mode) {
    const int joints = skel.joint_count();
    const auto roots = motion::accumulate_root(frames);
    passes_.reserve(frames.rows());
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
      std::span<const double> rot(frames.row(t).data() + Layout::kRotations, joints * motion::kRotationFeatures);
      passes_.emplace_back(skel, rot, roots[t], mode);
    }
  }

  const JointPositions& positions(int t) const { return passes_[t].positions(); }

  // grads[t] is dL/dP_t; writes dL/dfeatures (rotations and root channels).
  void backward(const std::vector<JointPositions>& grads, FeatureMatrix& out) const {
    const int frames = static_cast<int>(passes_.size());
    std::vector<Vec3> root_grad(frames, Vec3::Zero());
    for (int t = 0; t < frames; ++t) {
      const int joints = static_cast<int>(grads[t].rows());
      std::span<double> rot(out.row(t).data() + Layout::kRotations, joints * motion::kRotationFeatures);
      passes_[t].backward(grads[t], rot, root_grad[t]);
    }
    // Root x/z at frame t is the sum of displacements 0..t, so each
    // displacement collects the gradients of every later frame.
    double gx = 0.0, gz = 0.0;
    for (int t = frames - 1; t >= 0; --t) {
      gx += root_grad[t].x();
      gz += root_grad[t].z();
      out(t, Layout::kRootX) += gx;
      out(t, Layout::kRootZ) += gz;
      out(t, Layout::kRootY) += root_grad[t].y();
    }
  }

 private:
  std::vector<FkPass> passes_;
};

}  // namespace

double contact_weight(double x) { return 1.0 / (1.0 + std::exp(-12.0 * (x - 0.5))); }

double diffusion_loss(const FeatureMatrix& pred, const FeatureMatrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ContractError("diffusion loss: shape mismatch");
  }
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

LossValue diffusion_loss_grad(const FeatureMatrix& pred, const FeatureMatrix& target) {
  LossValue out;
  out.value = diffusion_loss(pred, target);
  out.grad = (pred - target) * (2.0 / static_cast<double>(pred.size()));
  return out;
}

LossValue positional_loss(const motion::Skeleton& skeleton, const FeatureMatrix& pred, const FeatureMatrix& target,
                          motion::RotationMode mode) {
  require_shape(skeleton, pred, "positional loss");
  require_shape(skeleton, target, "positional loss");
  if (pred.rows() != target.rows()) throw ContractError("positional loss: frame count mismatch");
  const int frames = static_cast<int>(pred.rows());
  const int joints = skeleton.joint_count();
  const double norm = 1.0 / (static_cast<double>(frames) * joints);

  ClipFk fk_pred(skeleton, pred, mode);
  ClipFk fk_target(skeleton, target, mode);

  LossValue out;
  out.grad = FeatureMatrix::Zero(pred.rows(), pred.cols());
  std::vector<JointPositions> grads(frames);
  for (int t = 0; t < frames; ++t) {
    const JointPositions diff = fk_pred.positions(t) - fk_target.positions(t);
    out.value += diff.squaredNorm() * norm;
    grads[t] = 2.0 * norm * diff;
  }
  fk_pred.backward(grads, out.grad);
  return out;
}

LossValue contact_loss(const motion::Skeleton& skeleton, const FeatureMatrix& pred, const Eigen::MatrixXd* labels,
                       motion::RotationMode mode) {
  require_shape(skeleton, pred, "contact loss");
  const int frames = static_cast<int>(pred.rows());
  if (frames < 2) throw ContractError("contact loss needs at least 2 frames");
  if (labels && (labels->rows() != frames || labels->cols() != motion::kContactChannels)) {
    throw ContractError("contact loss: label matrix must be K x 4");
  }
  const int joints = skeleton.joint_count();
  const int contact_col = Layout::contacts(joints);
  const auto& feet = skeleton.foot_joints();
  const double norm = 1.0 / (static_cast<double>(frames) * motion::kContactChannels);

  ClipFk fk(skeleton, pred, mode);
  LossValue out;
  out.grad = FeatureMatrix::Zero(pred.rows(), pred.cols());
  std::vector<JointPositions> grads(frames, JointPositions::Zero(joints, 3));
  for (int c = 0; c < motion::kContactChannels; ++c) {
    const int j = feet[c];
    for (int t = 0; t + 1 < frames; ++t) {
      const Eigen::RowVector3d delta = fk.positions(t + 1).row(j) - fk.positions(t).row(j);
      const double label = labels ? (*labels)(t, c) : pred(t, contact_col + c);
      const double s = contact_weight(label);
      const double sq = delta.squaredNorm();
      out.value += sq * s * norm;
      grads[t + 1].row(j) += 2.0 * s * norm * delta;
      grads[t].row(j) -= 2.0 * s * norm * delta;
      if (!labels) out.grad(t, contact_col + c) += sq * norm * 12.0 * s * (1.0 - s);
    }
  }
  fk.backward(grads, out.grad);
  return out;
}

}  // namespace tedi::train
