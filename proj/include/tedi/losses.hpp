#pragma once

#include "tedi/motion.hpp"

namespace tedi::train {

// A loss value and its gradient with respect to the predicted features.
struct LossValue {
  double value = 0.0;
  motion::FeatureMatrix grad;
};

// s(x) = 1 / (1 + exp(-12 (x - 0.5)))
double contact_weight(double x);

// Mean squared error over every frame and channel.
double diffusion_loss(const motion::FeatureMatrix& pred, const motion::FeatureMatrix& target);
LossValue diffusion_loss_grad(const motion::FeatureMatrix& pred, const motion::FeatureMatrix& target);

// (1/(K J)) sum_t |FK(pred_t) - FK(target_t)|^2 over the stacked 3J vector.
// Root positions are accumulated from the o_xz displacements.
LossValue positional_loss(const motion::Skeleton& skeleton, const motion::FeatureMatrix& pred,
                          const motion::FeatureMatrix& target,
                          motion::RotationMode mode = motion::RotationMode::kClamped);

// (1/(K C)) sum_c sum_{t<K} |P_{t+1} - P_t|^2 s(L_t) over the four foot
// channels. Labels come from pred's contact channels unless `labels`
// (K x 4) is given, in which case no gradient flows to the labels.
LossValue contact_loss(const motion::Skeleton& skeleton, const motion::FeatureMatrix& pred,
                       const Eigen::MatrixXd* labels = nullptr,
                       motion::RotationMode mode = motion::RotationMode::kClamped);

}  // namespace tedi::train
