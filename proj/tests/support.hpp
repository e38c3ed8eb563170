#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include "tedi/motion.hpp"
#include "tedi/rng.hpp"

namespace tedi::test {

inline motion::Mat3 random_rotation(Rng& rng) {
  motion::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return motion::axis_angle(axis, (2.0 * rng.uniform() - 1.0) * std::numbers::pi);
}

// Random topologically sorted chain/tree of `joints` joints.
inline std::shared_ptr<const motion::Skeleton> random_skeleton(Rng& rng, int joints) {
  std::vector<motion::Joint> js(joints);
  for (int j = 0; j < joints; ++j) {
    js[j].name = "j" + std::to_string(j);
    js[j].parent = j == 0 ? -1 : static_cast<int>(rng.integer(0, j - 1));
    js[j].offset = motion::Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.3;
  }
  motion::Skeleton::FootJoints feet{};
  for (int c = 0; c < motion::kContactChannels; ++c) feet[c] = joints - 1 - (c % joints);
  return std::make_shared<const motion::Skeleton>(std::move(js), feet);
}

// Random feature clip: valid 6D rotations, small root motion, contacts in {0, 1}.
inline motion::FeatureMatrix random_frames(Rng& rng, const motion::Skeleton& skel, int frames,
                                           bool binary_contacts = true) {
  const int joints = skel.joint_count();
  motion::FeatureMatrix m(frames, skel.feature_width());
  for (int t = 0; t < frames; ++t) {
    m(t, motion::Layout::kRootX) = 0.05 * rng.normal();
    m(t, motion::Layout::kRootZ) = 0.05 * rng.normal();
    m(t, motion::Layout::kRootY) = 1.0 + 0.1 * rng.normal();
    for (int j = 0; j < joints; ++j) {
      const auto six = motion::matrix_to_sixd(random_rotation(rng));
      for (int q = 0; q < motion::kRotationFeatures; ++q) m(t, motion::Layout::rotation(j) + q) = six[q];
    }
    for (int c = 0; c < motion::kContactChannels; ++c) {
      m(t, motion::Layout::contacts(joints) + c) = binary_contacts ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform();
    }
  }
  return m;
}

// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace tedi::test
