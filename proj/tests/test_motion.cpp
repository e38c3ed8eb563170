#include <array>
#include <numbers>

#include <Eigen/LU>

#include "doctest.h"
#include "support.hpp"
#include "tedi/errors.hpp"
#include "tedi/motion.hpp"

using namespace tedi;
using namespace tedi::motion;

namespace {

Mat3 from6(std::array<double, 6> f, RotationMode mode = RotationMode::kStrict) {
  return sixd_to_matrix(std::span<const double, 6>(f), mode);
}

// Plain-array Gram-Schmidt, kept apart from the library code path.
std::array<std::array<double, 3>, 3> gram_schmidt_columns(const std::array<double, 6>& f) {
  double a[3] = {f[0], f[1], f[2]}, b[3] = {f[3], f[4], f[5]};
  const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  for (double& v : a) v /= na;
  const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  for (int i = 0; i < 3; ++i) b[i] -= d * a[i];
  const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  for (double& v : b) v /= nb;
  const double c[3] = {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  return {{{a[0], a[1], a[2]}, {b[0], b[1], b[2]}, {c[0], c[1], c[2]}}};
}

// Brute force: explicit 4x4 homogeneous transforms down every chain.
JointPositions homogeneous_fk(const Skeleton& skel, const std::vector<double>& rot, const Vec3& root) {
  const int joints = skel.joint_count();
  std::vector<Eigen::Matrix4d> world(joints);
  JointPositions out(joints, 3);
  for (int j = 0; j < joints; ++j) {
    std::array<double, 6> f;
    std::copy(rot.begin() + 6 * j, rot.begin() + 6 * j + 6, f.begin());
    const auto cols = gram_schmidt_columns(f);
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < 3; ++r) local(r, c) = cols[c][r];
    }
    const Vec3& o = skel.joint(j).offset;
    local(0, 3) = o.x();
    local(1, 3) = o.y();
    local(2, 3) = o.z();
    if (j == 0) {
      local(0, 3) += root.x();
      local(1, 3) += root.y();
      local(2, 3) += root.z();
      world[j] = local;
    } else {
      world[j] = world[skel.joint(j).parent] * local;
    }
    out.row(j) << world[j](0, 3), world[j](1, 3), world[j](2, 3);
  }
  return out;
}

std::vector<double> random_rotations(Rng& rng, int joints) {
  std::vector<double> rot;
  for (int j = 0; j < joints; ++j) {
    const auto six = matrix_to_sixd(test::random_rotation(rng));
    // Unnormalized, non-orthogonal columns exercise the full Gram-Schmidt.
    const double s1 = 0.5 + rng.uniform(), s2 = 0.5 + rng.uniform();
    for (int q = 0; q < 3; ++q) rot.push_back(six[q] * s1);
    for (int q = 3; q < 6; ++q) rot.push_back(six[q] * s2 + 0.3 * six[q - 3]);
  }
  return rot;
}

std::shared_ptr<const Skeleton> two_joint_chain() {
  return std::make_shared<const Skeleton>(
      std::vector<Joint>{{"root", -1, Vec3::Zero()}, {"child", 0, Vec3(0, 1, 0)}},
      Skeleton::FootJoints{1, 1, 1, 1});
}

}  // namespace

TEST_CASE("sixd_to_matrix identity and scale invariance") {
  CHECK(from6({1, 0, 0, 0, 1, 0}).isApprox(Mat3::Identity(), 1e-15));
  CHECK(from6({2, 0, 0, 0, 3, 0}).isApprox(Mat3::Identity(), 1e-15));
}

TEST_CASE("sixd_to_matrix matches a standalone Gram-Schmidt") {
  const std::array<double, 6> f{0, 1, 0, 1, 1, 0};
  const Mat3 r = from6(f);
  Mat3 expected;
  expected << 0, 1, 0, 1, 0, 0, 0, 0, -1;
  CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-15);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::array<double, 6> g;
    for (double& v : g) v = rng.normal();
    const auto cols = gram_schmidt_columns(g);
    const Mat3 m = from6(g);
    for (int c = 0; c < 3; ++c) {
      for (int row = 0; row < 3; ++row) CHECK(m(row, c) == doctest::Approx(cols[c][row]).epsilon(1e-12));
    }
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.determinant() > 0);
  }
}

TEST_CASE("degenerate 6D input throws in strict mode and is clamped otherwise") {
  CHECK_THROWS_AS(from6({0, 0, 0, 0, 1, 0}), DegenerateRotationError);
  CHECK_THROWS_AS(from6({1, 0, 0, 2, 0, 0}), DegenerateRotationError);
  const Mat3 r = from6({1, 0, 0, 2, 0, 0}, RotationMode::kClamped);
  CHECK(r.allFinite());
  CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("matrix_to_sixd reads off the first two columns") {
  const auto id = matrix_to_sixd(Mat3::Identity());
  CHECK(id == SixD{1, 0, 0, 0, 1, 0});
  const auto rx = matrix_to_sixd(axis_angle(Vec3::UnitX(), std::numbers::pi));
  const SixD expected{1, 0, 0, 0, -1, 0};
  for (int i = 0; i < 6; ++i) CHECK(rx[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(matrix_to_sixd(bad), ValidationError);
  CHECK_THROWS_AS(matrix_to_sixd(-Mat3::Identity()), ValidationError);
}

TEST_CASE("6D roundtrip holds for 1000 random rotations") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = test::random_rotation(rng);
    const auto six = matrix_to_sixd(r);
    CHECK((sixd_to_matrix(std::span<const double, 6>(six)) - r).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("forward kinematics on a two-joint chain") {
  const auto skel = two_joint_chain();
  std::vector<double> rot{1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0};
  JointPositions p = forward_kinematics(*skel, rot, Eigen::Vector2d::Zero(), 0.0);
  CHECK(p.row(0).norm() < 1e-15);
  CHECK((p.row(1) - Eigen::RowVector3d(0, 1, 0)).norm() < 1e-15);

  const auto z90 = matrix_to_sixd(axis_angle(Vec3::UnitZ(), std::numbers::pi / 2));
  std::copy(z90.begin(), z90.end(), rot.begin());
  p = forward_kinematics(*skel, rot, Eigen::Vector2d::Zero(), 0.0);
  CHECK((p.row(1) - Eigen::RowVector3d(-1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches the homogeneous-transform oracle") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int joints = static_cast<int>(rng.integer(1, 5));
    const auto skel = test::random_skeleton(rng, joints);
    const auto rot = random_rotations(rng, joints);
    const Vec3 root(rng.normal(), rng.normal(), rng.normal());
    const JointPositions got = forward_kinematics(*skel, rot, Eigen::Vector2d(root.x(), root.z()), root.y());
    worst = std::max(worst, (got - homogeneous_fk(*skel, rot, root)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("forward kinematics is translation equivariant in xz") {
  Rng rng(8);
  const auto skel = test::random_skeleton(rng, 5);
  const auto rot = random_rotations(rng, 5);
  const JointPositions a = forward_kinematics(*skel, rot, Eigen::Vector2d(0.1, 0.2), 0.9);
  const JointPositions b = forward_kinematics(*skel, rot, Eigen::Vector2d(0.1 + 2.0, 0.2 - 3.0), 0.9);
  for (int j = 0; j < 5; ++j) {
    CHECK((b.row(j) - a.row(j) - Eigen::RowVector3d(2.0, 0.0, -3.0)).norm() < 1e-12);
  }
}

TEST_CASE("FkPass backward matches finite differences") {
  Rng rng(21);
  const auto skel = test::random_skeleton(rng, 5);
  auto rot = random_rotations(rng, 5);
  Vec3 root(0.3, 0.9, -0.2);
  JointPositions weights(5, 3);
  for (int i = 0; i < 15; ++i) weights(i / 3, i % 3) = rng.normal();
  auto objective = [&] {
    FkPass pass(*skel, rot, root);
    return (pass.positions().array() * weights.array()).sum();
  };
  FkPass pass(*skel, rot, root);
  std::vector<double> grad(rot.size(), 0.0);
  Vec3 grad_root = Vec3::Zero();
  pass.backward(weights, grad, grad_root);
  for (std::size_t i = 0; i < rot.size(); ++i) {
    CHECK(test::relative_error(grad[i], test::central_difference(objective, rot[i])) < 1e-6);
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(test::relative_error(grad_root[i], test::central_difference(objective, root[i])) < 1e-6);
  }
}

TEST_CASE("accumulate_root sums displacements from the first frame") {
  FeatureMatrix f = FeatureMatrix::Zero(3, Skeleton::feature_width_for(1));
  f.col(Layout::kRootX) << 0.0, 1.0, 2.0;
  f.col(Layout::kRootZ) << 0.0, -1.0, 0.5;
  f.col(Layout::kRootY) << 0.7, 0.8, 0.9;
  const auto roots = accumulate_root(f);
  CHECK(roots[2].isApprox(Vec3(3.0, 0.9, -0.5)));
  CHECK(roots[0].isApprox(Vec3(0.0, 0.7, 0.0)));
}

TEST_CASE("skeleton validation") {
  using J = std::vector<Joint>;
  CHECK_THROWS_AS(Skeleton(J{{"a", -1, Vec3::Zero()}, {"b", 1, Vec3::Zero()}}, {0, 0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(Skeleton(J{{"a", -1, Vec3::Zero()}, {"b", -1, Vec3::Zero()}}, {0, 0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(Skeleton(J{{"a", -1, Vec3::Zero()}}, {0, 0, 0, 3}), ValidationError);
  CHECK_THROWS_AS(Skeleton(J{{"a", -1, Vec3(NAN, 0, 0)}}, {0, 0, 0, 0}), ValidationError);
  const Skeleton ok(J{{"a", -1, Vec3::Zero()}, {"b", 0, Vec3::UnitY()}}, {1, 1, 1, 1});
  CHECK(ok.feature_width() == 2 * 6 + 4 + 3);
  CHECK(ok.find("b") == 1);
  CHECK(ok.find("zzz") == -1);
}

TEST_CASE("contact labels from height and speed") {
  const Skeleton::FootJoints feet{0, 0, 0, 0};
  std::vector<JointPositions> still(6, JointPositions::Zero(1, 3));
  CHECK(compute_contact_labels(still, feet, 30.0).minCoeff() == 1.0);

  std::vector<JointPositions> high(6, JointPositions::Zero(1, 3));
  for (auto& p : high) p(0, 1) = 1.0;
  CHECK(compute_contact_labels(high, feet, 30.0).maxCoeff() == 0.0);

  // Moving at 0.3 m/s on the floor: too fast.
  std::vector<JointPositions> sliding(6, JointPositions::Zero(1, 3));
  for (int t = 0; t < 6; ++t) sliding[t](0, 0) = 0.01 * t;
  CHECK(compute_contact_labels(sliding, feet, 30.0).maxCoeff() == 0.0);

  CHECK_THROWS_AS(compute_contact_labels(std::vector<JointPositions>(1, JointPositions::Zero(1, 3)), feet, 30.0),
                  ContractError);
}

TEST_CASE("clip validation") {
  const auto skel = two_joint_chain();
  MotionClip clip{FeatureMatrix::Zero(2, 5), skel, 30.0};
  CHECK_THROWS_AS(clip.validate(), ValidationError);
  clip.frames = FeatureMatrix::Zero(2, skel->feature_width());
  clip.frames(0, Layout::rotation(0)) = 1;
  clip.validate();
  clip.frames(1, 0) = NAN;
  CHECK_THROWS_AS(clip.validate(), ValidationError);
}
