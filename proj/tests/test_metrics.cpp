#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tedi/errors.hpp"
#include "tedi/metrics.hpp"

using namespace tedi;
using namespace tedi::eval;
using motion::FeatureMatrix;
using motion::Layout;

namespace {

std::shared_ptr<const motion::Skeleton> stick() {
  std::vector<motion::Joint> js{{"root", -1, motion::Vec3::Zero()}, {"tip", 0, motion::Vec3(0, 1, 0)}};
  return std::make_shared<const motion::Skeleton>(js, motion::Skeleton::FootJoints{1, 1, 1, 1});
}

FeatureMatrix rest_pose(int frames) {
  FeatureMatrix f = FeatureMatrix::Zero(frames, 19);
  const auto id = motion::matrix_to_sixd(motion::Mat3::Identity());
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < 2; ++j) {
      for (int q = 0; q < 6; ++q) f(t, Layout::rotation(j) + q) = id[q];
    }
  }
  return f;
}

}  // namespace

TEST_CASE("a constant pose has zero variance") {
  Rng rng(1);
  const auto skel = test::random_skeleton(rng, 4);
  FeatureMatrix f(40, skel->feature_width());
  const FeatureMatrix one = test::random_frames(rng, *skel, 1);
  for (int t = 0; t < 40; ++t) f.row(t) = one.row(0);
  f.col(Layout::kRootX).setConstant(0.05);  // walking does not count as pose change
  const auto v = windowed_pose_variance(motion::MotionClip{f, skel, 30.0}, 16);
  REQUIRE(v.size() == 4);
  CHECK(v[1].start == 8);
  for (const auto& w : v) CHECK(w.variance < 1e-20);
}

TEST_CASE("alternating poses give the closed-form variance") {
  FeatureMatrix f = rest_pose(12);
  const auto flip = motion::matrix_to_sixd(motion::axis_angle(motion::Vec3(0, 0, 1), M_PI));
  for (int t = 1; t < 12; t += 2) {
    for (int q = 0; q < 6; ++q) f(t, Layout::rotation(0) + q) = flip[q];
  }
  const motion::MotionClip clip{f, stick(), 30.0};
  for (const auto& w : windowed_pose_variance(clip, 4, 2)) CHECK(w.variance == doctest::Approx(1.0 / 6.0));
  // odd window starting on an identity frame: tip heights +1, -1, +1
  const auto odd = windowed_pose_variance(clip, 3, 2);
  CHECK(odd[0].variance == doctest::Approx(4.0 / 27.0));
  CHECK_THROWS_AS(windowed_pose_variance(clip, 13), ContractError);
}

TEST_CASE("foot slide measures planted horizontal motion") {
  FeatureMatrix f = rest_pose(20);
  for (int t = 1; t < 20; ++t) f(t, Layout::kRootX) = 0.1;
  f.col(Layout::kRootY).setConstant(0.5);
  const int lc = Layout::contacts(2);
  f.middleCols(lc, 4).setOnes();
  CHECK(foot_slide(motion::MotionClip{f, stick(), 30.0}) == doctest::Approx(0.1));
  // vertical motion is not slide
  FeatureMatrix g = f;
  g.col(Layout::kRootX).setZero();
  for (int t = 0; t < 20; ++t) g(t, Layout::kRootY) = 0.01 * t;
  CHECK(foot_slide(motion::MotionClip{g, stick(), 30.0}) == doctest::Approx(0.0));
  // no contacts, no pairs
  f.middleCols(lc, 4).setZero();
  CHECK(foot_slide(motion::MotionClip{f, stick(), 30.0}) == 0.0);
  // contacts only on even frames still average 0.1
  for (int t = 0; t < 20; t += 2) f.row(t).segment(lc, 4).setConstant(0.7);
  CHECK(foot_slide(motion::MotionClip{f, stick(), 30.0}) == doctest::Approx(0.1));
}

TEST_CASE("report and CSV roundtrip") {
  FeatureMatrix f = rest_pose(64);
  const auto flip = motion::matrix_to_sixd(motion::axis_angle(motion::Vec3(0, 0, 1), M_PI));
  for (int t = 1; t < 64; t += 2) {
    for (int q = 0; q < 6; ++q) f(t, Layout::rotation(0) + q) = flip[q];
  }
  const MetricReport r = evaluate_clip(motion::MotionClip{f, stick(), 30.0}, 32);
  CHECK(r.frames == 64);
  CHECK(r.windowed_variance.size() == 3);
  CHECK(r.min_variance() == doctest::Approx(1.0 / 6.0));
  CHECK(r.mean_variance() == doctest::Approx(1.0 / 6.0));

  std::stringstream ss;
  write_variance_csv(ss, r.windowed_variance);
  CHECK(ss.str().rfind("window_start,variance\n", 0) == 0);
  const auto back = read_variance_csv(ss);
  REQUIRE(back.size() == r.windowed_variance.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].start == r.windowed_variance[i].start);
    CHECK(back[i].variance == r.windowed_variance[i].variance);
  }
  std::istringstream bad("window_start,variance\n1,abc\n");
  CHECK_THROWS_AS(read_variance_csv(bad), ParseError);

  std::ostringstream summary;
  write_summary(summary, r);
  CHECK(summary.str().find("foot_slide = ") != std::string::npos);
}
