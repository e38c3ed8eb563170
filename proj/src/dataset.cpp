#include "tedi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>

#include "tedi/binary_io.hpp"
#include "tedi/bvh.hpp"
#include "tedi/errors.hpp"
#include "tedi/rng.hpp"

namespace tedi::data {

using motion::FeatureMatrix;
using motion::Layout;
using motion::Mat3;
using motion::Vec3;

Normalization Normalization::compute(const std::vector<const FeatureMatrix*>& clips) {
  if (clips.empty()) throw ValidationError("normalization needs at least one clip");
  const Eigen::Index width = clips.front()->cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  double count = 0.0;
  for (const auto* c : clips) {
    sum += c->colwise().sum().transpose();
    count += static_cast<double>(c->rows());
  }
  Normalization n;
  n.mean = sum / count;
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(width);
  for (const auto* c : clips) {
    sq += (c->rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  n.std = (sq / count).cwiseSqrt().cwiseMax(kStdFloor);
  n.mean.tail(motion::kContactChannels).setZero();
  n.std.tail(motion::kContactChannels).setOnes();
  return n;
}

Normalization Normalization::identity(int width) {
  return {Eigen::VectorXd::Zero(width), Eigen::VectorXd::Ones(width)};
}

FeatureMatrix Normalization::normalize(const FeatureMatrix& frames) const {
  return ((frames.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix();
}

FeatureMatrix Normalization::denormalize(const FeatureMatrix& frames) const {
  return ((frames.array().rowwise() * std.transpose().array()).rowwise() + mean.transpose().array()).matrix();
}

void DatasetConfig::validate() const {
  if (source_fps <= 0 || target_fps <= 0) throw ConfigError("frame rates must be positive");
  if (source_fps % target_fps != 0) {
    throw ConfigError("source fps " + std::to_string(source_fps) + " is not divisible by target fps " +
                      std::to_string(target_fps));
  }
  if (window_len < 2) throw ConfigError("window length must be >= 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
}

motion::MotionClip downsample(const motion::MotionClip& clip, int source_fps, int target_fps) {
  if (source_fps <= 0 || target_fps <= 0 || source_fps % target_fps != 0) {
    throw ConfigError("cannot decimate " + std::to_string(source_fps) + " fps to " +
                      std::to_string(target_fps) + " fps");
  }
  const int ratio = source_fps / target_fps;
  const int frames = clip.length() / ratio;
  motion::MotionClip out;
  out.skeleton = clip.skeleton;
  out.fps = clip.fps / ratio;
  out.frames.resize(frames, clip.frames.cols());
  for (int i = 0; i < frames; ++i) {
    const int src = i * ratio;
    out.frames.row(i) = clip.frames.row(src);
    if (i > 0) {
      for (int s = src - ratio + 1; s < src; ++s) {
        out.frames(i, Layout::kRootX) += clip.frames(s, Layout::kRootX);
        out.frames(i, Layout::kRootZ) += clip.frames(s, Layout::kRootZ);
      }
    }
  }
  return out;
}

int window_count(int frames, int window_len, int stride) {
  if (frames < window_len) return 0;
  return (frames - window_len) / stride + 1;
}

std::vector<TrainingWindow> make_windows(const motion::MotionClip& clip, int window_len, int stride,
                                         const std::string& source) {
  if (window_len < 1 || stride < 1) throw ConfigError("window length and stride must be >= 1");
  std::vector<TrainingWindow> out;
  const int n = window_count(clip.length(), window_len, stride);
  out.reserve(n);
  for (int w = 0; w < n; ++w) {
    const int start = w * stride;
    out.push_back({clip.frames.middleRows(start, window_len), source, start});
  }
  return out;
}

motion::MotionClip Dataset::window_clip(std::size_t i) const {
  return {windows.at(i).frames, skeleton, fps};
}

Dataset build_dataset(const std::vector<motion::MotionClip>& clips, const std::vector<std::string>& sources,
                      int window_len, int stride) {
  if (clips.empty()) throw ValidationError("no clips to build a dataset from");
  Dataset ds;
  ds.skeleton = clips.front().skeleton;
  ds.fps = clips.front().fps;
  ds.window_len = window_len;
  ds.stride = stride;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (!(*clips[i].skeleton == *ds.skeleton)) {
      throw ValidationError("clip '" + sources.at(i) + "' uses a different skeleton");
    }
    auto w = make_windows(clips[i], window_len, stride, sources.at(i));
    std::move(w.begin(), w.end(), std::back_inserter(ds.windows));
  }
  if (ds.windows.empty()) throw ValidationError("no clip is long enough for a single window");
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& w : ds.windows) ptrs.push_back(&w.frames);
  ds.normalization = Normalization::compute(ptrs);
  return ds;
}

motion::MotionClip bvh_to_clip_at(BvhData bvh, int target_fps) {
  const int source_fps = static_cast<int>(std::lround(bvh.fps()));
  if (source_fps != target_fps) {
    if (target_fps <= 0 || source_fps % target_fps != 0) {
      throw ConfigError("cannot decimate " + std::to_string(source_fps) + " fps to " + std::to_string(target_fps) +
                        " fps");
    }
    // Decimate raw channels, then build features so contact speeds use
    // the target rate.
    const int ratio = source_fps / target_fps;
    const int kept = bvh.frame_count() / ratio;
    Eigen::MatrixXd decimated(kept, bvh.values.cols());
    for (int k = 0; k < kept; ++k) decimated.row(k) = bvh.values.row(k * ratio);
    bvh.values = std::move(decimated);
    bvh.frame_time = 1.0 / target_fps;
  }
  return bvh_to_clip(bvh);
}

Dataset ingest_bvh_directory(const std::string& dir, const DatasetConfig& config) {
  config.validate();
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bvh") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .bvh files in " + dir);

  BvhOptions opts;
  opts.scale = config.scale;
  std::vector<motion::MotionClip> clips(files.size());
  std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      BvhData bvh = read_bvh_file(files[i], opts);
      const double fps = bvh.fps();
      if (std::abs(fps - config.source_fps) > 0.5) {
        throw ConfigError(files[i] + ": file is " + std::to_string(fps) + " fps, expected " +
                          std::to_string(config.source_fps));
      }
      clips[i] = bvh_to_clip_at(bvh, config.target_fps);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw ParseError(e);
  }
  return build_dataset(clips, files, config.window_len, config.stride);
}

void write_skeleton(std::ostream& os, const motion::Skeleton& skeleton) {
  io::BinaryWriter w(os);
  w.pod<std::int32_t>(skeleton.joint_count());
  for (const auto& j : skeleton.joints()) {
    w.string(j.name);
    w.pod<std::int32_t>(j.parent);
    for (int i = 0; i < 3; ++i) w.pod(j.offset[i]);
  }
  for (int f : skeleton.foot_joints()) w.pod<std::int32_t>(f);
}

motion::Skeleton read_skeleton(std::istream& is) {
  io::BinaryReader r(is, "skeleton");
  const int n = r.pod<std::int32_t>();
  if (n < 1 || n > 10000) throw ParseError("skeleton: implausible joint count");
  std::vector<motion::Joint> joints(n);
  for (auto& j : joints) {
    j.name = r.string();
    j.parent = r.pod<std::int32_t>();
    for (int i = 0; i < 3; ++i) j.offset[i] = r.pod<double>();
  }
  motion::Skeleton::FootJoints feet;
  for (int& f : feet) f = r.pod<std::int32_t>();
  return motion::Skeleton(std::move(joints), feet);
}

namespace {
constexpr char kDatasetMagic[9] = "TEDIDSET";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, std::ostream& os) {
  io::BinaryWriter w(os);
  w.magic(kDatasetMagic, kDatasetVersion);
  write_skeleton(os, *ds.skeleton);
  w.pod(ds.fps);
  w.pod<std::int32_t>(ds.window_len);
  w.pod<std::int32_t>(ds.stride);
  w.array(ds.normalization.mean.data(), ds.normalization.mean.size());
  w.array(ds.normalization.std.data(), ds.normalization.std.size());
  w.pod<std::uint64_t>(ds.windows.size());
  for (const auto& win : ds.windows) {
    w.string(win.source);
    w.pod<std::int32_t>(win.start);
    w.pod<std::int32_t>(static_cast<std::int32_t>(win.frames.rows()));
    w.array(win.frames.data(), win.frames.size());
  }
}

Dataset load_dataset(std::istream& is) {
  io::BinaryReader r(is, "dataset cache");
  const auto version = r.magic(kDatasetMagic);
  if (version != kDatasetVersion) throw ParseError("dataset cache version " + std::to_string(version) + " unsupported");
  Dataset ds;
  ds.skeleton = std::make_shared<const motion::Skeleton>(read_skeleton(is));
  ds.fps = r.pod<double>();
  ds.window_len = r.pod<std::int32_t>();
  ds.stride = r.pod<std::int32_t>();
  const int width = ds.skeleton->feature_width();
  auto mean = r.array<double>();
  auto std = r.array<double>();
  if (static_cast<int>(mean.size()) != width || static_cast<int>(std.size()) != width) {
    throw ParseError("dataset cache: normalization width mismatch");
  }
  ds.normalization.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), width);
  ds.normalization.std = Eigen::Map<Eigen::VectorXd>(std.data(), width);
  const auto count = r.pod<std::uint64_t>();
  ds.windows.resize(count);
  for (auto& win : ds.windows) {
    win.source = r.string();
    win.start = r.pod<std::int32_t>();
    const int rows = r.pod<std::int32_t>();
    auto data = r.array<double>();
    if (rows != ds.window_len || static_cast<int>(data.size()) != rows * width) {
      throw ParseError("dataset cache: window shape mismatch");
    }
    win.frames = Eigen::Map<FeatureMatrix>(data.data(), rows, width);
  }
  return ds;
}

void save_dataset_file(const Dataset& ds, const std::string& path) {
  io::atomic_write(path, [&](std::ostream& os) { save_dataset(ds, os); });
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset cache " + path);
  return load_dataset(is);
}

// ---- Synthetic gait ---------------------------------------------------

std::shared_ptr<const motion::Skeleton> toy_skeleton() {
  static const auto skel = std::make_shared<const motion::Skeleton>(
      std::vector<motion::Joint>{
          {"Hips", -1, Vec3::Zero()},
          {"LeftHip", 0, Vec3(kToyHipWidth, 0.0, 0.0)},
          {"LeftFoot", 1, Vec3(0.0, -kToyLegLength, 0.0)},
          {"RightHip", 0, Vec3(-kToyHipWidth, 0.0, 0.0)},
          {"RightFoot", 3, Vec3(0.0, -kToyLegLength, 0.0)},
      },
      motion::Skeleton::FootJoints{2, 4, 2, 4});
  return skel;
}

namespace {

struct LegState {
  double d;  // root_z - foot_z in the walking frame
  double lift;
  bool stance;
};

// Leg at integer cycle position m in [0, p). Stance covers m in [0, p/2].
LegState leg_state(int m, int period, double half_span, double lift) {
  const double u = static_cast<double>(m) / period;
  if (u <= 0.5) return {-half_span + 4.0 * half_span * u, 0.0, true};
  const double s = u - 0.5;
  return {half_span - 4.0 * half_span * s, lift * std::sin(2.0 * std::numbers::pi * s), false};
}

void set_rotation(FeatureMatrix& frames, int t, int joint, const Mat3& r) {
  const auto six = motion::matrix_to_sixd(r);
  for (int q = 0; q < 6; ++q) frames(t, Layout::rotation(joint) + q) = six[q];
}

}  // namespace

ToyClip synthesize_gait(const GaitParams& params, int frames) {
  if (params.period < 2 || params.period % 2 != 0) throw ConfigError("gait period must be an even integer >= 2");
  if (frames < 1) throw ConfigError("gait clip needs at least one frame");
  const auto skel = toy_skeleton();
  const int p = params.period;
  const double v = params.amplitude * params.speed;
  const double lift = params.amplitude * params.lift;
  const double slip = params.slip * v;
  const double half_span = (v - slip) * p / 4.0;
  if (half_span >= kToyLegLength) throw ConfigError("gait step is longer than the leg");
  const bool static_pose = v == 0.0 && lift == 0.0;

  ToyClip out;
  out.params = params;
  out.clip.skeleton = skel;
  out.clip.fps = kToyFps;
  out.clip.frames = FeatureMatrix::Zero(frames, skel->feature_width());
  out.contacts = Eigen::MatrixXd::Zero(frames, motion::kContactChannels);
  FeatureMatrix& f = out.clip.frames;

  const Mat3 yaw = motion::axis_angle(Vec3::UnitY(), params.heading);
  for (int t = 0; t < frames; ++t) {
    const int m_left = ((t + params.phase) % p + p) % p;
    const int m_right = (m_left + p / 2) % p;
    const LegState left = leg_state(m_left, p, half_span, lift);
    const LegState right = leg_state(m_right, p, half_span, lift);
    const LegState& support = left.stance ? left : right;
    const double root_y = kToyLegLength * std::cos(std::asin(support.d / kToyLegLength));

    if (t > 0) {
      f(t, Layout::kRootX) = v * std::sin(params.heading);
      f(t, Layout::kRootZ) = v * std::cos(params.heading);
    }
    f(t, Layout::kRootY) = root_y;
    set_rotation(f, t, 0, yaw);

    const LegState* legs[2] = {&left, &right};
    const int hip_joint[2] = {1, 3};
    for (int side = 0; side < 2; ++side) {
      const LegState& leg = *legs[side];
      const double pitch = std::asin(leg.d / kToyLegLength);
      double abduct = 0.0;
      if (!leg.stance && leg.lift > 0.0) {
        const double c = std::clamp((root_y - leg.lift) / (kToyLegLength * std::cos(pitch)), -1.0, 1.0);
        abduct = std::acos(c);
      }
      const double sign = side == 0 ? 1.0 : -1.0;
      const Mat3 r = motion::axis_angle(Vec3::UnitZ(), sign * abduct) * motion::axis_angle(Vec3::UnitX(), pitch);
      set_rotation(f, t, hip_joint[side], r);
      set_rotation(f, t, hip_joint[side] + 1, Mat3::Identity());
    }

    // Ground truth: planted over [t, t+1] means both frames sit in the same
    // closed stance interval.
    const bool left_planted = static_pose || m_left <= p / 2 - 1;
    const bool right_planted = static_pose || m_right <= p / 2 - 1;
    out.contacts.row(t) << (left_planted ? 1.0 : 0.0), (right_planted ? 1.0 : 0.0),
        (left_planted ? 1.0 : 0.0), (right_planted ? 1.0 : 0.0);
  }
  if (frames >= 2) out.contacts.row(frames - 1) = out.contacts.row(frames - 2);
  f.rightCols(motion::kContactChannels) = out.contacts;
  return out;
}

std::vector<ToyClip> generate_toy_dataset(std::uint64_t seed, int n_clips, int clip_len) {
  Rng rng(seed);
  std::vector<ToyClip> out;
  out.reserve(n_clips);
  for (int i = 0; i < n_clips; ++i) {
    GaitParams g;
    g.period = 24 + 4 * static_cast<int>(rng.integer(0, 4));
    g.speed = 0.02 + 0.015 * rng.uniform();
    g.lift = 0.06 + 0.04 * rng.uniform();
    g.slip = 0.1;
    g.heading = 2.0 * std::numbers::pi * rng.uniform();
    g.phase = static_cast<int>(rng.integer(0, g.period - 1));
    out.push_back(synthesize_gait(g, clip_len));
  }
  return out;
}

}  // namespace tedi::data
