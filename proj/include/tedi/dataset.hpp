#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "tedi/bvh.hpp"
#include "tedi/motion.hpp"

namespace tedi::data {

// Per-channel affine normalization; contact channels keep mean 0, std 1.
struct Normalization {
  static constexpr double kStdFloor = 1e-6;

  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  // Statistics over every frame of `clips` (population std, floored).
  static Normalization compute(const std::vector<const motion::FeatureMatrix*>& clips);
  static Normalization identity(int width);

  motion::FeatureMatrix normalize(const motion::FeatureMatrix& frames) const;
  motion::FeatureMatrix denormalize(const motion::FeatureMatrix& frames) const;
  int width() const { return static_cast<int>(mean.size()); }
};

struct TrainingWindow {
  motion::FeatureMatrix frames;  // raw features, window_len rows
  std::string source;
  int start = 0;
};

// Keeps frames 0, r, 2r, ... with r = source/target; o_xz displacements of
// the dropped frames are summed into the next kept frame.
motion::MotionClip downsample(const motion::MotionClip& clip, int source_fps, int target_fps);

// Windows starting at 0, stride, 2*stride, ...; none if the clip is short.
std::vector<TrainingWindow> make_windows(const motion::MotionClip& clip, int window_len, int stride,
                                         const std::string& source = {});
int window_count(int frames, int window_len, int stride);

struct DatasetConfig {
  int source_fps = 120;
  int target_fps = 30;
  int window_len = 500;
  int stride = 100;
  double scale = 1.0;

  void validate() const;
};

// A windowed training set with the stats computed over its own windows.
struct Dataset {
  std::shared_ptr<const motion::Skeleton> skeleton;
  double fps = 30.0;
  int window_len = 0;
  int stride = 0;
  Normalization normalization;
  std::vector<TrainingWindow> windows;

  int feature_width() const { return skeleton->feature_width(); }
  motion::MotionClip window_clip(std::size_t i) const;
};

Dataset build_dataset(const std::vector<motion::MotionClip>& clips, const std::vector<std::string>& sources,
                      int window_len, int stride);

// Feature clip at `target_fps`, keeping every (source/target)-th frame of
// the raw channels first.
motion::MotionClip bvh_to_clip_at(BvhData bvh, int target_fps);

// Ingest every *.bvh in a directory (sorted by file name).
Dataset ingest_bvh_directory(const std::string& dir, const DatasetConfig& config);

void save_dataset(const Dataset& dataset, std::ostream& os);
Dataset load_dataset(std::istream& is);
void save_dataset_file(const Dataset& dataset, const std::string& path);
Dataset load_dataset_file(const std::string& path);

void write_skeleton(std::ostream& os, const motion::Skeleton& skeleton);
motion::Skeleton read_skeleton(std::istream& is);

// ---- Synthetic gait ---------------------------------------------------

// Planar compass gait with straight legs: stance foot planted (up to a
// small forward slip), swing foot lifted by abduction along a half-sine.
struct GaitParams {
  int period = 32;          // frames per full cycle (even)
  double speed = 0.03;      // root forward speed, m/frame
  double lift = 0.08;       // swing foot peak height, m
  double slip = 0.1;        // stance slip as a fraction of speed
  double heading = 0.0;     // yaw, radians
  int phase = 0;            // cycle offset in frames
  double amplitude = 1.0;   // scales speed and lift; 0 = standing still
};

inline constexpr double kToyLegLength = 0.9;
inline constexpr double kToyHipWidth = 0.1;
inline constexpr double kToyFps = 30.0;

// root, LeftHip, LeftFoot, RightHip, RightFoot. The feet serve as both
// heel and toe contact points.
std::shared_ptr<const motion::Skeleton> toy_skeleton();

struct ToyClip {
  motion::MotionClip clip;   // contact channels hold the ground truth
  Eigen::MatrixXd contacts;  // K x 4 ground-truth stance labels
  GaitParams params;
};

ToyClip synthesize_gait(const GaitParams& params, int frames);
std::vector<ToyClip> generate_toy_dataset(std::uint64_t seed, int n_clips, int clip_len);

}  // namespace tedi::data
