#include "tedi/bvh.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "tedi/errors.hpp"

namespace tedi::data {

using motion::Joint;
using motion::Mat3;
using motion::Vec3;

namespace {

struct Token {
  std::string text;
  int line;
};

// Whitespace tokenizer over the HIERARCHY part; stops after "MOTION".
class Tokenizer {
 public:
  explicit Tokenizer(std::istream& is) : is_(is) {}

  Token next() {
    while (pos_ >= tokens_.size()) {
      std::string line;
      if (!std::getline(is_, line)) throw ParseError("unexpected end of file", line_no_ + 1);
      ++line_no_;
      tokens_.clear();
      pos_ = 0;
      std::istringstream ls(line);
      std::string w;
      while (ls >> w) tokens_.push_back({w, line_no_});
    }
    return tokens_[pos_++];
  }

  Token expect(const std::string& word) {
    Token t = next();
    if (t.text != word) throw ParseError("expected '" + word + "', found '" + t.text + "'", t.line);
    return t;
  }

  double number() {
    Token t = next();
    return parse_double(t);
  }

  static double parse_double(const Token& t) {
    double v = 0.0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw ParseError("expected a number, found '" + t.text + "'", t.line);
    return v;
  }

  bool has_pending() const { return pos_ < tokens_.size(); }
  int line() const { return line_no_; }
  std::istream& stream() { return is_; }

 private:
  std::istream& is_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

Channel parse_channel(const Token& t) {
  static const std::pair<const char*, Channel> kNames[] = {
      {"Xposition", Channel::kXpos}, {"Yposition", Channel::kYpos}, {"Zposition", Channel::kZpos},
      {"Xrotation", Channel::kXrot}, {"Yrotation", Channel::kYrot}, {"Zrotation", Channel::kZrot}};
  for (const auto& [name, ch] : kNames) {
    if (t.text == name) return ch;
  }
  throw ParseError("unknown channel '" + t.text + "'", t.line);
}

struct HierarchyBuilder {
  std::vector<Joint> joints;
  std::vector<std::vector<Channel>> channels;
  double scale;

  void parse_joint(Tokenizer& tok, int parent, const std::string& name) {
    const int index = static_cast<int>(joints.size());
    joints.push_back({name, parent, Vec3::Zero()});
    channels.emplace_back();
    tok.expect("{");
    bool have_offset = false;
    for (;;) {
      Token t = tok.next();
      if (t.text == "}") break;
      if (t.text == "OFFSET") {
        Vec3 off;
        for (int i = 0; i < 3; ++i) off[i] = tok.number();
        joints[index].offset = off * scale;
        have_offset = true;
      } else if (t.text == "CHANNELS") {
        Token n = tok.next();
        const int count = static_cast<int>(Tokenizer::parse_double(n));
        if (count < 0 || count > 6) throw ParseError("invalid channel count " + n.text, n.line);
        for (int i = 0; i < count; ++i) channels[index].push_back(parse_channel(tok.next()));
      } else if (t.text == "JOINT") {
        parse_joint(tok, index, tok.next().text);
      } else if (t.text == "End") {
        tok.expect("Site");
        tok.expect("{");
        tok.expect("OFFSET");
        for (int i = 0; i < 3; ++i) tok.number();
        tok.expect("}");
      } else {
        throw ParseError("unexpected token '" + t.text + "' in joint '" + name + "'", t.line);
      }
    }
    if (!have_offset) throw ParseError("joint '" + name + "' has no OFFSET", tok.line());
  }
};

motion::Skeleton::FootJoints resolve_feet(const std::vector<Joint>& joints,
                                          const std::array<std::string, 4>& names) {
  motion::Skeleton::FootJoints feet{};
  std::vector<int> leaves;
  std::vector<bool> has_child(joints.size(), false);
  for (const Joint& j : joints) {
    if (j.parent >= 0) has_child[j.parent] = true;
  }
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (!has_child[j]) leaves.push_back(static_cast<int>(j));
  }
  for (int c = 0; c < 4; ++c) {
    int found = -1;
    for (std::size_t j = 0; j < joints.size(); ++j) {
      if (joints[j].name == names[c]) found = static_cast<int>(j);
    }
    feet[c] = found >= 0 ? found : leaves[c % leaves.size()];
  }
  return feet;
}

Mat3 axis_rotation(Channel ch, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  switch (ch) {
    case Channel::kXrot: return Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix();
    case Channel::kYrot: return Eigen::AngleAxisd(rad, Vec3::UnitY()).toRotationMatrix();
    case Channel::kZrot: return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix();
    default: return Mat3::Identity();
  }
}

int channel_offset(const std::vector<std::vector<Channel>>& channels, int joint) {
  int off = 0;
  for (int j = 0; j < joint; ++j) off += static_cast<int>(channels[j].size());
  return off;
}

}  // namespace

Mat3 BvhData::rotation(int frame, int joint) const {
  Mat3 r = Mat3::Identity();
  int col = channel_offset(channels, joint);
  for (Channel ch : channels[joint]) {
    r = r * axis_rotation(ch, values(frame, col));
    ++col;
  }
  return r;
}

Vec3 BvhData::root_translation(int frame) const {
  Vec3 p = Vec3::Zero();
  int col = 0;
  for (Channel ch : channels[0]) {
    const double v = values(frame, col++) * scale;
    if (ch == Channel::kXpos) p.x() = v;
    if (ch == Channel::kYpos) p.y() = v;
    if (ch == Channel::kZpos) p.z() = v;
  }
  return p;
}

BvhData parse_bvh(std::istream& is, const BvhOptions& options) {
  Tokenizer tok(is);
  tok.expect("HIERARCHY");
  tok.expect("ROOT");
  HierarchyBuilder builder{{}, {}, options.scale};
  builder.parse_joint(tok, -1, tok.next().text);
  tok.expect("MOTION");
  tok.expect("Frames:");
  const Token nframes = tok.next();
  const double frames_d = Tokenizer::parse_double(nframes);
  if (frames_d < 0 || frames_d != std::floor(frames_d)) {
    throw ParseError("invalid frame count '" + nframes.text + "'", nframes.line);
  }
  tok.expect("Frame");
  tok.expect("Time:");
  const Token ft = tok.next();
  const double frame_time = Tokenizer::parse_double(ft);
  if (!(frame_time > 0.0)) throw ParseError("frame time must be positive", ft.line);
  if (tok.has_pending()) throw ParseError("trailing tokens after Frame Time", tok.line());

  BvhData out;
  out.channels = builder.channels;
  out.frame_time = frame_time;
  out.scale = options.scale;
  const auto feet = resolve_feet(builder.joints, options.foot_joints);
  out.skeleton = motion::Skeleton(builder.joints, feet);

  int total = 0;
  for (const auto& c : out.channels) total += static_cast<int>(c.size());
  const int frames = static_cast<int>(frames_d);
  out.values.resize(frames, total);

  int line_no = tok.line();
  std::string line;
  int frame = 0;
  while (frame < frames) {
    if (!std::getline(tok.stream(), line)) {
      throw ParseError("MOTION section truncated: expected " + std::to_string(frames) +
                           " frames, found " + std::to_string(frame),
                       line_no + 1);
    }
    ++line_no;
    std::istringstream ls(line);
    std::string w;
    int col = 0;
    while (ls >> w) {
      if (col >= total) {
        throw ParseError("frame has more than " + std::to_string(total) + " channel values", line_no);
      }
      out.values(frame, col++) = Tokenizer::parse_double({w, line_no});
    }
    if (col == 0) continue;  // blank line
    if (col != total) {
      throw ParseError("frame has " + std::to_string(col) + " channel values, expected " +
                           std::to_string(total),
                       line_no);
    }
    ++frame;
  }
  return out;
}

BvhData read_bvh_file(const std::string& path, const BvhOptions& options) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open BVH file " + path);
  try {
    return parse_bvh(is, options);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

motion::MotionClip bvh_to_clip(const BvhData& bvh, const motion::ContactThresholds& thresholds) {
  using motion::Layout;
  auto skel = std::make_shared<const motion::Skeleton>(bvh.skeleton);
  const int joints = skel->joint_count();
  const int frames = bvh.frame_count();
  motion::MotionClip clip;
  clip.skeleton = skel;
  clip.fps = bvh.fps();
  clip.frames = motion::FeatureMatrix::Zero(frames, skel->feature_width());
  Vec3 prev = Vec3::Zero();
  for (int t = 0; t < frames; ++t) {
    const Vec3 root = bvh.root_translation(t);
    if (t > 0) {
      clip.frames(t, Layout::kRootX) = root.x() - prev.x();
      clip.frames(t, Layout::kRootZ) = root.z() - prev.z();
    }
    clip.frames(t, Layout::kRootY) = root.y();
    prev = root;
    for (int j = 0; j < joints; ++j) {
      const auto six = motion::matrix_to_sixd(bvh.rotation(t, j));
      for (int q = 0; q < 6; ++q) clip.frames(t, Layout::rotation(j) + q) = six[q];
    }
  }
  if (frames >= 2) {
    const auto labels = motion::compute_contact_labels(motion::clip_positions(clip),
                                                       skel->foot_joints(), clip.fps, thresholds);
    clip.frames.rightCols(motion::kContactChannels) = labels;
  }
  return clip;
}

namespace {

void write_joint(std::ostream& os, const motion::Skeleton& skel, int j, int depth, double scale) {
  const std::string indent(depth * 2, ' ');
  const Joint& jt = skel.joint(j);
  os << indent << (jt.parent < 0 ? "ROOT " : "JOINT ") << jt.name << "\n" << indent << "{\n";
  const Vec3 off = jt.offset / scale;
  os << indent << "  OFFSET " << off.x() << ' ' << off.y() << ' ' << off.z() << "\n";
  if (jt.parent < 0) {
    os << indent << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n";
  } else {
    os << indent << "  CHANNELS 3 Zrotation Xrotation Yrotation\n";
  }
  bool leaf = true;
  for (int c = j + 1; c < skel.joint_count(); ++c) {
    if (skel.joint(c).parent == j) {
      leaf = false;
      write_joint(os, skel, c, depth + 1, scale);
    }
  }
  if (leaf) {
    os << indent << "  End Site\n" << indent << "  {\n" << indent << "    OFFSET 0 0 0\n" << indent << "  }\n";
  }
  os << indent << "}\n";
}

}  // namespace

void export_bvh(const motion::MotionClip& clip, std::ostream& os, double scale, motion::RotationMode mode) {
  using motion::Layout;
  clip.validate();
  const motion::Skeleton& skel = *clip.skeleton;
  const auto old_precision = os.precision();
  os << std::setprecision(10);
  os << "HIERARCHY\n";
  write_joint(os, skel, 0, 0, scale);
  os << "MOTION\nFrames: " << clip.length() << "\nFrame Time: " << 1.0 / clip.fps << "\n";
  const auto roots = motion::accumulate_root(clip.frames);
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (int t = 0; t < clip.length(); ++t) {
    const Vec3 root = roots[t] / scale;
    os << root.x() << ' ' << root.y() << ' ' << root.z();
    for (int j = 0; j < skel.joint_count(); ++j) {
      std::span<const double, 6> six(clip.frames.row(t).data() + Layout::rotation(j), 6);
      const Mat3 r = motion::sixd_to_matrix(six, mode);
      // R = Rz(a) Rx(b) Ry(c)
      const Vec3 e = r.eulerAngles(2, 0, 1) * kDeg;
      os << ' ' << e[0] << ' ' << e[1] << ' ' << e[2];
    }
    os << "\n";
  }
  os.precision(old_precision);
}

void write_bvh_file(const motion::MotionClip& clip, const std::string& path, double scale) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  export_bvh(clip, os, scale);
}

}  // namespace tedi::data
