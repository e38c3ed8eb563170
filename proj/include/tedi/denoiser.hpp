#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tedi/autograd.hpp"
#include "tedi/motion.hpp"
#include "tedi/schedule.hpp"

namespace tedi::nn {

struct DenoiserConfig {
  int frames = 32;     // K; must be divisible by 2^(levels-1)
  int features = 37;   // F = 6J + 7
  int contact_channels = motion::kContactChannels;
  int steps = 32;      // diffusion steps T, used to scale the level embedding
  std::vector<int> channels{64, 128, 256};  // one width per resolution level
  int kernel = 3;
  int embed_dim = 64;
  int groups = 8;
  bool attention = true;  // one attention block at the bottleneck

  int levels() const { return static_cast<int>(channels.size()); }
  void validate() const;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// [F, B, K] batch tensor from K x F clips and back.
template <class T>
Tensor<T> pack_batch(const std::vector<const motion::FeatureMatrix*>& clips);
template <class T>
motion::FeatureMatrix unpack_sample(const Tensor<T>& batch, int index);

// Sinusoidal features of per-frame levels, [D, B, K]. Depends only on the
// level value, never on the frame position.
template <class T>
Tensor<T> level_embedding(const std::vector<diffusion::NoiseLevels>& levels, int dim, int steps);

template <class T>
class DenoiserModel {
 public:
  // Fan-in scaled uniform init from `seed`; the output layer starts at zero.
  DenoiserModel(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  // x [F, B, K] noisy features, one level vector per sample -> clean prediction [F, B, K].
  Var forward(Graph<T>& g, const Tensor<T>& x, const std::vector<diffusion::NoiseLevels>& levels);

  // Single-sample inference without recording gradients.
  motion::FeatureMatrix predict(const motion::FeatureMatrix& noisy, const diffusion::NoiseLevels& levels);

 private:
  struct Conv {
    int w, b, stride, pad;
  };
  struct Norm {
    int gamma, beta;
  };
  struct ResBlock {
    Norm n1;
    Conv c1;
    Conv emb;
    Norm n2;
    Conv c2;
    Conv skip{-1, -1, 1, 0};  // 1x1 projection when widths differ
  };
  struct AttentionBlock {
    Norm norm;
    Conv qkv;
    Conv proj;
  };

  Conv add_conv(const std::string& name, int in, int out, int kernel, int stride, bool zero = false);
  Norm add_norm(const std::string& name, int channels);
  ResBlock add_res(const std::string& name, int in, int out);

  Var conv(Graph<T>& g, Var x, const Conv& c);
  Var norm(Graph<T>& g, Var x, const Norm& n);
  Var res(Graph<T>& g, Var x, Var emb, const ResBlock& r);
  Var attend(Graph<T>& g, Var x, const AttentionBlock& a);

  DenoiserConfig config_;
  std::vector<Parameter<T>> params_;
  std::mt19937_64 init_rng_;

  Conv embed_;
  Conv input_;
  Conv input_emb_;
  std::vector<ResBlock> encoder_;
  std::vector<Conv> down_;
  AttentionBlock mid_;
  std::vector<Conv> up_;
  std::vector<ResBlock> decoder_;
  Norm out_norm_;
  Conv out_;
};

}  // namespace tedi::nn
