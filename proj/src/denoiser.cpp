#include "tedi/denoiser.hpp"

#include <cmath>
#include <numeric>

namespace tedi::nn {

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("denoiser config: " + m); };
  if (channels.empty()) fail("at least one resolution level is required");
  for (int c : channels) {
    if (c <= 0) fail("channel widths must be positive");
  }
  const int factor = 1 << (levels() - 1);
  if (frames <= 0 || frames % factor != 0) {
    fail("frames " + std::to_string(frames) + " not divisible by " + std::to_string(factor));
  }
  if (kernel <= 0 || kernel % 2 == 0) fail("kernel must be odd");
  if (embed_dim <= 0 || embed_dim % 2 != 0) fail("embed_dim must be even and positive");
  if (groups <= 0) fail("groups must be positive");
  if (contact_channels < 0 || features <= contact_channels) fail("features must exceed contact channels");
  if (steps <= 0) fail("steps must be positive");
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = nlohmann::json{{"frames", c.frames},       {"features", c.features}, {"contact_channels", c.contact_channels},
                     {"steps", c.steps},         {"channels", c.channels}, {"kernel", c.kernel},
                     {"embed_dim", c.embed_dim}, {"groups", c.groups},     {"attention", c.attention}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  j.at("frames").get_to(c.frames);
  j.at("features").get_to(c.features);
  j.at("contact_channels").get_to(c.contact_channels);
  j.at("steps").get_to(c.steps);
  j.at("channels").get_to(c.channels);
  j.at("kernel").get_to(c.kernel);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("groups").get_to(c.groups);
  j.at("attention").get_to(c.attention);
}

template <class T>
Tensor<T> pack_batch(const std::vector<const motion::FeatureMatrix*>& clips) {
  if (clips.empty()) throw ContractError("pack_batch: empty batch");
  const int k = static_cast<int>(clips[0]->rows());
  const int f = static_cast<int>(clips[0]->cols());
  const int b = static_cast<int>(clips.size());
  Tensor<T> out({f, b, k});
  for (int s = 0; s < b; ++s) {
    const auto& m = *clips[s];
    if (m.rows() != k || m.cols() != f) throw ContractError("pack_batch: clips differ in shape");
    for (int c = 0; c < f; ++c) {
      for (int t = 0; t < k; ++t) out[(static_cast<long>(c) * b + s) * k + t] = static_cast<T>(m(t, c));
    }
  }
  return out;
}

template <class T>
motion::FeatureMatrix unpack_sample(const Tensor<T>& batch, int index) {
  const int f = batch.dim(0), b = batch.dim(1), k = batch.dim(2);
  if (index < 0 || index >= b) throw ContractError("unpack_sample: index out of range");
  motion::FeatureMatrix m(k, f);
  for (int c = 0; c < f; ++c) {
    for (int t = 0; t < k; ++t) m(t, c) = static_cast<double>(batch[(static_cast<long>(c) * b + index) * k + t]);
  }
  return m;
}

template <class T>
Tensor<T> level_embedding(const std::vector<diffusion::NoiseLevels>& levels, int dim, int steps) {
  const int b = static_cast<int>(levels.size());
  const int k = b ? static_cast<int>(levels[0].size()) : 0;
  const int half = dim / 2;
  const double scale = 1000.0 / steps;
  Tensor<T> out({dim, b, k});
  for (int s = 0; s < b; ++s) {
    for (int t = 0; t < k; ++t) {
      const double level = levels[s][t] * scale;
      for (int d = 0; d < half; ++d) {
        const double freq = std::exp(-std::log(10000.0) * d / half);
        out[(static_cast<long>(d) * b + s) * k + t] = static_cast<T>(std::sin(level * freq));
        out[(static_cast<long>(d + half) * b + s) * k + t] = static_cast<T>(std::cos(level * freq));
      }
    }
  }
  return out;
}

namespace {

// Largest divisor of `channels` not above `preferred`.
int group_count(int channels, int preferred) {
  for (int g = std::min(preferred, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace

template <class T>
DenoiserModel<T>::DenoiserModel(const DenoiserConfig& config, std::uint64_t seed)
    : config_(config), init_rng_(seed) {
  config_.validate();
  const auto& ch = config_.channels;
  const int levels = config_.levels();
  const int d = config_.embed_dim;

  embed_ = add_conv("embed", d, d, 1, 1);
  input_ = add_conv("input", config_.features, ch[0], config_.kernel, 1);
  input_emb_ = add_conv("input.emb", d, ch[0], 1, 1);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) down_.push_back(add_conv("down" + std::to_string(l), ch[l - 1], ch[l], config_.kernel, 2));
    encoder_.push_back(add_res("enc" + std::to_string(l), ch[l], ch[l]));
  }
  if (config_.attention) {
    const int c = ch.back();
    mid_.norm = add_norm("mid.norm", c);
    mid_.qkv = add_conv("mid.qkv", c, 3 * c, 1, 1);
    mid_.proj = add_conv("mid.proj", c, c, 1, 1);
  }
  for (int l = levels - 2; l >= 0; --l) {
    up_.push_back(add_conv("up" + std::to_string(l), ch[l + 1], ch[l], config_.kernel, 1));
    decoder_.push_back(add_res("dec" + std::to_string(l), 2 * ch[l], ch[l]));
  }
  out_norm_ = add_norm("out.norm", ch[0]);
  out_ = add_conv("out", ch[0], config_.features, config_.kernel, 1, true);
}

template <class T>
typename DenoiserModel<T>::Conv DenoiserModel<T>::add_conv(const std::string& name, int in, int out, int kernel,
                                                           int stride, bool zero) {
  const T bound = T(1) / std::sqrt(static_cast<T>(in * kernel));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Parameter<T> w{name + ".w", Tensor<T>({out, in, kernel}), {}};
  Parameter<T> b{name + ".b", Tensor<T>({out}), {}};
  if (!zero) {
    for (auto& v : w.value.values()) v = static_cast<T>(u(init_rng_)) * bound;
    for (auto& v : b.value.values()) v = static_cast<T>(u(init_rng_)) * bound;
  }
  params_.push_back(std::move(w));
  params_.push_back(std::move(b));
  const int n = static_cast<int>(params_.size());
  return Conv{n - 2, n - 1, stride, kernel / 2};
}

template <class T>
typename DenoiserModel<T>::Norm DenoiserModel<T>::add_norm(const std::string& name, int channels) {
  params_.push_back(Parameter<T>{name + ".gamma", Tensor<T>({channels}, T(1)), {}});
  params_.push_back(Parameter<T>{name + ".beta", Tensor<T>({channels}), {}});
  const int n = static_cast<int>(params_.size());
  return Norm{n - 2, n - 1};
}

template <class T>
typename DenoiserModel<T>::ResBlock DenoiserModel<T>::add_res(const std::string& name, int in, int out) {
  ResBlock r;
  r.n1 = add_norm(name + ".norm1", in);
  r.c1 = add_conv(name + ".conv1", in, out, config_.kernel, 1);
  r.emb = add_conv(name + ".emb", config_.embed_dim, out, 1, 1);
  r.n2 = add_norm(name + ".norm2", out);
  r.c2 = add_conv(name + ".conv2", out, out, config_.kernel, 1);
  if (in != out) r.skip = add_conv(name + ".skip", in, out, 1, 1);
  return r;
}

template <class T>
Parameter<T>& DenoiserModel<T>::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named " + name);
}

template <class T>
std::size_t DenoiserModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.numel());
  return n;
}

template <class T>
void DenoiserModel<T>::zero_grad() {
  for (auto& p : params_) p.grad = Tensor<T>(p.value.shape());
}

template <class T>
Var DenoiserModel<T>::conv(Graph<T>& g, Var x, const Conv& c) {
  return ops::conv1d(g, x, g.parameter(params_[c.w]), g.parameter(params_[c.b]), c.stride, c.pad);
}

template <class T>
Var DenoiserModel<T>::norm(Graph<T>& g, Var x, const Norm& n) {
  const int channels = params_[n.gamma].value.dim(0);
  return ops::group_norm(g, x, g.parameter(params_[n.gamma]), g.parameter(params_[n.beta]),
                         group_count(channels, config_.groups));
}

template <class T>
Var DenoiserModel<T>::res(Graph<T>& g, Var x, Var emb, const ResBlock& r) {
  Var h = conv(g, ops::silu(g, norm(g, x, r.n1)), r.c1);
  h = ops::add(g, h, conv(g, emb, r.emb));
  h = conv(g, ops::silu(g, norm(g, h, r.n2)), r.c2);
  Var skip = r.skip.w >= 0 ? conv(g, x, r.skip) : x;
  return ops::add(g, h, skip);
}

template <class T>
Var DenoiserModel<T>::attend(Graph<T>& g, Var x, const AttentionBlock& a) {
  const int c = config_.channels.back();
  Var qkv = conv(g, norm(g, x, a.norm), a.qkv);
  Var out = ops::attention(g, ops::slice_channels(g, qkv, 0, c), ops::slice_channels(g, qkv, c, c),
                           ops::slice_channels(g, qkv, 2 * c, c));
  return ops::add(g, x, conv(g, out, a.proj));
}

template <class T>
Var DenoiserModel<T>::forward(Graph<T>& g, const Tensor<T>& x, const std::vector<diffusion::NoiseLevels>& levels) {
  if (x.rank() != 3 || x.dim(0) != config_.features || x.dim(2) != config_.frames) {
    throw ContractError("denoiser input " + x.shape_string() + " does not match [" +
                        std::to_string(config_.features) + ", B, " + std::to_string(config_.frames) + "]");
  }
  if (static_cast<int>(levels.size()) != x.dim(1)) {
    throw ContractError("denoiser: " + std::to_string(levels.size()) + " level vectors for batch of " +
                        std::to_string(x.dim(1)));
  }
  for (const auto& lv : levels) {
    if (static_cast<int>(lv.size()) != config_.frames) {
      throw ContractError("denoiser: level vector length " + std::to_string(lv.size()) + " != K " +
                          std::to_string(config_.frames));
    }
    for (int t : lv) {
      if (t < 0 || t > config_.steps) throw ContractError("denoiser: level " + std::to_string(t) + " out of range");
    }
  }

  Var e = g.constant(level_embedding<T>(levels, config_.embed_dim, config_.steps));
  e = ops::silu(g, conv(g, e, embed_));

  Var h = ops::add(g, conv(g, g.constant(x), input_), conv(g, e, input_emb_));
  std::vector<Var> skips, embs;
  const int nl = config_.levels();
  for (int l = 0; l < nl; ++l) {
    if (l > 0) {
      h = conv(g, h, down_[l - 1]);
      e = ops::avg_pool2(g, e);
    }
    h = res(g, h, e, encoder_[l]);
    skips.push_back(h);
    embs.push_back(e);
  }
  if (config_.attention) h = attend(g, h, mid_);
  for (int i = 0, l = nl - 2; l >= 0; ++i, --l) {
    h = conv(g, ops::upsample_nearest2(g, h), up_[i]);
    h = ops::concat_channels(g, h, skips[l]);
    h = res(g, h, embs[l], decoder_[i]);
  }
  h = conv(g, ops::silu(g, norm(g, h, out_norm_)), out_);
  return ops::sigmoid_channels(g, h, config_.features - config_.contact_channels, config_.contact_channels);
}

template <class T>
motion::FeatureMatrix DenoiserModel<T>::predict(const motion::FeatureMatrix& noisy,
                                                const diffusion::NoiseLevels& levels) {
  Graph<T> g;
  g.set_grad_enabled(false);
  Var out = forward(g, pack_batch<T>({&noisy}), {levels});
  const Tensor<T>& v = g.value(out);
  if (!v.all_finite()) throw NumericError("denoiser produced a non-finite value");
  return unpack_sample(v, 0);
}

template Tensor<float> pack_batch<float>(const std::vector<const motion::FeatureMatrix*>&);
template Tensor<double> pack_batch<double>(const std::vector<const motion::FeatureMatrix*>&);
template motion::FeatureMatrix unpack_sample<float>(const Tensor<float>&, int);
template motion::FeatureMatrix unpack_sample<double>(const Tensor<double>&, int);
template Tensor<float> level_embedding<float>(const std::vector<diffusion::NoiseLevels>&, int, int);
template Tensor<double> level_embedding<double>(const std::vector<diffusion::NoiseLevels>&, int, int);
template class DenoiserModel<float>;
template class DenoiserModel<double>;

}  // namespace tedi::nn
