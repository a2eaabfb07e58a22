#include "cbfn/network.hpp"

#include <algorithm>
#include <cmath>

#include "cbfn/ops.hpp"
#include "cbfn/rng.hpp"

namespace cbfn {

void NetworkConfig::validate() const {
  if (encoder_widths.empty()) {
    throw ConfigError("NetworkConfig: encoder depth 0 (no levels)");
  }
  if (decoder_widths.size() != encoder_widths.size()) {
    throw ConfigError("NetworkConfig: encoder depth " +
                      std::to_string(encoder_widths.size()) +
                      " != decoder depth " + std::to_string(decoder_widths.size()) +
                      " (skip connections pair one-to-one)");
  }
  for (int w : encoder_widths) {
    if (w < 1) throw ConfigError("NetworkConfig: non-positive encoder width");
  }
  for (int w : decoder_widths) {
    if (w < 1) throw ConfigError("NetworkConfig: non-positive decoder width");
  }
  if (bottleneck_width < 1) throw ConfigError("NetworkConfig: non-positive bottleneck width");
  if (smoothness_order < 0) throw ConfigError("NetworkConfig: negative smoothness order");
  if (bn_epsilon <= 0.0f) throw ConfigError("NetworkConfig: non-positive bn_epsilon");
  if (variant == Variant::local_global) {
    if (global_width < 1) throw ConfigError("NetworkConfig: non-positive global width");
    // The global encoder halves the resolution until it reaches 4, then
    // applies a 4x4 conv without padding; the size must be 4 * 2^k.
    int s = global_input_size;
    if (s < 8) throw ConfigError("NetworkConfig: global_input_size must be >= 8");
    while (s > 4 && s % 2 == 0) s /= 2;
    if (s != 4) {
      throw ConfigError("NetworkConfig: global_input_size " +
                        std::to_string(global_input_size) + " is not 4 * 2^k");
    }
  }
}

const char* variant_name(Variant v) {
  return v == Variant::unet ? "unet" : "local_global";
}

Variant variant_from_name(const std::string& name) {
  if (name == "unet") return Variant::unet;
  if (name == "local_global" || name == "local-global") return Variant::local_global;
  throw ConfigError("unknown network variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// construction

void Network::register_param(const std::string& name, const Tensor<float>& t) {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
  params_.push_back(Parameter<float>{name, t});
}

void Network::register_state(const std::string& name, const Tensor<float>& t) {
  state_.push_back(Parameter<float>{name, t});
}

void Network::sort_registries() {
  auto by_name = [](const Parameter<float>& a, const Parameter<float>& b) {
    return a.name < b.name;
  };
  std::sort(params_.begin(), params_.end(), by_name);
  std::sort(state_.begin(), state_.end(), by_name);
}

Tensor<float> Network::make_weight(const std::string& name, const Shape& shape,
                                   std::int64_t fan_in, std::uint64_t seed) {
  Tensor<float> t = Tensor<float>::zeros(shape, /*requires_grad=*/true);
  Rng rng = Rng::keyed(seed, 0x11e17, static_cast<std::uint64_t>(init_ordinal_++));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  rng.fill_normal(std::span<float>(t.values()), 0.0, stddev);
  register_param(name, t);
  return t;
}

Tensor<float> Network::make_zeros(const std::string& name, std::int64_t channels) {
  Tensor<float> t = Tensor<float>::zeros({1, channels, 1, 1}, /*requires_grad=*/true);
  register_param(name, t);
  return t;
}

Network::BnSpec Network::make_bn(const std::string& prefix, std::int64_t channels) {
  BnSpec bn;
  bn.gamma = Tensor<float>::full({1, channels, 1, 1}, 1.0f, /*requires_grad=*/true);
  bn.beta = Tensor<float>::zeros({1, channels, 1, 1}, /*requires_grad=*/true);
  bn.rmean = Tensor<float>::zeros({1, channels, 1, 1});
  bn.rvar = Tensor<float>::full({1, channels, 1, 1}, 1.0f);
  register_param(prefix + ".gamma", bn.gamma);
  register_param(prefix + ".beta", bn.beta);
  register_state(prefix + ".running_mean", bn.rmean);
  register_state(prefix + ".running_var", bn.rvar);
  return bn;
}

Network::ConvBnRelu Network::make_conv_bn(const std::string& prefix, std::int64_t c_in,
                                          std::int64_t c_out, int k, Pad2 pb, Pad2 pe,
                                          std::uint64_t seed) {
  ConvBnRelu layer;
  layer.conv.w = make_weight(prefix + ".conv.weight", Shape{c_out, c_in, k, k},
                             c_in * k * k, seed);
  layer.conv.b = make_zeros(prefix + ".conv.bias", c_out);
  layer.conv.stride = 1;
  layer.conv.pb = pb;
  layer.conv.pe = pe;
  layer.bn = make_bn(prefix + ".bn", c_out);
  return layer;
}

Network::DownBlock Network::make_down(const std::string& prefix, std::int64_t c_in,
                                      std::int64_t c_out, std::uint64_t seed) {
  DownBlock block;
  if (config_.fixed_layers) {
    block.fixed_bias = Tensor<float>::zeros({1, c_in, 1, 1}, /*requires_grad=*/true);
    register_param(prefix + ".fixed.bias", block.fixed_bias);
  }
  block.conv.w = make_weight(prefix + ".conv.weight", Shape{c_out, c_in, 3, 3},
                             c_in * 9, seed);
  block.conv.b = make_zeros(prefix + ".conv.bias", c_out);
  block.conv.stride = 2;
  block.conv.pb = Pad2{1, 1};
  block.conv.pe = Pad2{0, 0};
  return block;
}

Network::UpBlock Network::make_up(const std::string& prefix, std::int64_t c_in,
                                  std::int64_t c_out, std::uint64_t seed) {
  UpBlock block;
  block.convt.w = make_weight(prefix + ".convt.weight", Shape{c_in, c_out, 4, 4},
                              c_in * 16, seed);
  block.convt.b = make_zeros(prefix + ".convt.bias", c_out);
  if (config_.fixed_layers) {
    block.fixed_bias = Tensor<float>::zeros({1, c_out, 1, 1}, /*requires_grad=*/true);
    register_param(prefix + ".fixed.bias", block.fixed_bias);
  }
  return block;
}

Network Network::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  net.kernel_up_ =
      make_fixed_kernel<float>(2, config.smoothness_order, KernelNorm::unit);
  net.kernel_down_ =
      make_fixed_kernel<float>(2, config.smoothness_order, KernelNorm::mean);

  const int depth = config.depth();
  const Pad2 p1{1, 1};

  // Local encoder. Width transitions live in the sampling blocks.
  std::int64_t c_prev = 3;
  for (int l = 0; l < depth; ++l) {
    const std::int64_t width = config.encoder_widths[static_cast<std::size_t>(l)];
    const std::int64_t next = (l + 1 < depth)
                                  ? config.encoder_widths[static_cast<std::size_t>(l + 1)]
                                  : config.bottleneck_width;
    EncoderLevel level;
    const std::string tag = "enc" + std::to_string(l + 1);
    level.a = net.make_conv_bn(tag + "1", c_prev, width, 3, p1, p1, seed);
    level.b = net.make_conv_bn(tag + "2", width, width, 3, p1, p1, seed);
    level.down = net.make_down("down" + std::to_string(l + 1), width, next, seed);
    net.enc_.push_back(level);
    c_prev = next;
  }

  // Bottleneck; the broadcast global descriptor is concatenated in front
  // of it for the local_global variant.
  std::int64_t mid_in = config.bottleneck_width;
  if (config.variant == Variant::local_global) mid_in += config.global_width;
  net.mid1_ = net.make_conv_bn("mid1", mid_in, config.bottleneck_width, 3, p1, p1, seed);
  net.mid2_ = net.make_conv_bn("mid2", config.bottleneck_width,
                               config.bottleneck_width, 3, p1, p1, seed);

  // Decoder. Level i upsamples to the resolution of encoder level
  // depth-1-i and concatenates that level's feature map.
  c_prev = config.bottleneck_width;
  for (int i = 0; i < depth; ++i) {
    const std::int64_t width = config.decoder_widths[static_cast<std::size_t>(i)];
    const std::int64_t skip =
        config.encoder_widths[static_cast<std::size_t>(depth - 1 - i)];
    DecoderLevel level;
    const std::string tag = "dec" + std::to_string(i + 1);
    level.up = net.make_up(tag + ".up", c_prev, width, seed);
    level.a = net.make_conv_bn(tag + "1", width + skip, width, 3, p1, p1, seed);
    level.b = net.make_conv_bn(tag + "2", width, width, 3, p1, p1, seed);
    net.dec_.push_back(level);
    c_prev = width;
  }

  // 1x1 conv + ReLU head with 3 filters.
  net.head_.w = net.make_weight("head.conv.weight", Shape{3, c_prev, 1, 1}, c_prev, seed);
  net.head_.b = net.make_zeros("head.conv.bias", 3);
  net.head_.stride = 1;
  net.head_.pb = Pad2{0, 0};
  net.head_.pe = Pad2{0, 0};

  // Global encoder: alternating 3x3 conv+BN+ReLU and Downsampling from
  // global_input_size down to 4x4, then a 4x4 conv+BN+ReLU without padding.
  if (config.variant == Variant::local_global) {
    int stages = 0;
    for (int s = config.global_input_size; s > 4; s /= 2) ++stages;
    std::int64_t gc = 3;
    for (int k = 0; k < stages; ++k) {
      const std::string tag = "glob" + std::to_string(k + 1);
      net.gconv_.push_back(
          net.make_conv_bn(tag, gc, config.global_width, 3, p1, p1, seed));
      gc = config.global_width;
      net.gdown_.push_back(net.make_down(tag + ".down", gc, gc, seed));
    }
    net.ghead_ = net.make_conv_bn("globhead", gc, config.global_width, 4,
                                  Pad2{0, 0}, Pad2{0, 0}, seed);
  }

  net.sort_registries();
  return net;
}

// ---------------------------------------------------------------------------
// forward

Tensor<float> Network::run_conv_bn_relu(Graph<float>* g, const ConvBnRelu& layer,
                                        const Tensor<float>& x, Mode mode) {
  Tensor<float> h = conv2d(g, x, layer.conv.w, layer.conv.b, layer.conv.stride,
                           layer.conv.pb, layer.conv.pe);
  BnSpec& bn = const_cast<BnSpec&>(layer.bn);  // running buffers mutate in train mode
  h = batch_norm(g, h, bn.gamma, bn.beta, bn.rmean, bn.rvar,
                 mode == Mode::train, config_.bn_epsilon, config_.bn_momentum);
  return relu(g, h);
}

Tensor<float> Network::run_down(Graph<float>* g, const DownBlock& block,
                                const Tensor<float>& x) {
  if (config_.fixed_layers) {
    return fixed_down(g, x, kernel_down_, block.fixed_bias, block.conv.w,
                      block.conv.b);
  }
  return conv2d(g, x, block.conv.w, block.conv.b, 2, Pad2{1, 1}, Pad2{0, 0});
}

Tensor<float> Network::run_up(Graph<float>* g, const UpBlock& block,
                              const Tensor<float>& x) {
  if (config_.fixed_layers) {
    return fixed_up(g, x, block.convt.w, block.convt.b, kernel_up_,
                    block.fixed_bias);
  }
  return conv_transpose2d(g, x, block.convt.w, block.convt.b, 2, 1);
}

Tensor<float> Network::global_descriptor(Graph<float>* g,
                                         const Tensor<float>& global_image,
                                         Mode mode) {
  if (config_.variant != Variant::local_global) {
    throw UsageError("global_descriptor: network has no global encoder");
  }
  const Shape s = global_image.shape();
  if (s.c != 3 || s.h != config_.global_input_size || s.w != config_.global_input_size) {
    throw ShapeError("global_descriptor: expected (n,3," +
                     std::to_string(config_.global_input_size) + "," +
                     std::to_string(config_.global_input_size) + "), got " + s.str());
  }
  Tensor<float> h = global_image;
  for (std::size_t k = 0; k < gconv_.size(); ++k) {
    h = run_conv_bn_relu(g, gconv_[k], h, mode);
    h = run_down(g, gdown_[k], h);
  }
  return run_conv_bn_relu(g, ghead_, h, mode);
}

Tensor<float> Network::forward(Graph<float>* g, const Tensor<float>& image,
                               const Tensor<float>* global_image, Mode mode) {
  if (!image.defined()) throw UsageError("forward: undefined input image");
  const Shape s = image.shape();
  if (s.c != 3) {
    throw ShapeError("forward: expected 3 input channels, got " + s.str());
  }
  const int depth = config_.depth();
  const std::int64_t divisor = std::int64_t(1) << depth;
  if (s.h % divisor != 0 || s.w % divisor != 0) {
    throw ConfigError("forward: input " + s.str() + " not divisible by 2^" +
                      std::to_string(depth));
  }
  const bool needs_global = config_.variant == Variant::local_global;
  if (needs_global && (global_image == nullptr || !global_image->defined())) {
    throw UsageError("forward: local_global variant requires the resized global input");
  }
  if (!needs_global && global_image != nullptr && global_image->defined()) {
    throw UsageError("forward: unet variant takes no global input");
  }

  Tensor<float> h = image;
  std::vector<Tensor<float>> skips;
  skips.reserve(static_cast<std::size_t>(depth));
  for (EncoderLevel& level : enc_) {
    h = run_conv_bn_relu(g, level.a, h, mode);
    h = run_conv_bn_relu(g, level.b, h, mode);
    skips.push_back(h);
    h = run_down(g, level.down, h);
  }

  if (needs_global) {
    Tensor<float> gd = global_descriptor(g, *global_image, mode);
    Tensor<float> gb = broadcast_spatial(g, gd, static_cast<int>(h.shape().h),
                                         static_cast<int>(h.shape().w));
    h = concat_channels(g, h, gb);
  }
  h = run_conv_bn_relu(g, mid1_, h, mode);
  h = run_conv_bn_relu(g, mid2_, h, mode);

  for (int i = 0; i < depth; ++i) {
    DecoderLevel& level = dec_[static_cast<std::size_t>(i)];
    h = run_up(g, level.up, h);
    h = concat_channels(g, h, skips[static_cast<std::size_t>(depth - 1 - i)]);
    h = run_conv_bn_relu(g, level.a, h, mode);
    h = run_conv_bn_relu(g, level.b, h, mode);
  }

  h = conv2d(g, h, head_.w, head_.b, 1, Pad2{0, 0}, Pad2{0, 0});
  return relu(g, h);
}

// ---------------------------------------------------------------------------

std::int64_t Network::count_parameters() const {
  std::int64_t count = 0;
  for (const auto& p : params_) count += p.tensor.numel();
  return count;
}

Tensor<float> Network::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw UsageError("no parameter named " + name);
}

void Network::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace cbfn
