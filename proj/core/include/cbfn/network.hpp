#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbfn/fixed_layers.hpp"
#include "cbfn/graph.hpp"
#include "cbfn/tensor.hpp"

namespace cbfn {

enum class Variant { unet, local_global };

enum class Mode { train, eval };

// Declarative architecture description. The decoder mirrors the encoder;
// sampling blocks carry the width transitions, the paired 3x3 convs keep
// width within a level.
struct NetworkConfig {
  Variant variant = Variant::local_global;
  bool fixed_layers = true;
  std::vector<int> encoder_widths{32, 64, 128, 256};
  int bottleneck_width = 512;
  std::vector<int> decoder_widths{256, 128, 64, 32};
  int global_width = 64;
  int global_input_size = 128;
  int smoothness_order = 0;
  float bn_epsilon = 1e-5f;
  float bn_momentum = 0.1f;

  int depth() const { return static_cast<int>(encoder_widths.size()); }
  void validate() const;
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// An instantiated parameter set plus batch-norm running state for one
// NetworkConfig. Copying copies the handles (shared storage); use
// build() for a fresh parameter set.
class Network {
 public:
  Network() = default;

  // He-initialized network: conv weights ~ N(0, 2/fan_in), biases and
  // batch-norm beta zero, gamma one. Identical seeds give bitwise
  // identical parameters.
  static Network build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  // image (n, 3, h, w) with h, w divisible by 2^depth. global_image is
  // required (n, 3, S, S with S = global_input_size) for the local_global
  // variant and must be omitted for unet.
  Tensor<float> forward(Graph<float>* g, const Tensor<float>& image,
                        const Tensor<float>* global_image, Mode mode);

  // The (n, global_width, 1, 1) output of the global encoder.
  Tensor<float> global_descriptor(Graph<float>* g, const Tensor<float>& global_image,
                                  Mode mode);

  // Trainable parameters in lexicographic name order. Fixed kernels and
  // batch-norm running statistics are not parameters.
  std::vector<Parameter<float>>& parameters() { return params_; }
  const std::vector<Parameter<float>>& parameters() const { return params_; }
  std::int64_t count_parameters() const;

  // Batch-norm running buffers in lexicographic name order.
  std::vector<Parameter<float>>& state_buffers() { return state_; }
  const std::vector<Parameter<float>>& state_buffers() const { return state_; }

  Tensor<float> param(const std::string& name) const;

  void zero_grad();

  const FixedKernel<float>& up_kernel() const { return kernel_up_; }
  const FixedKernel<float>& down_kernel() const { return kernel_down_; }

 private:
  struct ConvSpec {
    Tensor<float> w, b;
    int stride = 1;
    Pad2 pb{1, 1}, pe{1, 1};
  };
  struct BnSpec {
    Tensor<float> gamma, beta, rmean, rvar;
  };
  struct ConvBnRelu {
    ConvSpec conv;
    BnSpec bn;
  };
  struct DownBlock {
    Tensor<float> fixed_bias;  // defined only when fixed_layers
    ConvSpec conv;             // 3x3, stride 2, pad (1,0)
  };
  struct UpBlock {
    ConvSpec convt;            // 4x4, up rate 2, pad 1; weight (c_in, c_out, 4, 4)
    Tensor<float> fixed_bias;  // defined only when fixed_layers
  };
  struct EncoderLevel {
    ConvBnRelu a, b;
    DownBlock down;
  };
  struct DecoderLevel {
    UpBlock up;
    ConvBnRelu a, b;
  };

  Tensor<float> make_weight(const std::string& name, const Shape& shape,
                            std::int64_t fan_in, std::uint64_t seed);
  Tensor<float> make_zeros(const std::string& name, std::int64_t channels);
  BnSpec make_bn(const std::string& prefix, std::int64_t channels);
  ConvBnRelu make_conv_bn(const std::string& prefix, std::int64_t c_in,
                          std::int64_t c_out, int k, Pad2 pb, Pad2 pe,
                          std::uint64_t seed);
  DownBlock make_down(const std::string& prefix, std::int64_t c_in,
                      std::int64_t c_out, std::uint64_t seed);
  UpBlock make_up(const std::string& prefix, std::int64_t c_in, std::int64_t c_out,
                  std::uint64_t seed);

  Tensor<float> run_conv_bn_relu(Graph<float>* g, const ConvBnRelu& layer,
                                 const Tensor<float>& x, Mode mode);
  Tensor<float> run_down(Graph<float>* g, const DownBlock& block,
                         const Tensor<float>& x);
  Tensor<float> run_up(Graph<float>* g, const UpBlock& block, const Tensor<float>& x);

  void register_param(const std::string& name, const Tensor<float>& t);
  void register_state(const std::string& name, const Tensor<float>& t);
  void sort_registries();

  NetworkConfig config_;
  std::vector<EncoderLevel> enc_;
  ConvBnRelu mid1_, mid2_;
  std::vector<DecoderLevel> dec_;
  ConvSpec head_;
  std::vector<ConvBnRelu> gconv_;
  std::vector<DownBlock> gdown_;
  ConvBnRelu ghead_;
  FixedKernel<float> kernel_up_, kernel_down_;

  std::vector<Parameter<float>> params_;
  std::vector<Parameter<float>> state_;
  std::int64_t init_ordinal_ = 0;
};

}  // namespace cbfn
