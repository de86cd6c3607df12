#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sarc/adam.hpp"
#include "sarc/config.hpp"
#include "sarc/features.hpp"
#include "sarc/ops.hpp"

namespace sarc {

// Dimensions of the fusion network. Defaults follow the full-size image
// branch (224 px, ResNet-18 widths); `scaled()` is the desk-size variant.
struct SarcNetConfig {
  std::size_t input_size = 224;
  std::array<std::size_t, 4> stage_widths{64, 128, 256, 512};
  std::size_t embed_dim = 32;
  Protocol protocol = Protocol::kP2;
  std::array<std::size_t, 2> feature_widths{64, 64};
  std::array<std::size_t, 4> head_widths{32, 16, 8, 1};
  std::uint64_t seed = 0;

  static SarcNetConfig scaled();

  std::size_t feature_dim() const { return feature_count(protocol); }
  void validate() const;

  // Reads the documented keys (input_size, stage_widths, embed_dim, protocol,
  // feature_widths, head_widths, seed) and leaves the rest untouched.
  static SarcNetConfig from_config(const KeyValueConfig& kv, SarcNetConfig base);
  static SarcNetConfig from_config(const KeyValueConfig& kv);
  void write_to(KeyValueConfig& kv) const;

  bool operator==(const SarcNetConfig&) const = default;
};

template <typename T>
struct LinearLayer {
  BasicTensor<T> weight;  // [out, in]
  BasicTensor<T> bias;    // [out]
};

template <typename T>
struct BatchNormLayer {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormStats<T> stats;
};

// Bias-free convolution followed by batch normalisation.
template <typename T>
struct ConvBn {
  BasicTensor<T> weight;  // [out, in, k, k]
  BatchNormLayer<T> bn;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct BasicBlock {
  ConvBn<T> conv1;
  ConvBn<T> conv2;
  std::optional<ConvBn<T>> projection;  // 1x1 stride-s shortcut when shape changes
};

template <typename T>
struct Backbone {
  ConvBn<T> stem;                                  // 7x7 stride 2, then 3x3/2 max pool
  std::array<std::array<BasicBlock<T>, 2>, 4> stages;
  std::array<LinearLayer<T>, 3> neck;              // w3 -> w3/2 -> 2E -> E
};

enum class TensorRole { kParameter, kBuffer };

template <typename T>
struct BasicSarcNetParams {
  SarcNetConfig config;
  Backbone<T> backbone;
  std::array<LinearLayer<T>, 3> feature_branch;  // F -> 64 -> 64 -> E
  std::array<LinearLayer<T>, 4> head;            // 2E -> E -> E/2 -> 8 -> 1

  // Visits every tensor in a fixed order with its stable dotted name.
  void for_each_tensor(const std::function<void(const std::string&, BasicTensor<T>&, TensorRole)>& fn);
  void for_each_tensor(
      const std::function<void(const std::string&, const BasicTensor<T>&, TensorRole)>& fn) const;

  // Learnable tensors only (no batch-norm running statistics).
  std::vector<NamedParameter<T>> parameters();
  std::size_t parameter_count() const;
  void zero_grad();
  void set_requires_grad(bool on);

  template <typename U>
  BasicSarcNetParams<U> cast() const;
};

using SarcNetParams = BasicSarcNetParams<float>;

// Closed form of parameter_count() for a config:
//   conv(k, cin, cout) = cout*cin*k*k + 2*cout        (weights + BN gamma/beta)
//   linear(in, out)    = in*out + out
//   stem = conv(7, 3, w0)
//   stage s, width c, input width c_in (= previous width, w0 for s = 0):
//     conv(3, c_in, c) + conv(3, c, c) + 2*conv(3, c, c) + [conv(1, c_in, c) if s > 0]
//   neck   = linear(w3, w3/2) + linear(w3/2, 2E) + linear(2E, E)
//   branch = linear(F, f0) + linear(f0, f1) + linear(f1, E)
//   head   = linear(2E, h0) + linear(h0, h1) + linear(h1, h2) + linear(h2, h3)
std::size_t expected_parameter_count(const SarcNetConfig& config);

struct LayerCounts {
  std::size_t main_path_convolutions = 0;
  std::size_t projection_convolutions = 0;
  std::size_t pooling_layers = 0;  // global average pools
  std::size_t backbone_linear = 0;
  std::size_t head_linear = 0;
  std::size_t feature_linear = 0;
};

template <typename T>
LayerCounts count_layers(const BasicSarcNetParams<T>& params);

// Kaiming-uniform fan-in weights (negative slope sqrt(5), so U(-1/sqrt(fan_in), 1/sqrt(fan_in))),
// zero biases, BN gamma 1 beta 0.
template <typename T>
BasicSarcNetParams<T> init_params(const SarcNetConfig& config);

// images [B,3,S,S] -> activations of the last residual stage [B,w3,s,s].
template <typename T>
BasicTensor<T> backbone_trunk(const BasicTensor<T>& images, BasicSarcNetParams<T>& params, Mode mode);

// Stem conv + max pool, then residual stages [begin, end) (0-based). `x` is
// the image batch when begin == 0 and the output of stage begin-1 otherwise.
template <typename T>
BasicTensor<T> backbone_stages(const BasicTensor<T>& x, BasicSarcNetParams<T>& params, Mode mode,
                               std::size_t begin, std::size_t end);

// Final-stage activations -> global average pool -> 3 linear layers -> [B,E].
template <typename T>
BasicTensor<T> backbone_neck(const BasicTensor<T>& stage_output, const BasicSarcNetParams<T>& params);

template <typename T>
BasicTensor<T> backbone_forward(const BasicTensor<T>& images, BasicSarcNetParams<T>& params, Mode mode);

// features [B,F] -> [B,E]
template <typename T>
BasicTensor<T> feature_branch_forward(const BasicTensor<T>& features, const BasicSarcNetParams<T>& params);

// [B,E] ++ [B,E] -> four linear layers -> [B,1]; no output activation.
template <typename T>
BasicTensor<T> fuse_and_head(const BasicTensor<T>& image_embedding,
                             const BasicTensor<T>& feature_embedding,
                             const BasicSarcNetParams<T>& params);

template <typename T>
BasicTensor<T> sarcnet_forward(const BasicTensor<T>& images, const BasicTensor<T>& features,
                               BasicSarcNetParams<T>& params, Mode mode);

}  // namespace sarc
