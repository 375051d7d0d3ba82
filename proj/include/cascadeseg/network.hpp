#ifndef CASCADESEG_NETWORK_HPP
#define CASCADESEG_NETWORK_HPP

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/landmarks.hpp"
#include "cascadeseg/ops.hpp"
#include "cascadeseg/tensor.hpp"

namespace cseg {

/// Fully convolutional architecture: VGG-style blocks of 3x3 same-padded
/// convolutions, each followed by 2x2 max pooling, then a convolutionalized
/// classifier head (fc6_conv, fc7_conv, fc8_conv) and a fixed deconvolution
/// chain with two optional pooling-stage skip fusions. Layer names follow the
/// full-scale architecture at every width so checkpoints and trainability
/// patterns read the same across scales.
struct FcnConfig {
  int input_channels = 3;
  int output_channels = 8;
  std::vector<std::pair<int, int>> blocks;  // (conv count, width) per block
  Index head_kernel = 7;
  int head_channels = 4096;

  /// Reduced width for fast experiments; same topology and layer names.
  static FcnConfig mini(int in_ch, int out_ch) {
    FcnConfig c;
    c.input_channels = in_ch;
    c.output_channels = out_ch;
    c.blocks = {{2, 16}, {2, 32}, {3, 64}};
    c.head_kernel = 3;
    c.head_channels = 128;
    return c;
  }

  /// Full published width (VGG-16 backbone, 4096-channel head).
  static FcnConfig full(int in_ch, int out_ch) {
    FcnConfig c;
    c.input_channels = in_ch;
    c.output_channels = out_ch;
    c.blocks = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    c.head_kernel = 7;
    c.head_channels = 4096;
    return c;
  }

  int num_blocks() const { return static_cast<int>(blocks.size()); }
  Index downsample_factor() const { return Index(1) << num_blocks(); }
};

/// Which skip fusions participate in the forward pass. Training coarse to
/// fine enables them one at a time; with both off the output is the pure
/// upsampled classifier ("stride 32" stage).
struct StageSet {
  bool pool4_skip = false;
  bool pool3_skip = false;
};

inline constexpr StageSet kStageStride32{false, false};
inline constexpr StageSet kStageStride16{true, false};
inline constexpr StageSet kStageStride8{true, true};

template <typename S>
struct Fcn {
  FcnConfig config;
  std::vector<Parameter<S>> params;
  std::unordered_map<std::string, std::size_t> index;

  Parameter<S>& param(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("Fcn: unknown parameter " + name);
    return params[it->second];
  }
  const Parameter<S>& param(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("Fcn: unknown parameter " + name);
    return params[it->second];
  }
};

namespace detail {

inline void validate_fcn_config(const FcnConfig& c) {
  if (c.input_channels < 1 || c.output_channels < 1)
    throw std::invalid_argument("FcnConfig: channel counts must be positive");
  if (c.blocks.size() < 3)
    throw std::invalid_argument("FcnConfig: need at least 3 blocks for the skip fusions");
  for (const auto& [count, width] : c.blocks)
    if (count < 1 || width < 1)
      throw std::invalid_argument("FcnConfig: block conv counts and widths must be positive");
  if (c.head_kernel < 1 || c.head_kernel % 2 == 0)
    throw std::invalid_argument("FcnConfig: head kernel must be odd");
  if (c.head_channels < 1)
    throw std::invalid_argument("FcnConfig: head channels must be positive");
}

}  // namespace detail

/// Builds the network with its published initialization: He-uniform fan-in
/// scaling for feature convolutions, zeros for the classifier (fc8_conv) and
/// both skip scores so new stages start as the identity on the existing
/// prediction, and frozen-shape bilinear interpolation kernels (still
/// trainable) for the deconvolutions.
template <typename S>
Fcn<S> build_fcn(const FcnConfig& cfg, Rng& rng) {
  detail::validate_fcn_config(cfg);
  Fcn<S> net;
  net.config = cfg;

  auto add = [&net](const std::string& name, std::vector<Index> shape) {
    net.index[name] = net.params.size();
    net.params.push_back(Parameter<S>{name, Tensor<S>::zeros(std::move(shape), true), true, {}});
  };

  int in_ch = cfg.input_channels;
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    const auto& [count, width] = cfg.blocks[static_cast<std::size_t>(b)];
    for (int i = 0; i < count; ++i) {
      const std::string name =
          "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
      add(name + "/weight", {width, in_ch, 3, 3});
      add(name + "/bias", {width});
      in_ch = width;
    }
  }
  add("fc6_conv/weight", {cfg.head_channels, in_ch, cfg.head_kernel, cfg.head_kernel});
  add("fc6_conv/bias", {cfg.head_channels});
  add("fc7_conv/weight", {cfg.head_channels, cfg.head_channels, 1, 1});
  add("fc7_conv/bias", {cfg.head_channels});
  add("fc8_conv/weight", {cfg.output_channels, cfg.head_channels, 1, 1});
  add("fc8_conv/bias", {cfg.output_channels});

  const int C = cfg.output_channels;
  const Index fuse = cfg.downsample_factor() / 4;  // deconv_8 upsampling factor
  add("deconv_32/weight", {C, C, 4, 4});
  add("score_pool4/weight",
      {C, cfg.blocks[static_cast<std::size_t>(cfg.num_blocks() - 2)].second, 1, 1});
  add("score_pool4/bias", {C});
  add("deconv_16/weight", {C, C, 4, 4});
  add("score_pool3/weight",
      {C, cfg.blocks[static_cast<std::size_t>(cfg.num_blocks() - 3)].second, 1, 1});
  add("score_pool3/bias", {C});
  add("deconv_8/weight", {C, C, 2 * fuse, 2 * fuse});

  for (auto& p : net.params) {
    const bool is_weight = p.name.size() > 7 && p.name.rfind("/weight") == p.name.size() - 7;
    if (!is_weight) continue;  // biases stay zero
    const std::string layer = p.name.substr(0, p.name.size() - 7);
    if (layer.rfind("deconv_", 0) == 0) {
      fill_bilinear_upsample(p.tensor);
    } else if (layer != "fc8_conv" && layer != "score_pool4" && layer != "score_pool3") {
      const Index fan_in = p.tensor.dim(1) * p.tensor.dim(2) * p.tensor.dim(3);
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (Index i = 0; i < p.tensor.size(); ++i)
        p.tensor.value()[i] = static_cast<S>(uniform(rng, -limit, limit));
    }
  }
  return net;
}

/// Runs the network on a {C, H, W} input whose spatial dimensions divide the
/// total pooling factor; returns full-resolution logits.
template <typename S>
Tensor<S> forward(Fcn<S>& net, const Tensor<S>& input, StageSet stages) {
  const FcnConfig& cfg = net.config;
  if (input.rank() != 3 || input.dim(0) != cfg.input_channels)
    throw std::invalid_argument("forward: input channel count does not match the network");
  const Index factor = cfg.downsample_factor();
  if (input.dim(1) % factor != 0 || input.dim(2) % factor != 0)
    throw std::invalid_argument("forward: input dimensions must divide the pooling factor");

  auto conv = [&net](const Tensor<S>& x, const std::string& layer, Index stride, Index pad) {
    return conv2d(x, net.param(layer + "/weight").tensor, net.param(layer + "/bias").tensor,
                  stride, pad);
  };

  Tensor<S> x = input;
  std::vector<Tensor<S>> pools;
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    const int count = cfg.blocks[static_cast<std::size_t>(b)].first;
    for (int i = 0; i < count; ++i)
      x = relu(conv(x, "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1), 1, 1));
    x = maxpool2(x);
    pools.push_back(x);
  }

  x = relu(conv(x, "fc6_conv", 1, cfg.head_kernel / 2));
  x = relu(conv(x, "fc7_conv", 1, 0));
  x = conv(x, "fc8_conv", 1, 0);

  const int B = cfg.num_blocks();
  x = conv2d_transpose(x, net.param("deconv_32/weight").tensor, 2, 1);
  if (stages.pool4_skip)
    x = crop_add(x, conv(pools[static_cast<std::size_t>(B - 2)], "score_pool4", 1, 0));
  x = conv2d_transpose(x, net.param("deconv_16/weight").tensor, 2, 1);
  if (stages.pool3_skip)
    x = crop_add(x, conv(pools[static_cast<std::size_t>(B - 3)], "score_pool3", 1, 0));
  const Index fuse = factor / 4;
  x = conv2d_transpose(x, net.param("deconv_8/weight").tensor, fuse, fuse / 2);
  return x;
}

/// Deep copy: fresh graph leaves with the same values, names and flags.
template <typename S>
Fcn<S> clone_network(const Fcn<S>& net) {
  Fcn<S> out;
  out.config = net.config;
  out.index = net.index;
  out.params.reserve(net.params.size());
  for (const auto& p : net.params) {
    Parameter<S> q;
    q.name = p.name;
    q.trainable = p.trainable;
    q.velocity = p.velocity;
    q.tensor = Tensor<S>::zeros(p.tensor.shape(), true);
    q.tensor.value() = p.tensor.value();
    out.params.push_back(std::move(q));
  }
  return out;
}

/// Deep-copies the network while widening conv1_1 from 3 input channels to
/// 3 + 68 guidance channels. The new kernel slices start at zero, so on
/// all-zero guidance the expanded network computes exactly what the original
/// did on the plain image.
template <typename S>
Fcn<S> expand_first_layer(const Fcn<S>& net) {
  if (net.config.input_channels != 3)
    throw std::invalid_argument("expand_first_layer: network must take 3-channel input");

  Fcn<S> out;
  out.config = net.config;
  out.config.input_channels = 3 + kNumLandmarks;
  out.index = net.index;
  out.params.reserve(net.params.size());
  for (const auto& p : net.params) {
    Parameter<S> q;
    q.name = p.name;
    q.trainable = p.trainable;
    // Optimizer state starts fresh: the expanded weight changed shape, and
    // guided training is a new run (checkpoints carry no velocities either).
    if (p.name == "conv1_1/weight") {
      const Index F = p.tensor.dim(0), k = p.tensor.dim(2);
      q.tensor = Tensor<S>::zeros({F, Index(3 + kNumLandmarks), k, k}, true);
      for (Index f = 0; f < F; ++f)
        for (Index c = 0; c < 3; ++c)
          for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < k; ++j)
              q.tensor.value()[((f * (3 + kNumLandmarks) + c) * k + i) * k + j] =
                  p.tensor.value()[((f * 3 + c) * k + i) * k + j];
    } else {
      q.tensor = Tensor<S>::zeros(p.tensor.shape(), true);
      q.tensor.value() = p.tensor.value();
    }
    out.params.push_back(std::move(q));
  }
  return out;
}

/// Flips the trainable flag on every parameter whose name contains `pattern`
/// (an empty pattern matches everything). Returns how many matched; warns on
/// zero so typos in stage schedules surface early.
template <typename S>
int set_trainable(Fcn<S>& net, const std::string& pattern, bool trainable) {
  int count = 0;
  for (auto& p : net.params) {
    if (p.name.find(pattern) != std::string::npos) {
      p.trainable = trainable;
      ++count;
    }
  }
  if (count == 0)
    std::cerr << "set_trainable: pattern \"" << pattern << "\" matched no parameters\n";
  return count;
}

}  // namespace cseg

#endif
