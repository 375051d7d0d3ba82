#ifndef CASCADESEG_HEATMAP_HPP
#define CASCADESEG_HEATMAP_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/image.hpp"
#include "cascadeseg/landmarks.hpp"
#include "cascadeseg/tensor.hpp"

namespace cseg {

/// One float plane per landmark, all with identical dimensions.
using HeatmapStack = std::vector<Grid<float>>;

/// Heatmap width matched to the normalization target: 5 px at a 350 px face.
inline double default_sigma(Index target_height) {
  return 5.0 * static_cast<double>(target_height) / 350.0;
}

/// Renders one unnormalized isotropic Gaussian per landmark, evaluated on the
/// integer pixel lattice: channel k at (row i, col j) is
/// exp(-((j - x_k)^2 + (i - y_k)^2) / (2 sigma^2)).
inline HeatmapStack encode_heatmaps(const LandmarkSet& lm, Index height, Index width,
                                    double sigma) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("encode_heatmaps: dimensions must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("encode_heatmaps: sigma must be positive");
  validate_landmarks(lm);

  const double inv = 1.0 / (2.0 * sigma * sigma);
  HeatmapStack stack(kNumLandmarks);
  for (int k = 0; k < kNumLandmarks; ++k) {
    Grid<float>& ch = stack[static_cast<std::size_t>(k)];
    ch.resize(height, width);
    const double x = lm.xy(k, 0), y = lm.xy(k, 1);
    for (Index i = 0; i < height; ++i) {
      const double dy2 = (static_cast<double>(i) - y) * (static_cast<double>(i) - y);
      for (Index j = 0; j < width; ++j) {
        const double dx = static_cast<double>(j) - x;
        ch(i, j) = static_cast<float>(std::exp(-(dx * dx + dy2) * inv));
      }
    }
  }
  return stack;
}

/// Channels whose decode was ambiguous (constant plane, e.g. all zero).
struct DecodeReport {
  std::vector<int> degenerate_channels;
};

/// Peak-picking decode: each landmark is placed at its channel's maximum,
/// ties resolved to the smallest row, then the smallest column. A constant
/// channel decodes to (0, 0) and is flagged in the report.
inline LandmarkSet decode_heatmaps(const HeatmapStack& stack, DecodeReport* report = nullptr) {
  if (static_cast<int>(stack.size()) != kNumLandmarks)
    throw std::invalid_argument("decode_heatmaps: expected one channel per landmark");
  if (report) report->degenerate_channels.clear();

  LandmarkSet lm;
  for (int k = 0; k < kNumLandmarks; ++k) {
    const Grid<float>& ch = stack[static_cast<std::size_t>(k)];
    if (ch.size() == 0) throw std::invalid_argument("decode_heatmaps: empty channel");
    Index bi = 0, bj = 0;
    float best = ch(0, 0);
    bool constant = true;
    for (Index i = 0; i < ch.rows(); ++i)
      for (Index j = 0; j < ch.cols(); ++j) {
        if (ch(i, j) != best) constant = false;
        if (ch(i, j) > best) {
          best = ch(i, j);
          bi = i;
          bj = j;
        }
      }
    if (constant) {
      bi = bj = 0;
      if (report) report->degenerate_channels.push_back(k);
    }
    lm.xy(k, 0) = static_cast<double>(bj);
    lm.xy(k, 1) = static_cast<double>(bi);
  }
  return lm;
}

/// Copies an RGB image into a {3, H, W} network input tensor.
inline Tensor<float> image_tensor(const ImageRgb& image) {
  const Index H = image.height(), W = image.width();
  Tensor<float> out = Tensor<float>::zeros({3, H, W});
  float* dst = out.value().data();
  for (int c = 0; c < 3; ++c, dst += H * W)
    std::memcpy(dst, image.planes[static_cast<std::size_t>(c)].data(),
                sizeof(float) * static_cast<std::size_t>(H * W));
  return out;
}

/// Copies a heatmap stack into a {channels, H, W} tensor (training targets).
inline Tensor<float> heatmaps_tensor(const HeatmapStack& stack) {
  if (stack.empty()) throw std::invalid_argument("heatmaps_tensor: empty stack");
  const Index C = static_cast<Index>(stack.size());
  const Index H = stack.front().rows(), W = stack.front().cols();
  Tensor<float> out = Tensor<float>::zeros({C, H, W});
  float* dst = out.value().data();
  for (const Grid<float>& ch : stack) {
    if (ch.rows() != H || ch.cols() != W)
      throw std::invalid_argument("heatmaps_tensor: inconsistent channel dimensions");
    std::memcpy(dst, ch.data(), sizeof(float) * static_cast<std::size_t>(H * W));
    dst += H * W;
  }
  return out;
}

/// Splits a {C, H, W} tensor back into per-channel planes (decoding network
/// predictions).
template <typename S>
inline HeatmapStack tensor_heatmaps(const Tensor<S>& t) {
  if (t.rank() != 3) throw std::invalid_argument("tensor_heatmaps: tensor must be rank 3");
  const Index C = t.dim(0), H = t.dim(1), W = t.dim(2);
  HeatmapStack stack(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) {
    Grid<float>& ch = stack[static_cast<std::size_t>(c)];
    ch.resize(H, W);
    for (Index i = 0; i < H; ++i)
      for (Index j = 0; j < W; ++j)
        ch(i, j) = static_cast<float>(t.value()[(c * H + i) * W + j]);
  }
  return stack;
}

/// Concatenates an RGB image with 68 guidance channels into the {71, H, W}
/// network input, ordered red, green, blue, landmark 1..68.
inline Tensor<float> stack_input(const ImageRgb& image, const HeatmapStack& heatmaps) {
  if (static_cast<int>(heatmaps.size()) != kNumLandmarks)
    throw std::invalid_argument("stack_input: expected one channel per landmark");
  const Index H = image.height(), W = image.width();
  for (const Grid<float>& ch : heatmaps)
    if (ch.rows() != H || ch.cols() != W)
      throw std::invalid_argument("stack_input: heatmap dimensions do not match image");

  Tensor<float> out = Tensor<float>::zeros({3 + kNumLandmarks, H, W});
  float* dst = out.value().data();
  const Index plane = H * W;
  for (int c = 0; c < 3; ++c, dst += plane)
    std::memcpy(dst, image.planes[static_cast<std::size_t>(c)].data(),
                sizeof(float) * static_cast<std::size_t>(plane));
  for (int k = 0; k < kNumLandmarks; ++k, dst += plane)
    std::memcpy(dst, heatmaps[static_cast<std::size_t>(k)].data(),
                sizeof(float) * static_cast<std::size_t>(plane));
  return out;
}

// ---------------------------------------------------------------------------
// Debug dump format: "HMST", three little-endian u32 fields (channels,
// height, width), then channel-major row-major float32 data.
// ---------------------------------------------------------------------------

inline void save_heatmaps(const std::string& path, const HeatmapStack& stack) {
  if (stack.empty()) throw std::invalid_argument("save_heatmaps: empty stack");
  const Index H = stack.front().rows(), W = stack.front().cols();
  for (const Grid<float>& ch : stack)
    if (ch.rows() != H || ch.cols() != W)
      throw std::invalid_argument("save_heatmaps: inconsistent channel dimensions");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_heatmaps: cannot open " + path);
  os.write("HMST", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(stack.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(H));
  detail::put_u32(os, static_cast<std::uint32_t>(W));
  for (const Grid<float>& ch : stack)
    for (Index i = 0; i < H; ++i)
      for (Index j = 0; j < W; ++j) detail::put_f32(os, ch(i, j));
  if (!os) throw std::runtime_error("save_heatmaps: write failed for " + path);
}

inline HeatmapStack load_heatmaps(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_heatmaps: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HMST", 4) != 0)
    throw std::runtime_error("load_heatmaps: bad magic in " + path);
  const std::uint32_t channels = detail::get_u32(is);
  const std::uint32_t H = detail::get_u32(is);
  const std::uint32_t W = detail::get_u32(is);
  if (channels == 0 || H == 0 || W == 0)
    throw std::runtime_error("load_heatmaps: degenerate dimensions in " + path);

  HeatmapStack stack(channels);
  for (Grid<float>& ch : stack) {
    ch.resize(static_cast<Index>(H), static_cast<Index>(W));
    for (Index i = 0; i < ch.rows(); ++i)
      for (Index j = 0; j < ch.cols(); ++j) ch(i, j) = detail::get_f32(is);
  }
  if (!is) throw std::runtime_error("load_heatmaps: truncated data in " + path);
  return stack;
}

}  // namespace cseg

#endif
