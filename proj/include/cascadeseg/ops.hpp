#ifndef CASCADESEG_OPS_HPP
#define CASCADESEG_OPS_HPP

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/mask.hpp"
#include "cascadeseg/tensor.hpp"

namespace cseg {

template <typename S>
inline S stable_sigmoid(S x) {
  if (x >= S(0)) {
    const S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

namespace detail {

template <typename S>
using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Geometry of a stride/pad convolution between a dense C x H x W grid and
/// its (out_h x out_w) sliding-window positions.
struct ConvGeom {
  Index channels, height, width;
  Index kernel, stride, pad;
  Index out_h, out_w;

  Index patch_rows() const { return channels * kernel * kernel; }
  Index positions() const { return out_h * out_w; }
};

inline ConvGeom conv_geometry(Index channels, Index height, Index width, Index kernel,
                              Index stride, Index pad, const char* what) {
  if (kernel <= 0 || stride <= 0 || pad < 0)
    throw std::invalid_argument(std::string(what) + ": kernel/stride must be positive, pad >= 0");
  const Index span_h = height + 2 * pad - kernel;
  const Index span_w = width + 2 * pad - kernel;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
    throw std::invalid_argument(std::string(what) +
                                ": kernel/stride/pad do not tile the input exactly");
  return ConvGeom{channels, height, width, kernel, stride, pad,
                  span_h / stride + 1, span_w / stride + 1};
}

/// Unfolds x (flat C x H x W, row-major) into a (C k^2) x positions matrix;
/// out-of-bounds taps read as zero.
template <typename S>
ColMat<S> im2col(const Eigen::Array<S, Eigen::Dynamic, 1>& x, const ConvGeom& g) {
  ColMat<S> cols(g.patch_rows(), g.positions());
  for (Index oi = 0; oi < g.out_h; ++oi) {
    for (Index oj = 0; oj < g.out_w; ++oj) {
      const Index q = oi * g.out_w + oj;
      Index r = 0;
      for (Index c = 0; c < g.channels; ++c) {
        for (Index di = 0; di < g.kernel; ++di) {
          const Index ii = oi * g.stride - g.pad + di;
          for (Index dj = 0; dj < g.kernel; ++dj, ++r) {
            const Index jj = oj * g.stride - g.pad + dj;
            cols(r, q) = (ii >= 0 && ii < g.height && jj >= 0 && jj < g.width)
                             ? x[(c * g.height + ii) * g.width + jj]
                             : S(0);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-adds patch columns back onto the dense grid.
template <typename S>
void col2im_add(const ColMat<S>& cols, const ConvGeom& g,
                Eigen::Array<S, Eigen::Dynamic, 1>& out) {
  for (Index oi = 0; oi < g.out_h; ++oi) {
    for (Index oj = 0; oj < g.out_w; ++oj) {
      const Index q = oi * g.out_w + oj;
      Index r = 0;
      for (Index c = 0; c < g.channels; ++c) {
        for (Index di = 0; di < g.kernel; ++di) {
          const Index ii = oi * g.stride - g.pad + di;
          for (Index dj = 0; dj < g.kernel; ++dj, ++r) {
            const Index jj = oj * g.stride - g.pad + dj;
            if (ii >= 0 && ii < g.height && jj >= 0 && jj < g.width)
              out[(c * g.height + ii) * g.width + jj] += cols(r, q);
          }
        }
      }
    }
  }
}

template <typename S>
bool wants_graph(std::initializer_list<const Tensor<S>*> inputs) {
  if (!autograd_enabled) return false;
  for (const Tensor<S>* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: square-kernel 2-d convolution (cross-correlation) with bias.
// input {C, H, W}, weight {F, C, k, k}, bias {F}. The kernel/stride/pad
// combination must tile the input exactly.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 Index stride, Index pad) {
  using detail::ColMat;
  if (input.rank() != 3 || weight.rank() != 4 || bias.rank() != 1)
    throw std::invalid_argument("conv2d: input must be rank 3, weight rank 4, bias rank 1");
  if (weight.dim(2) != weight.dim(3))
    throw std::invalid_argument("conv2d: kernels must be square");
  if (weight.dim(1) != input.dim(0))
    throw std::invalid_argument("conv2d: weight input channels do not match input");
  if (bias.dim(0) != weight.dim(0))
    throw std::invalid_argument("conv2d: bias size does not match output channels");

  const Index filters = weight.dim(0);
  const auto g = detail::conv_geometry(input.dim(0), input.dim(1), input.dim(2), weight.dim(2),
                                       stride, pad, "conv2d");
  const Index positions = g.positions();

  auto cols = std::make_shared<ColMat<S>>(detail::im2col<S>(input.value(), g));
  Tensor<S> out = Tensor<S>::zeros({filters, g.out_h, g.out_w});
  {
    detail::ConstRowMajorMap<S> w_mat(weight.value().data(), filters, g.patch_rows());
    detail::RowMajorMap<S> out_mat(out.value().data(), filters, positions);
    out_mat.noalias() = w_mat * (*cols);
    out_mat.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        bias.value().data(), filters);
  }

  if (!detail::wants_graph<S>({&input, &weight, &bias})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {input.node(), weight.node(), bias.node()};
  auto in_n = input.node();
  auto w_n = weight.node();
  auto b_n = bias.node();
  out.node()->backprop = [in_n, w_n, b_n, cols, g, filters,
                          positions](typename Tensor<S>::Node& n) {
    detail::ConstRowMajorMap<S> g_out(n.grad.data(), filters, positions);
    if (w_n->requires_grad) {
      Tensor<S>::ensure_grad(*w_n);
      detail::RowMajorMap<S> w_grad(w_n->grad.data(), filters, g.patch_rows());
      w_grad.noalias() += g_out * cols->transpose();
    }
    if (b_n->requires_grad) {
      Tensor<S>::ensure_grad(*b_n);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(b_n->grad.data(), filters) +=
          g_out.rowwise().sum();
    }
    if (in_n->requires_grad) {
      Tensor<S>::ensure_grad(*in_n);
      detail::ConstRowMajorMap<S> w_mat(w_n->value.data(), filters, g.patch_rows());
      detail::ColMat<S> col_grad = w_mat.transpose() * g_out;
      detail::col2im_add<S>(col_grad, g, in_n->grad);
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// conv2d_transpose: stride-s upsampling convolution, the exact adjoint of
// conv2d(stride=s, pad=crop) with a shared weight. input {C, H, W}, weight
// {C, F, k, k}; output {F, s(H-1)+k-2 crop, ...}. No bias.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& input, const Tensor<S>& weight, Index stride,
                           Index crop) {
  using detail::ColMat;
  if (input.rank() != 3 || weight.rank() != 4)
    throw std::invalid_argument("conv2d_transpose: input must be rank 3, weight rank 4");
  if (weight.dim(2) != weight.dim(3))
    throw std::invalid_argument("conv2d_transpose: kernels must be square");
  if (weight.dim(0) != input.dim(0))
    throw std::invalid_argument("conv2d_transpose: weight input channels do not match input");

  const Index filters = weight.dim(1);
  const Index kernel = weight.dim(2);
  const Index out_h = stride * (input.dim(1) - 1) + kernel - 2 * crop;
  const Index out_w = stride * (input.dim(2) - 1) + kernel - 2 * crop;
  if (stride <= 0 || crop < 0 || out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("conv2d_transpose: kernel/stride/crop yield an empty output");
  // Geometry of the adjoint convolution (output grid -> input positions).
  const auto g = detail::conv_geometry(filters, out_h, out_w, kernel, stride, crop,
                                       "conv2d_transpose");
  const Index positions = g.positions();  // == H * W of the input

  Tensor<S> out = Tensor<S>::zeros({filters, out_h, out_w});
  {
    detail::ConstRowMajorMap<S> w_mat(weight.value().data(), input.dim(0), g.patch_rows());
    detail::ConstRowMajorMap<S> in_mat(input.value().data(), input.dim(0), positions);
    ColMat<S> cols = w_mat.transpose() * in_mat;
    detail::col2im_add<S>(cols, g, out.value());
  }

  if (!detail::wants_graph<S>({&input, &weight})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {input.node(), weight.node()};
  auto in_n = input.node();
  auto w_n = weight.node();
  const Index in_channels = input.dim(0);
  out.node()->backprop = [in_n, w_n, g, in_channels, positions](typename Tensor<S>::Node& n) {
    const ColMat<S> g_cols = detail::im2col<S>(n.grad, g);
    if (in_n->requires_grad) {
      Tensor<S>::ensure_grad(*in_n);
      detail::ConstRowMajorMap<S> w_mat(w_n->value.data(), in_channels, g.patch_rows());
      detail::RowMajorMap<S>(in_n->grad.data(), in_channels, positions).noalias() +=
          w_mat * g_cols;
    }
    if (w_n->requires_grad) {
      Tensor<S>::ensure_grad(*w_n);
      detail::ConstRowMajorMap<S> in_mat(in_n->value.data(), in_channels, positions);
      detail::RowMajorMap<S>(w_n->grad.data(), in_channels, g.patch_rows()).noalias() +=
          in_mat * g_cols.transpose();
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2: 2x2 stride-2 max pooling; odd trailing rows/columns pool over the
// clipped window. Ties take the first element in row-major window order.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> maxpool2(const Tensor<S>& input) {
  if (input.rank() != 3) throw std::invalid_argument("maxpool2: input must be rank 3");
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index out_h = (H + 1) / 2, out_w = (W + 1) / 2;

  Tensor<S> out = Tensor<S>::zeros({C, out_h, out_w});
  auto argmax = std::make_shared<std::vector<Index>>(
      static_cast<std::size_t>(C * out_h * out_w));
  const auto& x = input.value();
  for (Index c = 0; c < C; ++c) {
    for (Index oi = 0; oi < out_h; ++oi) {
      for (Index oj = 0; oj < out_w; ++oj) {
        Index best_idx = -1;
        S best{};
        for (Index di = 0; di < 2; ++di) {
          const Index ii = 2 * oi + di;
          if (ii >= H) break;
          for (Index dj = 0; dj < 2; ++dj) {
            const Index jj = 2 * oj + dj;
            if (jj >= W) break;
            const Index idx = (c * H + ii) * W + jj;
            if (best_idx < 0 || x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        const Index o = (c * out_h + oi) * out_w + oj;
        out.value()[o] = best;
        (*argmax)[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }

  if (!detail::wants_graph<S>({&input})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {input.node()};
  auto in_n = input.node();
  out.node()->backprop = [in_n, argmax](typename Tensor<S>::Node& n) {
    if (!in_n->requires_grad) return;
    Tensor<S>::ensure_grad(*in_n);
    for (Index o = 0; o < n.grad.size(); ++o)
      in_n->grad[(*argmax)[static_cast<std::size_t>(o)]] += n.grad[o];
  };
  return out;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& input) {
  Tensor<S> out = Tensor<S>::zeros(input.shape());
  out.value() = input.value().max(S(0));

  if (!detail::wants_graph<S>({&input})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {input.node()};
  auto in_n = input.node();
  out.node()->backprop = [in_n](typename Tensor<S>::Node& n) {
    if (!in_n->requires_grad) return;
    Tensor<S>::ensure_grad(*in_n);
    in_n->grad += (in_n->value > S(0)).template cast<S>() * n.grad;
  };
  return out;
}

// ---------------------------------------------------------------------------
// crop_add: adds the centered crop of `skip` onto `coarse` (skip connection
// fusion). Channel counts must match and skip must be at least as large.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> crop_add(const Tensor<S>& coarse, const Tensor<S>& skip) {
  if (coarse.rank() != 3 || skip.rank() != 3)
    throw std::invalid_argument("crop_add: inputs must be rank 3");
  if (coarse.dim(0) != skip.dim(0))
    throw std::invalid_argument("crop_add: channel counts differ");
  if (skip.dim(1) < coarse.dim(1) || skip.dim(2) < coarse.dim(2))
    throw std::invalid_argument("crop_add: skip tensor smaller than coarse tensor");

  const Index C = coarse.dim(0), h = coarse.dim(1), w = coarse.dim(2);
  const Index sh = skip.dim(1), sw = skip.dim(2);
  const Index oy = (sh - h) / 2, ox = (sw - w) / 2;

  Tensor<S> out = Tensor<S>::zeros({C, h, w});
  for (Index c = 0; c < C; ++c)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        out.value()[(c * h + i) * w + j] =
            coarse.value()[(c * h + i) * w + j] +
            skip.value()[(c * sh + i + oy) * sw + j + ox];

  if (!detail::wants_graph<S>({&coarse, &skip})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {coarse.node(), skip.node()};
  auto c_n = coarse.node();
  auto s_n = skip.node();
  out.node()->backprop = [c_n, s_n, C, h, w, sh, sw, oy, ox](typename Tensor<S>::Node& n) {
    if (c_n->requires_grad) {
      Tensor<S>::ensure_grad(*c_n);
      c_n->grad += n.grad;
    }
    if (s_n->requires_grad) {
      Tensor<S>::ensure_grad(*s_n);
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < h; ++i)
          for (Index j = 0; j < w; ++j)
            s_n->grad[(c * sh + i + oy) * sw + j + ox] += n.grad[(c * h + i) * w + j];
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// sigmoid_ce_loss: per-element sigmoid cross-entropy against soft targets in
// [0,1], summed over all elements, divided by the channel count, and finally
// multiplied by `scale`. Computed from logits in the overflow-safe form
// max(z,0) - z t + log(1 + exp(-|z|)). Targets receive no gradient.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sigmoid_ce_loss(const Tensor<S>& logits, const Tensor<S>& targets, double scale) {
  if (logits.rank() != 3) throw std::invalid_argument("sigmoid_ce_loss: logits must be rank 3");
  if (logits.shape() != targets.shape())
    throw std::invalid_argument("sigmoid_ce_loss: logits/targets shapes differ");
  if (!targets.value().isFinite().all() || (targets.value() < S(0)).any() ||
      (targets.value() > S(1)).any())
    throw std::invalid_argument("sigmoid_ce_loss: targets must lie in [0,1]");

  const Index channels = logits.dim(0);
  const auto& z = logits.value();
  const auto& t = targets.value();
  typename Tensor<S>::Vec ce =
      z.max(S(0)) - z * t + ((-z.abs()).exp() + S(1)).log();
  const S base = ce.sum() / static_cast<S>(channels);

  Tensor<S> out = Tensor<S>::zeros({1});
  out.value()[0] = static_cast<S>(scale) * base;

  if (!detail::wants_graph<S>({&logits})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {logits.node(), targets.node()};
  auto z_n = logits.node();
  auto t_n = targets.node();
  out.node()->backprop = [z_n, t_n, channels, scale](typename Tensor<S>::Node& n) {
    if (!z_n->requires_grad) return;
    Tensor<S>::ensure_grad(*z_n);
    typename Tensor<S>::Vec sig(z_n->value.size());
    for (Index i = 0; i < sig.size(); ++i) sig[i] = stable_sigmoid(z_n->value[i]);
    z_n->grad +=
        (static_cast<S>(scale) * n.grad[0]) * ((sig - t_n->value) / static_cast<S>(channels));
  };
  return out;
}

// ---------------------------------------------------------------------------
// softmax_ce_loss: per-pixel softmax cross-entropy between logits {C, H, W}
// and integer labels, averaged over the H*W pixels.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax_ce_loss(const Tensor<S>& logits, const SegMask& labels) {
  if (logits.rank() != 3) throw std::invalid_argument("softmax_ce_loss: logits must be rank 3");
  const Index C = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  if (labels.height() != H || labels.width() != W)
    throw std::invalid_argument("softmax_ce_loss: label grid does not match logits");

  const auto& z = logits.value();
  auto probs = std::make_shared<typename Tensor<S>::Vec>(z.size());
  auto lab = std::make_shared<Grid<std::uint8_t>>(labels.labels);
  S total = S(0);
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      if (static_cast<Index>((*lab)(i, j)) >= C)
        throw std::invalid_argument("softmax_ce_loss: label out of range");
      S m = z[(0 * H + i) * W + j];
      for (Index c = 1; c < C; ++c) m = std::max(m, z[(c * H + i) * W + j]);
      S sum_exp = S(0);
      for (Index c = 0; c < C; ++c) sum_exp += std::exp(z[(c * H + i) * W + j] - m);
      const S lse = m + std::log(sum_exp);
      for (Index c = 0; c < C; ++c)
        (*probs)[(c * H + i) * W + j] = std::exp(z[(c * H + i) * W + j] - lse);
      total += lse - z[((*lab)(i, j) * H + i) * W + j];
    }
  }

  Tensor<S> out = Tensor<S>::zeros({1});
  out.value()[0] = total / static_cast<S>(H * W);

  if (!detail::wants_graph<S>({&logits})) return out;
  out.node()->requires_grad = true;
  out.node()->parents = {logits.node()};
  auto z_n = logits.node();
  out.node()->backprop = [z_n, probs, lab, C, H, W](typename Tensor<S>::Node& n) {
    if (!z_n->requires_grad) return;
    Tensor<S>::ensure_grad(*z_n);
    const S g = n.grad[0] / static_cast<S>(H * W);
    for (Index c = 0; c < C; ++c)
      for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j) {
          const Index idx = (c * H + i) * W + j;
          const S onehot = (static_cast<Index>((*lab)(i, j)) == c) ? S(1) : S(0);
          z_n->grad[idx] += g * ((*probs)[idx] - onehot);
        }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear interpolation taps for upsampling kernels.
// ---------------------------------------------------------------------------

inline std::vector<double> bilinear_filter(Index k) {
  if (k <= 0) throw std::invalid_argument("bilinear_filter: kernel size must be positive");
  const double factor = static_cast<double>((k + 1) / 2);
  const double center = (k % 2 == 1) ? factor - 1.0 : factor - 0.5;
  std::vector<double> taps(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i)
    taps[static_cast<std::size_t>(i)] = 1.0 - std::abs(static_cast<double>(i) - center) / factor;
  return taps;
}

/// Fills a {C, C, k, k} transposed-convolution weight with per-channel
/// bilinear upsampling kernels (zero across channels).
template <typename S>
inline void fill_bilinear_upsample(Tensor<S>& weight) {
  if (weight.rank() != 4 || weight.dim(0) != weight.dim(1) || weight.dim(2) != weight.dim(3))
    throw std::invalid_argument("fill_bilinear_upsample: weight must be {C, C, k, k}");
  const Index C = weight.dim(0), k = weight.dim(2);
  const auto taps = bilinear_filter(k);
  weight.value().setZero();
  for (Index c = 0; c < C; ++c)
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j)
        weight.value()[((c * C + c) * k + i) * k + j] =
            static_cast<S>(taps[static_cast<std::size_t>(i)] *
                           taps[static_cast<std::size_t>(j)]);
}

}  // namespace cseg

#endif
