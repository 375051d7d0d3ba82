#ifndef CASCADESEG_EXPERIMENT_HPP
#define CASCADESEG_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cascadeseg/config.hpp"
#include "cascadeseg/geometry.hpp"
#include "cascadeseg/heatmap.hpp"
#include "cascadeseg/metrics.hpp"
#include "cascadeseg/network.hpp"

namespace cseg {

/// Argmax over the channel axis; ties go to the lowest class index.
template <typename S>
SegMask logits_to_mask(const Tensor<S>& logits) {
  if (logits.rank() != 3) throw std::invalid_argument("logits_to_mask: logits must be rank 3");
  const Index C = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  if (C > 256) throw std::invalid_argument("logits_to_mask: too many channels for a label mask");
  SegMask mask(H, W);
  for (Index i = 0; i < H; ++i)
    for (Index j = 0; j < W; ++j) {
      Index best = 0;
      S best_v = logits.value()[(0 * H + i) * W + j];
      for (Index c = 1; c < C; ++c) {
        const S v = logits.value()[(c * H + i) * W + j];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      mask.labels(i, j) = static_cast<std::uint8_t>(best);
    }
  return mask;
}

/// Plain segmentation: RGB in, argmax class mask out.
template <typename S>
SegMask predict_mask(Fcn<S>& net, const ImageRgb& image) {
  NoGradGuard guard;
  return logits_to_mask(forward(net, image_tensor(image).template cast_to<S>(), kStageStride8));
}

/// Landmark detection: heatmap forward pass, then per-channel peak picking.
template <typename S>
LandmarkSet predict_landmarks(Fcn<S>& net, const ImageRgb& image,
                              DecodeReport* report = nullptr) {
  NoGradGuard guard;
  const Tensor<S> logits =
      forward(net, image_tensor(image).template cast_to<S>(), kStageStride8);
  return decode_heatmaps(tensor_heatmaps(logits), report);
}

/// Guided segmentation: the image is stacked with Gaussian guidance channels
/// rendered from the given landmarks (detected or ground truth).
template <typename S>
SegMask predict_guided(Fcn<S>& net, const ImageRgb& image, const LandmarkSet& guidance,
                       double sigma) {
  NoGradGuard guard;
  const Tensor<S> input =
      stack_input(image, encode_heatmaps(guidance, image.height(), image.width(), sigma))
          .template cast_to<S>();
  return logits_to_mask(forward(net, input, kStageStride8));
}

/// The geometric baseline: paint the part polygons of the detected landmarks
/// directly as the predicted mask.
inline SegMask connected_landmarks_mask(const LandmarkSet& lm, Index width, Index height,
                                        double eyebrow_width_frac = kEyebrowWidthFrac) {
  return landmarks_to_mask(lm, width, height, eyebrow_width_frac);
}

/// Runs all four methods over a labeled set and aggregates their IoU.
/// `mean_lm_error` (optional) receives the detector's mean normalized
/// landmark error over the set.
MethodComparison evaluate_methods(Fcn<float>& lm_net, Fcn<float>& unguided_net,
                                  Fcn<float>& guided_net, const std::vector<FaceSample>& samples,
                                  double sigma, double eyebrow_width_frac, int threads,
                                  double* mean_lm_error = nullptr);

/// End-to-end comparison run: synthesize data, train the landmark detector
/// and both segmenters, fit the detector noise model on held-out pairs, and
/// evaluate the four methods on the test split.
struct ExperimentResult {
  MethodComparison comparison;
  double detector_mean_error = 0.0;  // normalized landmark error on the test split
  std::size_t train_size = 0, val_size = 0, test_size = 0;
  std::vector<double> landmark_loss, unguided_loss, guided_loss;
};

ExperimentResult run_experiment(const Config& cfg, const std::string& out_dir,
                                std::uint64_t seed, bool deterministic);

}  // namespace cseg

#endif
