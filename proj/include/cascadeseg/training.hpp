#ifndef CASCADESEG_TRAINING_HPP
#define CASCADESEG_TRAINING_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascadeseg/geometry.hpp"
#include "cascadeseg/heatmap.hpp"
#include "cascadeseg/network.hpp"
#include "cascadeseg/noise.hpp"

namespace cseg {

/// One training run. Stages follow the coarse-to-fine schedule: an optional
/// warm-up where only conv1_1 learns (used after widening the first layer),
/// then the three resolution stages split by `stage_fractions`. Setting the
/// fractions to {0, 0, 1} trains with both skips active throughout.
struct TrainConfig {
  long iterations = 1000;
  double lr = 1e-4;
  double momentum = 0.9;
  double loss_scale = 1e-5;  // sigmoid loss only
  double sigma = 5.0;        // guidance / target heatmap width, in input pixels
  double occlusion_prob = 0.5;
  long warmup_iterations = 0;
  double warmup_lr = 0.0;  // 0 -> use lr; the warmup phase trains one layer,
                           // which tolerates (and usually needs) larger steps
  std::array<double, 3> stage_fractions = {0.4, 0.3, 0.3};
  std::uint64_t seed = 1;
  double divergence_threshold = 1e6;
  std::string loss_csv;  // per-iteration "iteration,stage,loss" rows when set

  /// Called with the landmarks actually encoded as guidance each step
  /// (guided training only); lets callers audit the perturbation.
  std::function<void(long, const LandmarkSet&)> guidance_observer;
};

namespace detail {

enum class TrainPhase { warmup, stride32, stride16, stride8 };

inline const char* phase_name(TrainPhase p) {
  switch (p) {
    case TrainPhase::warmup: return "warmup";
    case TrainPhase::stride32: return "stride32";
    case TrainPhase::stride16: return "stride16";
    default: return "stride8";
  }
}

inline StageSet phase_stages(TrainPhase p) {
  switch (p) {
    case TrainPhase::stride32: return kStageStride32;
    case TrainPhase::stride16: return kStageStride16;
    default: return kStageStride8;  // warm-up runs the full architecture
  }
}

/// Iteration boundaries of the phases given the config.
struct PhasePlan {
  long warmup_end, stride32_end, stride16_end;

  static PhasePlan make(const TrainConfig& cfg) {
    if (cfg.iterations < 0 || cfg.warmup_iterations < 0 ||
        cfg.warmup_iterations > cfg.iterations)
      throw std::invalid_argument("TrainConfig: bad iteration budget");
    if (cfg.warmup_lr < 0.0) throw std::invalid_argument("TrainConfig: negative warmup lr");
    double sum = 0.0;
    for (double f : cfg.stage_fractions) {
      if (f < 0.0) throw std::invalid_argument("TrainConfig: negative stage fraction");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("TrainConfig: stage fractions must sum to 1");
    const long rest = cfg.iterations - cfg.warmup_iterations;
    PhasePlan p;
    p.warmup_end = cfg.warmup_iterations;
    p.stride32_end = p.warmup_end + std::lround(cfg.stage_fractions[0] * rest);
    p.stride16_end = p.stride32_end + std::lround(cfg.stage_fractions[1] * rest);
    return p;
  }

  TrainPhase at(long it) const {
    if (it < warmup_end) return TrainPhase::warmup;
    if (it < stride32_end) return TrainPhase::stride32;
    if (it < stride16_end) return TrainPhase::stride16;
    return TrainPhase::stride8;
  }
};

/// Sets the trainable flags (and gradient tracking) for a phase. Frozen skip
/// scores in the coarse stages never enter the graph, so leaving them
/// trainable would trip the missing-gradient check in the optimizer.
template <typename S>
void apply_phase(Fcn<S>& net, TrainPhase phase) {
  auto flag = [&net](const std::string& pattern, bool on) {
    for (auto& p : net.params)
      if (p.name.find(pattern) != std::string::npos) {
        p.trainable = on;
        p.tensor.node()->requires_grad = on;
      }
  };
  switch (phase) {
    case TrainPhase::warmup:
      flag("", false);
      flag("conv1_1", true);
      break;
    case TrainPhase::stride32:
      flag("", true);
      flag("score_pool4", false);
      flag("score_pool3", false);
      break;
    case TrainPhase::stride16:
      flag("", true);
      flag("score_pool3", false);
      break;
    case TrainPhase::stride8:
      flag("", true);
      break;
  }
}

/// Shared loop: epoch-shuffled sample order, phase schedule, one SGD step per
/// iteration, divergence detection, per-iteration loss logging. `step` builds
/// the loss tensor for one sample under the given stage set.
template <typename S, typename StepFn>
std::vector<double> run_training(Fcn<S>& net, std::size_t num_samples, const TrainConfig& cfg,
                                 const char* task, StepFn step) {
  if (num_samples == 0) throw std::invalid_argument(std::string(task) + ": no training samples");
  const PhasePlan plan = PhasePlan::make(cfg);

  Rng master(cfg.seed);
  Rng rng_order(child_seed(master));
  Rng rng_aug(child_seed(master));
  Rng rng_noise(child_seed(master));

  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    csv.open(cfg.loss_csv);
    if (!csv) throw std::runtime_error(std::string(task) + ": cannot open " + cfg.loss_csv);
    csv << "iteration,stage,loss\n";
  }

  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.iterations));
  TrainPhase current = TrainPhase::stride8;
  bool phase_set = false;

  for (long it = 0; it < cfg.iterations; ++it) {
    if (it % static_cast<long>(num_samples) == 0)
      std::shuffle(order.begin(), order.end(), rng_order);
    const TrainPhase phase = plan.at(it);
    if (!phase_set || phase != current) {
      apply_phase(net, phase);
      current = phase;
      phase_set = true;
    }

    const std::size_t sample =
        order[static_cast<std::size_t>(it % static_cast<long>(num_samples))];
    Tensor<S> loss = step(it, sample, phase_stages(phase), rng_aug, rng_noise);
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value) || value > cfg.divergence_threshold)
      throw std::runtime_error(std::string(task) + ": loss diverged at iteration " +
                               std::to_string(it) + " (loss " + std::to_string(value) + ")");
    loss.backward();
    const double lr =
        (phase == TrainPhase::warmup && cfg.warmup_lr > 0.0) ? cfg.warmup_lr : cfg.lr;
    sgd_momentum_step(net.params, lr, cfg.momentum);

    history.push_back(value);
    if (csv.is_open()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.8g", value);
      csv << it << ',' << phase_name(phase) << ',' << buf << '\n';
    }
  }
  // Leave the network fully trainable and tracked for whoever uses it next.
  apply_phase(net, TrainPhase::stride8);
  return history;
}

}  // namespace detail

/// Trains the landmark detector: 68 heatmap channels against Gaussian targets
/// rendered from the ground-truth landmarks, sigmoid cross-entropy scaled by
/// cfg.loss_scale.
template <typename S>
std::vector<double> train_landmark_detector(Fcn<S>& net, const std::vector<FaceSample>& data,
                                            const TrainConfig& cfg) {
  if (net.config.input_channels != 3 || net.config.output_channels != kNumLandmarks)
    throw std::invalid_argument("train_landmark_detector: network must map 3 channels to 68");
  return detail::run_training(
      net, data.size(), cfg, "train_landmark_detector",
      [&](long, std::size_t idx, StageSet stages, Rng& rng_aug, Rng&) {
        const FaceSample& s = data[idx];
        const ImageRgb img = occlusion_augment(s.image, s.mask, cfg.occlusion_prob, rng_aug);
        const Tensor<S> input = image_tensor(img).template cast_to<S>();
        const Tensor<S> targets =
            heatmaps_tensor(
                encode_heatmaps(s.landmarks, img.height(), img.width(), cfg.sigma))
                .template cast_to<S>();
        Tensor<S> logits = forward(net, input, stages);
        return sigmoid_ce_loss(logits, targets, cfg.loss_scale);
      });
}

/// Trains the plain segmenter: RGB in, per-pixel softmax cross-entropy
/// against the label mask.
template <typename S>
std::vector<double> train_segmenter(Fcn<S>& net, const std::vector<FaceSample>& data,
                                    const TrainConfig& cfg) {
  if (net.config.input_channels != 3 || net.config.output_channels != kNumClasses)
    throw std::invalid_argument("train_segmenter: network must map 3 channels to 8 classes");
  return detail::run_training(
      net, data.size(), cfg, "train_segmenter",
      [&](long, std::size_t idx, StageSet stages, Rng& rng_aug, Rng&) {
        const FaceSample& s = data[idx];
        const ImageRgb img = occlusion_augment(s.image, s.mask, cfg.occlusion_prob, rng_aug);
        const Tensor<S> input = image_tensor(img).template cast_to<S>();
        Tensor<S> logits = forward(net, input, stages);
        return softmax_ce_loss(logits, s.mask);
      });
}

/// Trains the guided segmenter. Every step re-draws plausible detector noise
/// for the sample's landmarks and encodes the perturbed landmarks as the 68
/// guidance channels, so the network never sees exact ground-truth guidance.
template <typename S>
std::vector<double> train_guided_segmenter(Fcn<S>& net, const std::vector<FaceSample>& data,
                                           const NoiseModel& noise, const TrainConfig& cfg) {
  if (net.config.input_channels != 3 + kNumLandmarks ||
      net.config.output_channels != kNumClasses)
    throw std::invalid_argument(
        "train_guided_segmenter: network must map 3+68 channels to 8 classes");
  return detail::run_training(
      net, data.size(), cfg, "train_guided_segmenter",
      [&](long it, std::size_t idx, StageSet stages, Rng& rng_aug, Rng& rng_noise) {
        const FaceSample& s = data[idx];
        const ImageRgb img = occlusion_augment(s.image, s.mask, cfg.occlusion_prob, rng_aug);
        const LandmarkSet guide = perturb_landmarks(s.landmarks, noise, rng_noise);
        if (cfg.guidance_observer) cfg.guidance_observer(it, guide);
        const Tensor<S> input =
            stack_input(img, encode_heatmaps(guide, img.height(), img.width(), cfg.sigma))
                .template cast_to<S>();
        Tensor<S> logits = forward(net, input, stages);
        return softmax_ce_loss(logits, s.mask);
      });
}

}  // namespace cseg

#endif
