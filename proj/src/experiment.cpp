#include "cascadeseg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "cascadeseg/checkpoint.hpp"
#include "cascadeseg/dataset.hpp"
#include "cascadeseg/geometry.hpp"
#include "cascadeseg/noise.hpp"
#include "cascadeseg/synth.hpp"
#include "cascadeseg/training.hpp"

namespace cseg {

namespace fs = std::filesystem;

namespace {

/// All experiment knobs with their defaults; every one can be overridden from
/// the config file.
struct ExperimentSettings {
  long train_count, test_count;
  double val_fraction;
  Index canvas_size, face_height, square_size;
  double sigma, eyebrow_width_frac, crop_jitter;
  double deform_amplitude, texture_noise, palette_jitter;
  double occlusion_prob, eval_occlusion_prob, momentum, divergence_threshold;
  long lm_iterations;
  double lm_lr, lm_loss_scale;
  long seg_iterations, seg_extra_iterations;
  double seg_lr;
  long guided_warmup, guided_iterations;
  double guided_lr, guided_warmup_lr;

  static ExperimentSettings from_config(const Config& cfg) {
    ExperimentSettings s;
    s.train_count = cfg.integer("train_count", 200);
    s.test_count = cfg.integer("test_count", 50);
    s.val_fraction = cfg.real("val_fraction", 0.1);
    s.canvas_size = cfg.integer("canvas_size", 96);
    s.face_height = cfg.integer("face_height", 48);
    s.square_size = cfg.integer("square_size", 64);
    s.sigma = cfg.real("sigma", 2.0);
    s.eyebrow_width_frac = cfg.real("eyebrow_width_frac", kEyebrowWidthFrac);
    s.crop_jitter = cfg.real("crop_jitter", 0.2);
    s.deform_amplitude = cfg.real("deform_amplitude", 1.0);
    s.texture_noise = cfg.real("texture_noise", 0.04);
    s.palette_jitter = cfg.real("palette_jitter", 0.03);
    s.occlusion_prob = cfg.real("occlusion_prob", 0.5);
    s.eval_occlusion_prob = cfg.real("eval_occlusion_prob", 0.5);
    s.momentum = cfg.real("momentum", 0.9);
    s.divergence_threshold = cfg.real("divergence_threshold", 1e6);
    s.lm_iterations = cfg.integer("lm_iterations", 2500);
    s.lm_lr = cfg.real("lm_lr", 0.02);
    const double pixels = static_cast<double>(s.square_size) * s.square_size;
    s.lm_loss_scale = cfg.real("lm_loss_scale", 1.0 / pixels);
    s.seg_iterations = cfg.integer("seg_iterations", 2000);
    s.seg_extra_iterations = cfg.integer("seg_extra_iterations", 1500);
    s.seg_lr = cfg.real("seg_lr", 0.02);
    s.guided_warmup = cfg.integer("guided_warmup", 300);
    s.guided_iterations = cfg.integer("guided_iterations", 1500);
    s.guided_lr = cfg.real("guided_lr", s.seg_lr);
    s.guided_warmup_lr = cfg.real("guided_warmup_lr", s.guided_lr);

    if (s.train_count < 2 || s.test_count < 1)
      throw std::invalid_argument("experiment: need at least 2 train and 1 test samples");
    if (!(s.val_fraction > 0.0 && s.val_fraction < 1.0))
      throw std::invalid_argument("experiment: val_fraction must lie in (0,1)");
    if (s.square_size % 8 != 0)
      throw std::invalid_argument("experiment: square_size must divide the pooling factor");
    return s;
  }
};

std::vector<FaceSample> make_split(const ExperimentSettings& s, long count,
                                   std::uint64_t synth_seed, std::uint64_t prep_seed) {
  SynthParams params;
  params.canvas_size = s.canvas_size;
  params.deform_amplitude = s.deform_amplitude;
  params.texture_noise = s.texture_noise;
  params.palette_jitter = s.palette_jitter;
  params.eyebrow_width_frac = s.eyebrow_width_frac;

  Rng synth_rng(synth_seed);
  Rng prep_rng(prep_seed);
  std::vector<FaceSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    const FaceSample canvas = synth_face(params, synth_rng);
    out.push_back(prepare_sample(canvas.image, canvas.landmarks, s.face_height, s.crop_jitter,
                                 s.square_size, prep_rng, s.eyebrow_width_frac));
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

MethodComparison evaluate_methods(Fcn<float>& lm_net, Fcn<float>& unguided_net,
                                  Fcn<float>& guided_net, const std::vector<FaceSample>& samples,
                                  double sigma, double eyebrow_width_frac, int threads,
                                  double* mean_lm_error) {
  if (samples.empty()) throw std::invalid_argument("evaluate_methods: no samples");
  std::vector<IoUReport> r_unguided(samples.size()), r_connected(samples.size()),
      r_guided_det(samples.size()), r_guided_gt(samples.size());
  std::vector<double> lm_errors(samples.size());
  parallel_for(static_cast<Index>(samples.size()), threads, [&](Index i) {
    const FaceSample& t = samples[static_cast<std::size_t>(i)];
    const auto ui = static_cast<std::size_t>(i);
    const SegMask pred_unguided = predict_mask(unguided_net, t.image);
    const LandmarkSet detected = predict_landmarks(lm_net, t.image);
    const SegMask pred_connected =
        connected_landmarks_mask(detected, t.image.width(), t.image.height(), eyebrow_width_frac);
    const SegMask pred_guided_det = predict_guided(guided_net, t.image, detected, sigma);
    const SegMask pred_guided_gt = predict_guided(guided_net, t.image, t.landmarks, sigma);
    r_unguided[ui] = iou_per_class(pred_unguided, t.mask);
    r_connected[ui] = iou_per_class(pred_connected, t.mask);
    r_guided_det[ui] = iou_per_class(pred_guided_det, t.mask);
    r_guided_gt[ui] = iou_per_class(pred_guided_gt, t.mask);
    lm_errors[ui] = landmark_error(detected, t.landmarks);
  });

  if (mean_lm_error) {
    double sum = 0.0;
    for (double e : lm_errors) sum += e;
    *mean_lm_error = sum / static_cast<double>(lm_errors.size());
  }

  std::map<std::string, std::vector<IoUReport>> per_method;
  per_method["unguided"] = std::move(r_unguided);
  per_method["connected_landmarks"] = std::move(r_connected);
  per_method["guided_detected"] = std::move(r_guided_det);
  per_method["guided_gt"] = std::move(r_guided_gt);
  return compare_methods(per_method);
}

ExperimentResult run_experiment(const Config& cfg, const std::string& out_dir,
                                std::uint64_t seed, bool deterministic) {
  const ExperimentSettings s = ExperimentSettings::from_config(cfg);
  fs::create_directories(fs::path(out_dir) / "checkpoints");
  fs::create_directories(fs::path(out_dir) / "logs");
  fs::create_directories(fs::path(out_dir) / "results");
  const auto out_path = [&out_dir](const std::string& rel) {
    return (fs::path(out_dir) / rel).string();
  };

  // Every stage gets its own stream, all derived from the master seed in a
  // fixed order so budget changes in one stage cannot shift another.
  Rng master(seed);
  const std::uint64_t seed_synth_train = child_seed(master);
  const std::uint64_t seed_prep_train = child_seed(master);
  const std::uint64_t seed_synth_test = child_seed(master);
  const std::uint64_t seed_prep_test = child_seed(master);
  const std::uint64_t seed_split = child_seed(master);
  const std::uint64_t seed_lm_init = child_seed(master);
  const std::uint64_t seed_lm_train = child_seed(master);
  const std::uint64_t seed_seg_init = child_seed(master);
  const std::uint64_t seed_seg_train = child_seed(master);
  const std::uint64_t seed_seg_extra = child_seed(master);
  const std::uint64_t seed_guided_train = child_seed(master);
  const std::uint64_t seed_eval_occ = child_seed(master);

  const std::vector<FaceSample> pool =
      make_split(s, s.train_count, seed_synth_train, seed_prep_train);
  std::vector<FaceSample> test = make_split(s, s.test_count, seed_synth_test, seed_prep_test);

  // Evaluation-time occlusions: appearance disappears under the occluder
  // while the labels stay, so part identity there is recoverable only from
  // layout. The same corruption hits the validation slice below, keeping the
  // fitted noise model representative of the detector's deployment error.
  Rng eval_occ_rng(seed_eval_occ);
  for (FaceSample& t : test)
    t.image = occlusion_augment(t.image, t.mask, s.eval_occlusion_prob, eval_occ_rng);

  // Hold out a validation slice used only for fitting the detector noise
  // model; the trainers never see it.
  std::vector<std::size_t> indices(pool.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng split_rng(seed_split);
  std::shuffle(indices.begin(), indices.end(), split_rng);
  const std::size_t val_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(s.val_fraction * static_cast<double>(pool.size()))));
  if (val_count >= pool.size())
    throw std::invalid_argument("experiment: validation split swallows the training pool");
  std::vector<std::size_t> val_idx(indices.begin(),
                                   indices.begin() + static_cast<long>(val_count));
  std::vector<std::size_t> train_idx(indices.begin() + static_cast<long>(val_count),
                                     indices.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (std::size_t v : val_idx)
    if (std::binary_search(train_idx.begin(), train_idx.end(), v))
      throw std::logic_error("experiment: train/validation overlap");

  std::vector<FaceSample> train;
  train.reserve(train_idx.size());
  for (std::size_t i : train_idx) train.push_back(pool[i]);
  std::vector<FaceSample> val;
  val.reserve(val_idx.size());
  for (std::size_t i : val_idx) val.push_back(pool[i]);

  ExperimentResult result;
  result.train_size = train.size();
  result.val_size = val.size();
  result.test_size = test.size();

  // 1. Landmark detector.
  Rng lm_init_rng(seed_lm_init);
  Fcn<float> lm_net = build_fcn<float>(FcnConfig::mini(3, kNumLandmarks), lm_init_rng);
  {
    TrainConfig tc;
    tc.iterations = s.lm_iterations;
    tc.lr = s.lm_lr;
    tc.momentum = s.momentum;
    tc.loss_scale = s.lm_loss_scale;
    tc.sigma = s.sigma;
    tc.occlusion_prob = s.occlusion_prob;
    tc.seed = seed_lm_train;
    tc.divergence_threshold = s.divergence_threshold;
    tc.loss_csv = out_path("logs/loss_landmarks.csv");
    result.landmark_loss = train_landmark_detector(lm_net, train, tc);
  }
  save_checkpoint(out_path("checkpoints/landmarks.cseg"), lm_net.params);

  // 2. Plain segmenter. The staged base training is snapshotted as the
  // starting point of the guided network, then the baseline continues for the
  // same number of extra iterations the guided network will get, so both see
  // equal optimization budgets.
  Rng seg_init_rng(seed_seg_init);
  Fcn<float> unguided_net = build_fcn<float>(FcnConfig::mini(3, kNumClasses), seg_init_rng);
  {
    TrainConfig tc;
    tc.iterations = s.seg_iterations;
    tc.lr = s.seg_lr;
    tc.momentum = s.momentum;
    tc.occlusion_prob = s.occlusion_prob;
    tc.seed = seed_seg_train;
    tc.divergence_threshold = s.divergence_threshold;
    tc.loss_csv = out_path("logs/loss_unguided.csv");
    result.unguided_loss = train_segmenter(unguided_net, train, tc);
  }
  Fcn<float> guided_base = clone_network(unguided_net);
  {
    TrainConfig tc;
    tc.iterations = s.seg_extra_iterations;
    tc.lr = s.seg_lr;
    tc.momentum = s.momentum;
    tc.occlusion_prob = s.occlusion_prob;
    tc.stage_fractions = {0.0, 0.0, 1.0};
    tc.seed = seed_seg_extra;
    tc.divergence_threshold = s.divergence_threshold;
    tc.loss_csv = out_path("logs/loss_unguided_extra.csv");
    const auto extra = train_segmenter(unguided_net, train, tc);
    result.unguided_loss.insert(result.unguided_loss.end(), extra.begin(), extra.end());
  }
  save_checkpoint(out_path("checkpoints/unguided.cseg"), unguided_net.params);

  // 3. Detector noise model from the held-out pairs, measured under the same
  // occlusion the detector will face at evaluation time.
  std::vector<std::pair<LandmarkSet, LandmarkSet>> pairs;
  pairs.reserve(val.size());
  for (const FaceSample& v : val) {
    const ImageRgb seen = occlusion_augment(v.image, v.mask, s.eval_occlusion_prob, eval_occ_rng);
    pairs.emplace_back(v.landmarks, predict_landmarks(lm_net, seen));
  }
  const NoiseModel noise = fit_noise_model(pairs);
  save_noise_model(out_path("results/noise_model.txt"), noise);

  // 4. Guided segmenter: widen the snapshot's first layer, warm it up, then
  // fine-tune everything with perturbed-landmark guidance.
  Fcn<float> guided_net = expand_first_layer(guided_base);
  {
    TrainConfig tc;
    tc.iterations = s.guided_warmup + s.guided_iterations;
    tc.warmup_iterations = s.guided_warmup;
    tc.lr = s.guided_lr;
    tc.warmup_lr = s.guided_warmup_lr;
    tc.momentum = s.momentum;
    tc.sigma = s.sigma;
    tc.occlusion_prob = s.occlusion_prob;
    tc.stage_fractions = {0.0, 0.0, 1.0};
    tc.seed = seed_guided_train;
    tc.divergence_threshold = s.divergence_threshold;
    tc.loss_csv = out_path("logs/loss_guided.csv");
    result.guided_loss = train_guided_segmenter(guided_net, train, noise, tc);
  }
  save_checkpoint(out_path("checkpoints/guided.cseg"), guided_net.params);

  // 5. Four-way evaluation on the untouched test split.
  result.comparison =
      evaluate_methods(lm_net, unguided_net, guided_net, test, s.sigma, s.eyebrow_width_frac,
                       worker_threads(deterministic), &result.detector_mean_error);
  write_comparison_csv(out_path("results/comparison.csv"), result.comparison);

  // 6. Manifest: everything needed to reproduce or audit the run.
  {
    std::ofstream mf(out_path("run_manifest.txt"));
    if (!mf) throw std::runtime_error("experiment: cannot write run manifest");
    mf << "seed = " << seed << "\n";
    mf << "deterministic = " << (deterministic ? "true" : "false") << "\n";
    mf << "config_hash = " << hex64(cfg.hash()) << "\n";
    mf << "train_size = " << result.train_size << "\n";
    mf << "val_size = " << result.val_size << "\n";
    mf << "test_size = " << result.test_size << "\n";
    mf << "val_indices =";
    for (std::size_t v : val_idx) mf << ' ' << v;
    mf << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", result.detector_mean_error);
    mf << "detector_mean_error = " << buf << "\n";
    for (const auto& name : method_names()) {
      std::snprintf(buf, sizeof(buf), "%.6f", result.comparison.rows.at(name).overall);
      mf << "mean_iou_" << name << " = " << buf << "\n";
    }
  }
  return result;
}

}  // namespace cseg
