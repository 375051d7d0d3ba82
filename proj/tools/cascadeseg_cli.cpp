// Command-line front end for the cascade: dataset synthesis, the three
// training stages, noise fitting, four-way evaluation, and the end-to-end
// experiment. Every subcommand reads its knobs from an optional key=value
// config file plus --set overrides, so runs are reproducible from a seed and
// a config hash alone.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cascadeseg/checkpoint.hpp"
#include "cascadeseg/config.hpp"
#include "cascadeseg/dataset.hpp"
#include "cascadeseg/experiment.hpp"
#include "cascadeseg/noise.hpp"
#include "cascadeseg/pngio.hpp"
#include "cascadeseg/synth.hpp"
#include "cascadeseg/training.hpp"

namespace fs = std::filesystem;
using namespace cseg;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--set", args.overrides, "inline config override, key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "master random seed");
  cmd->add_flag("--deterministic", args.deterministic,
                "single-threaded evaluation for bit-stable outputs");
}

Config resolve_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::load(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

FcnConfig model_config(const Config& cfg, int in_ch, int out_ch) {
  const std::string model = cfg.str("model", "mini");
  if (model == "mini") return FcnConfig::mini(in_ch, out_ch);
  if (model == "full") return FcnConfig::full(in_ch, out_ch);
  throw std::invalid_argument("model must be 'mini' or 'full', got '" + model + "'");
}

std::array<double, 3> parse_fractions(std::string text) {
  for (char& c : text)
    if (c == ',') c = ' ';
  std::istringstream ss(text);
  std::array<double, 3> f{};
  if (!(ss >> f[0] >> f[1] >> f[2]))
    throw std::invalid_argument("stage_fractions needs three numbers, got '" + text + "'");
  std::string rest;
  if (ss >> rest)
    throw std::invalid_argument("stage_fractions needs exactly three numbers, got '" + text +
                                "'");
  return f;
}

/// Fills the knobs shared by all training subcommands.
TrainConfig train_config(const Config& cfg, std::uint64_t seed, const std::string& loss_csv,
                         long default_iterations, double default_lr,
                         const std::array<double, 3>& default_fractions) {
  TrainConfig tc;
  tc.iterations = cfg.integer("iterations", default_iterations);
  tc.lr = cfg.real("lr", default_lr);
  tc.momentum = cfg.real("momentum", 0.9);
  tc.occlusion_prob = cfg.real("occlusion_prob", 0.5);
  tc.warmup_iterations = cfg.integer("warmup_iterations", 0);
  tc.stage_fractions =
      cfg.has("stage_fractions")
          ? parse_fractions(cfg.str("stage_fractions", ""))
          : default_fractions;
  tc.seed = seed;
  tc.divergence_threshold = cfg.real("divergence_threshold", 1e6);
  tc.loss_csv = loss_csv;
  return tc;
}

/// Loads a directory of samples for training/evaluation. Ground-truth masks
/// come from `<stem>_mask.png` when present, otherwise they are rendered from
/// the landmarks.
std::vector<FaceSample> load_face_samples(const std::string& dir, double eyebrow_width_frac) {
  const std::vector<RawSample> raw = load_dataset(dir);
  std::vector<FaceSample> out;
  out.reserve(raw.size());
  for (const RawSample& r : raw) {
    FaceSample s;
    s.image = r.image;
    s.landmarks = r.landmarks;
    const fs::path mask_path = fs::path(dir) / (r.stem + "_mask.png");
    if (fs::exists(mask_path))
      s.mask = load_mask_png(mask_path.string());
    else
      s.mask = landmarks_to_mask(r.landmarks, r.image.width(), r.image.height(),
                                 eyebrow_width_frac);
    out.push_back(std::move(s));
  }
  return out;
}

double data_sigma(const Config& cfg, const std::vector<FaceSample>& data) {
  return cfg.real("sigma", default_sigma(data.front().image.height()));
}

void report_losses(const char* task, const std::vector<double>& losses) {
  if (losses.empty()) {
    std::printf("%s: 0 iterations\n", task);
    return;
  }
  std::printf("%s: %zu iterations, loss %.6g -> %.6g\n", task, losses.size(), losses.front(),
              losses.back());
}

int cmd_synth(const CommonArgs& common, const std::string& out_dir, long count, bool vis) {
  const Config cfg = resolve_config(common);
  SynthParams params;
  params.canvas_size = cfg.integer("canvas_size", 96);
  params.deform_amplitude = cfg.real("deform_amplitude", 1.0);
  params.texture_noise = cfg.real("texture_noise", 0.04);
  params.palette_jitter = cfg.real("palette_jitter", 0.03);
  params.eyebrow_width_frac = cfg.real("eyebrow_width_frac", kEyebrowWidthFrac);
  const Index face_height = cfg.integer("face_height", 48);
  const Index square_size = cfg.integer("square_size", 64);
  const double crop_jitter = cfg.real("crop_jitter", 0.0);
  const bool prepare = cfg.flag("prepare", true);

  fs::create_directories(out_dir);
  Rng master(common.seed);
  Rng synth_rng(child_seed(master));
  Rng prep_rng(child_seed(master));
  for (long i = 0; i < count; ++i) {
    FaceSample sample = synth_face(params, synth_rng);
    if (prepare)
      sample = prepare_sample(sample.image, sample.landmarks, face_height, crop_jitter,
                              square_size, prep_rng, params.eyebrow_width_frac);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "face_%04ld", i);
    save_dataset_entry(out_dir, stem, sample, vis);
  }
  std::printf("wrote %ld samples to %s\n", count, out_dir.c_str());
  return 0;
}

int cmd_train_landmarks(const CommonArgs& common, const std::string& data_dir,
                        const std::string& out_path, const std::string& init_path,
                        const std::string& loss_csv) {
  const Config cfg = resolve_config(common);
  const std::vector<FaceSample> data =
      load_face_samples(data_dir, cfg.real("eyebrow_width_frac", kEyebrowWidthFrac));

  Rng master(common.seed);
  const std::uint64_t init_seed = child_seed(master);
  const std::uint64_t train_seed = child_seed(master);
  Rng init_rng(init_seed);
  Fcn<float> net = build_fcn<float>(model_config(cfg, 3, kNumLandmarks), init_rng);
  if (!init_path.empty()) load_checkpoint(init_path, net.params);

  TrainConfig tc = train_config(cfg, train_seed, loss_csv, 2500, 0.02, {0.4, 0.3, 0.3});
  tc.sigma = data_sigma(cfg, data);
  const double pixels = static_cast<double>(data.front().image.height()) *
                        static_cast<double>(data.front().image.width());
  tc.loss_scale = cfg.real("loss_scale", 1.0 / pixels);
  const auto losses = train_landmark_detector(net, data, tc);
  save_checkpoint(out_path, net.params);
  report_losses("train-landmarks", losses);
  std::printf("saved %s\n", out_path.c_str());
  return 0;
}

int cmd_train_unguided(const CommonArgs& common, const std::string& data_dir,
                       const std::string& out_path, const std::string& init_path,
                       const std::string& loss_csv) {
  const Config cfg = resolve_config(common);
  const std::vector<FaceSample> data =
      load_face_samples(data_dir, cfg.real("eyebrow_width_frac", kEyebrowWidthFrac));

  Rng master(common.seed);
  const std::uint64_t init_seed = child_seed(master);
  const std::uint64_t train_seed = child_seed(master);
  Rng init_rng(init_seed);
  Fcn<float> net = build_fcn<float>(model_config(cfg, 3, kNumClasses), init_rng);
  // Continuing from a checkpoint defaults to the final stage; fresh nets get
  // the full coarse-to-fine schedule.
  const std::array<double, 3> fractions =
      init_path.empty() ? std::array<double, 3>{0.4, 0.3, 0.3}
                        : std::array<double, 3>{0.0, 0.0, 1.0};
  if (!init_path.empty()) load_checkpoint(init_path, net.params);

  const TrainConfig tc = train_config(cfg, train_seed, loss_csv, 2000, 0.02, fractions);
  const auto losses = train_segmenter(net, data, tc);
  save_checkpoint(out_path, net.params);
  report_losses("train-unguided", losses);
  std::printf("saved %s\n", out_path.c_str());
  return 0;
}

int cmd_fit_noise(const CommonArgs& common, const std::string& data_dir,
                  const std::string& landmarks_path, const std::string& out_path) {
  const Config cfg = resolve_config(common);
  const std::vector<FaceSample> data =
      load_face_samples(data_dir, cfg.real("eyebrow_width_frac", kEyebrowWidthFrac));

  Rng init_rng(1);  // overwritten by the checkpoint
  Fcn<float> net = build_fcn<float>(model_config(cfg, 3, kNumLandmarks), init_rng);
  load_checkpoint(landmarks_path, net.params);

  std::vector<std::pair<LandmarkSet, LandmarkSet>> pairs(data.size());
  parallel_for(static_cast<Index>(data.size()), worker_threads(common.deterministic),
               [&](Index i) {
                 const FaceSample& s = data[static_cast<std::size_t>(i)];
                 pairs[static_cast<std::size_t>(i)] = {s.landmarks,
                                                       predict_landmarks(net, s.image)};
               });
  const NoiseModel noise = fit_noise_model(pairs);
  save_noise_model(out_path, noise);
  std::printf("fitted detector noise on %zu samples, saved %s\n", data.size(),
              out_path.c_str());
  return 0;
}

int cmd_train_guided(const CommonArgs& common, const std::string& data_dir,
                     const std::string& out_path, const std::string& init_path,
                     const std::string& noise_path, const std::string& loss_csv) {
  const Config cfg = resolve_config(common);
  const std::vector<FaceSample> data =
      load_face_samples(data_dir, cfg.real("eyebrow_width_frac", kEyebrowWidthFrac));
  const NoiseModel noise = load_noise_model(noise_path);

  Rng master(common.seed);
  const std::uint64_t init_seed = child_seed(master);
  const std::uint64_t train_seed = child_seed(master);
  Rng init_rng(init_seed);

  Fcn<float> net = [&] {
    if (init_path.empty())
      return build_fcn<float>(model_config(cfg, 3 + kNumLandmarks, kNumClasses), init_rng);
    // Widen a plain segmenter checkpoint: the new guidance slices start at
    // zero so the widened net continues exactly where the checkpoint stopped.
    Fcn<float> base = build_fcn<float>(model_config(cfg, 3, kNumClasses), init_rng);
    load_checkpoint(init_path, base.params);
    return expand_first_layer(base);
  }();

  const std::array<double, 3> fractions =
      init_path.empty() ? std::array<double, 3>{0.4, 0.3, 0.3}
                        : std::array<double, 3>{0.0, 0.0, 1.0};
  TrainConfig tc = train_config(cfg, train_seed, loss_csv, 1500, 0.02, fractions);
  tc.warmup_iterations =
      cfg.integer("warmup_iterations", init_path.empty() ? 0 : 300);
  tc.sigma = data_sigma(cfg, data);
  const auto losses = train_guided_segmenter(net, data, noise, tc);
  save_checkpoint(out_path, net.params);
  report_losses("train-guided", losses);
  std::printf("saved %s\n", out_path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_dir,
             const std::string& landmarks_path, const std::string& unguided_path,
             const std::string& guided_path, const std::string& out_csv) {
  const Config cfg = resolve_config(common);
  const double frac = cfg.real("eyebrow_width_frac", kEyebrowWidthFrac);
  const std::vector<FaceSample> data = load_face_samples(data_dir, frac);

  Rng init_rng(1);  // all three overwritten by their checkpoints
  Fcn<float> lm_net = build_fcn<float>(model_config(cfg, 3, kNumLandmarks), init_rng);
  Fcn<float> unguided_net = build_fcn<float>(model_config(cfg, 3, kNumClasses), init_rng);
  Fcn<float> guided_net =
      build_fcn<float>(model_config(cfg, 3 + kNumLandmarks, kNumClasses), init_rng);
  load_checkpoint(landmarks_path, lm_net.params);
  load_checkpoint(unguided_path, unguided_net.params);
  load_checkpoint(guided_path, guided_net.params);

  double lm_error = 0.0;
  const MethodComparison comparison =
      evaluate_methods(lm_net, unguided_net, guided_net, data, data_sigma(cfg, data), frac,
                       worker_threads(common.deterministic), &lm_error);
  if (!out_csv.empty()) write_comparison_csv(out_csv, comparison);

  std::printf("samples: %zu\n", data.size());
  std::printf("detector mean normalized error: %.6f\n", lm_error);
  for (const std::string& name : method_names()) {
    const auto& row = comparison.rows.at(name);
    std::printf("%-20s mean IoU %.6f\n", name.c_str(), row.overall);
  }
  if (!out_csv.empty()) std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

int cmd_experiment(const CommonArgs& common, const std::string& out_dir) {
  const Config cfg = resolve_config(common);
  const ExperimentResult result =
      run_experiment(cfg, out_dir, common.seed, common.deterministic);
  std::printf("train/val/test: %zu/%zu/%zu\n", result.train_size, result.val_size,
              result.test_size);
  std::printf("detector mean normalized error: %.6f\n", result.detector_mean_error);
  for (const std::string& name : method_names())
    std::printf("%-20s mean IoU %.6f\n", name.c_str(),
                result.comparison.rows.at(name).overall);
  std::printf("outputs under %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-guided face part segmentation pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out, data_dir, init_path, landmarks_path, unguided_path, guided_path;
  std::string noise_path, loss_csv;
  long count = 20;
  bool vis = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  add_common(synth, common);
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--count", count, "number of samples");
  synth->add_flag("--vis", vis, "also write color mask renderings");

  CLI::App* tl = app.add_subcommand("train-landmarks", "train the heatmap landmark detector");
  add_common(tl, common);
  tl->add_option("--data", data_dir, "dataset directory")->required();
  tl->add_option("--out", out, "checkpoint to write")->required();
  tl->add_option("--init", init_path, "checkpoint to continue from");
  tl->add_option("--loss-csv", loss_csv, "per-iteration loss log");

  CLI::App* tu = app.add_subcommand("train-unguided", "train the plain segmenter");
  add_common(tu, common);
  tu->add_option("--data", data_dir, "dataset directory")->required();
  tu->add_option("--out", out, "checkpoint to write")->required();
  tu->add_option("--init", init_path, "checkpoint to continue from");
  tu->add_option("--loss-csv", loss_csv, "per-iteration loss log");

  CLI::App* fn = app.add_subcommand("fit-noise", "fit the detector noise model on a dataset");
  add_common(fn, common);
  fn->add_option("--data", data_dir, "dataset directory")->required();
  fn->add_option("--landmarks", landmarks_path, "landmark detector checkpoint")->required();
  fn->add_option("--out", out, "noise model file to write")->required();

  CLI::App* tg = app.add_subcommand("train-guided", "train the landmark-guided segmenter");
  add_common(tg, common);
  tg->add_option("--data", data_dir, "dataset directory")->required();
  tg->add_option("--out", out, "checkpoint to write")->required();
  tg->add_option("--init", init_path, "plain segmenter checkpoint to widen and continue from");
  tg->add_option("--noise", noise_path, "detector noise model file")->required();
  tg->add_option("--loss-csv", loss_csv, "per-iteration loss log");

  CLI::App* ev = app.add_subcommand("eval", "compare the four methods on a dataset");
  add_common(ev, common);
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--landmarks", landmarks_path, "landmark detector checkpoint")->required();
  ev->add_option("--unguided", unguided_path, "plain segmenter checkpoint")->required();
  ev->add_option("--guided", guided_path, "guided segmenter checkpoint")->required();
  ev->add_option("--out", out, "comparison CSV to write");

  CLI::App* ex = app.add_subcommand("experiment", "full train-and-compare pipeline");
  add_common(ex, common);
  ex->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(common, out, count, vis);
    if (tl->parsed()) return cmd_train_landmarks(common, data_dir, out, init_path, loss_csv);
    if (tu->parsed()) return cmd_train_unguided(common, data_dir, out, init_path, loss_csv);
    if (fn->parsed()) return cmd_fit_noise(common, data_dir, landmarks_path, out);
    if (tg->parsed())
      return cmd_train_guided(common, data_dir, out, init_path, noise_path, loss_csv);
    if (ev->parsed())
      return cmd_eval(common, data_dir, landmarks_path, unguided_path, guided_path, out);
    if (ex->parsed()) return cmd_experiment(common, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
