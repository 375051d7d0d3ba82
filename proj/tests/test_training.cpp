#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/geometry.hpp"
#include "cascadeseg/network.hpp"
#include "cascadeseg/noise.hpp"
#include "cascadeseg/training.hpp"
#include "testutil.hpp"

using namespace cseg;

namespace {

// Small but fully valid sample: random texture, landmarks spread over the
// canvas with pinned vertical extremes, mask rendered from the landmarks.
FaceSample make_sample(Rng& rng, Index size) {
  FaceSample s;
  s.image = ImageRgb(size, size);
  for (auto& p : s.image.planes)
    p = Grid<float>::NullaryExpr(size, size,
                                 [&]() { return static_cast<float>(uniform(rng, 0.0, 1.0)); });
  const double lo = 1.0, hi = static_cast<double>(size) - 1.0;
  for (int k = 0; k < kNumLandmarks; ++k)
    s.landmarks.set_point(k, {uniform(rng, lo, hi), uniform(rng, lo, hi)});
  s.landmarks.set_point(0, {lo + 1.0, lo});
  s.landmarks.set_point(16, {hi - 1.0, hi});
  s.mask = landmarks_to_mask(s.landmarks, size, size);
  return s;
}

std::vector<std::string> csv_lines(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("phase plan splits iterations by warmup and stage fractions") {
  TrainConfig cfg;
  cfg.iterations = 100;
  cfg.warmup_iterations = 10;
  cfg.stage_fractions = {0.4, 0.3, 0.3};
  const auto plan = detail::PhasePlan::make(cfg);
  CHECK(plan.warmup_end == 10);
  CHECK(plan.stride32_end == 46);  // 10 + round(0.4 * 90)
  CHECK(plan.stride16_end == 73);  // 46 + round(0.3 * 90)

  using P = detail::TrainPhase;
  CHECK(plan.at(0) == P::warmup);
  CHECK(plan.at(9) == P::warmup);
  CHECK(plan.at(10) == P::stride32);
  CHECK(plan.at(45) == P::stride32);
  CHECK(plan.at(46) == P::stride16);
  CHECK(plan.at(72) == P::stride16);
  CHECK(plan.at(73) == P::stride8);
  CHECK(plan.at(99) == P::stride8);

  TrainConfig all8 = cfg;
  all8.warmup_iterations = 0;
  all8.stage_fractions = {0.0, 0.0, 1.0};
  const auto plan8 = detail::PhasePlan::make(all8);
  CHECK(plan8.at(0) == P::stride8);
  CHECK(plan8.at(99) == P::stride8);
}

TEST_CASE("phase plan validation") {
  TrainConfig cfg;
  cfg.iterations = 50;

  TrainConfig bad = cfg;
  bad.stage_fractions = {0.4, 0.3, 0.2};
  CHECK_THROWS_AS(detail::PhasePlan::make(bad), std::invalid_argument);

  bad = cfg;
  bad.stage_fractions = {1.2, -0.2, 0.0};
  CHECK_THROWS_AS(detail::PhasePlan::make(bad), std::invalid_argument);

  bad = cfg;
  bad.warmup_iterations = 51;
  CHECK_THROWS_AS(detail::PhasePlan::make(bad), std::invalid_argument);

  bad = cfg;
  bad.iterations = -1;
  CHECK_THROWS_AS(detail::PhasePlan::make(bad), std::invalid_argument);

  bad = cfg;
  bad.warmup_lr = -0.1;
  CHECK_THROWS_AS(detail::PhasePlan::make(bad), std::invalid_argument);
}

TEST_CASE("warmup learning rate applies to the warmup phase only") {
  Rng data_rng(42);
  std::vector<FaceSample> data = {make_sample(data_rng, 16)};

  // Warmup fine-tunes a donor whose classifier is no longer zero; on a fresh
  // build the zero score layers gate the gradient into conv1_1, making every
  // warmup step a no-op regardless of rate.
  Rng init(99);
  Fcn<float> donor = build_fcn<float>(FcnConfig::mini(3, 8), init);
  TrainConfig pre;
  pre.iterations = 6;
  pre.lr = 1e-2;
  pre.occlusion_prob = 0.0;
  pre.seed = 4;
  train_segmenter(donor, data, pre);

  auto run = [&](double warmup_lr) {
    Fcn<float> net = clone_network(donor);
    TrainConfig cfg;
    cfg.iterations = 8;
    cfg.warmup_iterations = 4;
    cfg.lr = 1e-3;
    cfg.warmup_lr = warmup_lr;
    cfg.occlusion_prob = 0.0;
    cfg.seed = 5;
    return train_segmenter(net, data, cfg);
  };

  // 0 means "use lr", so an explicit warmup_lr equal to lr changes nothing.
  CHECK(run(0.0) == run(1e-3));
  // A different warmup rate alters warmup steps, so the histories split
  // after the first update.
  const auto base = run(0.0);
  const auto hot = run(1e-2);
  CHECK(base[0] == hot[0]);
  CHECK(base != hot);
}

TEST_CASE("phase names and stage sets") {
  using P = detail::TrainPhase;
  CHECK(std::string(detail::phase_name(P::warmup)) == "warmup");
  CHECK(std::string(detail::phase_name(P::stride32)) == "stride32");
  CHECK(std::string(detail::phase_name(P::stride16)) == "stride16");
  CHECK(std::string(detail::phase_name(P::stride8)) == "stride8");

  CHECK_FALSE(detail::phase_stages(P::stride32).pool4_skip);
  CHECK_FALSE(detail::phase_stages(P::stride32).pool3_skip);
  CHECK(detail::phase_stages(P::stride16).pool4_skip);
  CHECK_FALSE(detail::phase_stages(P::stride16).pool3_skip);
  CHECK(detail::phase_stages(P::stride8).pool4_skip);
  CHECK(detail::phase_stages(P::stride8).pool3_skip);
  // Warm-up exercises the complete architecture.
  CHECK(detail::phase_stages(P::warmup).pool4_skip);
  CHECK(detail::phase_stages(P::warmup).pool3_skip);
}

TEST_CASE("phase application drives trainable flags and gradient tracking") {
  Rng rng(1);
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), rng);

  auto check_flags = [&](auto pred) {
    for (const auto& p : net.params) {
      const bool want = pred(p.name);
      CHECK(p.trainable == want);
      CHECK(p.tensor.node()->requires_grad == want);
    }
  };

  detail::apply_phase(net, detail::TrainPhase::warmup);
  check_flags([](const std::string& n) { return n.find("conv1_1") != std::string::npos; });

  detail::apply_phase(net, detail::TrainPhase::stride32);
  check_flags([](const std::string& n) {
    return n.find("score_pool4") == std::string::npos &&
           n.find("score_pool3") == std::string::npos;
  });

  detail::apply_phase(net, detail::TrainPhase::stride16);
  check_flags([](const std::string& n) { return n.find("score_pool3") == std::string::npos; });

  detail::apply_phase(net, detail::TrainPhase::stride8);
  check_flags([](const std::string&) { return true; });
}

TEST_CASE("training loop logs one row per iteration with the active stage") {
  Rng rng(21);
  std::vector<FaceSample> data = {make_sample(rng, 16), make_sample(rng, 16),
                                  make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), rng);

  testutil::TempDir tmp("trainlog");
  TrainConfig cfg;
  cfg.iterations = 12;
  cfg.lr = 1e-3;
  cfg.occlusion_prob = 0.5;
  cfg.stage_fractions = {0.4, 0.3, 0.3};  // ends at 5 and 9 of 12
  cfg.loss_csv = tmp.file("loss.csv");

  const std::vector<double> history = train_segmenter(net, data, cfg);
  REQUIRE(history.size() == 12);
  for (double v : history) CHECK(std::isfinite(v));

  const auto lines = csv_lines(cfg.loss_csv);
  REQUIRE(lines.size() == 13);
  CHECK(lines[0] == "iteration,stage,loss");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const long it = static_cast<long>(i) - 1;
    const char* stage = it < 5 ? "stride32" : (it < 9 ? "stride16" : "stride8");
    std::ostringstream prefix;
    prefix << it << ',' << stage << ',';
    CHECK(lines[i].rfind(prefix.str(), 0) == 0);
    // Logged value parses back to the history entry within print precision.
    const double logged = std::stod(lines[i].substr(prefix.str().size()));
    CHECK(logged == doctest::Approx(history[i - 1]).epsilon(1e-6));
  }

  // The loop hands the network back fully trainable.
  for (const auto& p : net.params) {
    CHECK(p.trainable);
    CHECK(p.tensor.node()->requires_grad);
  }

  TrainConfig bad = cfg;
  bad.loss_csv = tmp.path.string() + "/missing_dir/loss.csv";
  CHECK_THROWS_AS(train_segmenter(net, data, bad), std::runtime_error);
  CHECK_THROWS_AS(train_segmenter(net, {}, cfg), std::invalid_argument);
}

TEST_CASE("all-stride8 schedule tags every row stride8") {
  Rng rng(22);
  std::vector<FaceSample> data = {make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), rng);

  testutil::TempDir tmp("train8");
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.lr = 1e-3;
  cfg.occlusion_prob = 0.0;
  cfg.stage_fractions = {0.0, 0.0, 1.0};
  cfg.loss_csv = tmp.file("loss.csv");
  train_segmenter(net, data, cfg);

  const auto lines = csv_lines(cfg.loss_csv);
  REQUIRE(lines.size() == 5);
  for (std::size_t i = 1; i < lines.size(); ++i)
    CHECK(lines[i].find(",stride8,") != std::string::npos);
}

TEST_CASE("divergence detection aborts the run") {
  Rng rng(23);
  std::vector<FaceSample> data = {make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), rng);

  TrainConfig cfg;
  cfg.iterations = 10;
  cfg.divergence_threshold = 1e-12;  // initial softmax loss is ~ln(8)
  CHECK_THROWS_AS(train_segmenter(net, data, cfg), std::runtime_error);
}

TEST_CASE("training is reproducible under the config seed") {
  Rng data_rng(24);
  std::vector<FaceSample> data = {make_sample(data_rng, 16), make_sample(data_rng, 16),
                                  make_sample(data_rng, 16)};

  auto run = [&](std::uint64_t train_seed) {
    Rng init(99);
    Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), init);
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.lr = 1e-3;
    cfg.occlusion_prob = 1.0;  // every step consumes augmentation draws
    cfg.seed = train_seed;
    return train_segmenter(net, data, cfg);
  };

  const auto h1 = run(7);
  const auto h2 = run(7);
  const auto h3 = run(8);
  CHECK(h1 == h2);
  CHECK(h1 != h3);
}

TEST_CASE("single-sample overfit drives the loss down") {
  Rng rng(25);
  std::vector<FaceSample> data = {make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, 8), rng);

  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.lr = 0.02;
  cfg.occlusion_prob = 0.0;
  cfg.stage_fractions = {0.0, 0.0, 1.0};
  const auto history = train_segmenter(net, data, cfg);
  REQUIRE(history.size() == 300);
  CHECK(history.back() < 0.5 * history.front());
}

TEST_CASE("landmark detector training runs and rejects wrong shapes") {
  Rng rng(26);
  std::vector<FaceSample> data = {make_sample(rng, 16), make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3, kNumLandmarks), rng);

  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.lr = 1e-3;
  cfg.loss_scale = 1.0 / (16.0 * 16.0);
  cfg.sigma = 1.0;
  const auto history = train_landmark_detector(net, data, cfg);
  REQUIRE(history.size() == 5);
  for (double v : history) CHECK(v > 0.0);

  Fcn<float> seg = build_fcn<float>(FcnConfig::mini(3, 8), rng);
  CHECK_THROWS_AS(train_landmark_detector(seg, data, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_segmenter(net, data, cfg), std::invalid_argument);
  Fcn<float> guided = build_fcn<float>(FcnConfig::mini(3 + kNumLandmarks, 8), rng);
  NoiseModel noise;
  noise.face_size_ref = 10.0;
  CHECK_THROWS_AS(train_guided_segmenter(seg, data, noise, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_segmenter(guided, data, cfg), std::invalid_argument);
}

TEST_CASE("guided training perturbs guidance and reports it to the observer") {
  Rng rng(27);
  std::vector<FaceSample> data = {make_sample(rng, 16)};
  Fcn<float> net = build_fcn<float>(FcnConfig::mini(3 + kNumLandmarks, 8), rng);

  // Zero covariance with reference equal to this face's height: guidance is
  // the ground truth shifted by exactly the model mean.
  NoiseModel noise;
  noise.face_size_ref = face_height(data[0].landmarks);
  for (int k = 0; k < kNumLandmarks; ++k)
    noise.mean[static_cast<std::size_t>(k)] = {0.5, 0.25};

  std::vector<long> seen_iterations;
  std::vector<LandmarkSet> seen_guides;
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.lr = 1e-3;
  cfg.occlusion_prob = 0.0;
  cfg.sigma = 1.0;
  cfg.guidance_observer = [&](long it, const LandmarkSet& guide) {
    seen_iterations.push_back(it);
    seen_guides.push_back(guide);
  };

  train_guided_segmenter(net, data, noise, cfg);
  REQUIRE(seen_iterations.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(seen_iterations[i] == static_cast<long>(i));
  LandmarkSet want;
  for (int k = 0; k < kNumLandmarks; ++k)
    want.set_point(k, data[0].landmarks.point(k) + Eigen::Vector2d(0.5, 0.25));
  for (const auto& guide : seen_guides)
    CHECK((guide.xy - want.xy).cwiseAbs().maxCoeff() == 0.0);
}
