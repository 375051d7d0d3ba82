#ifndef CASCADESEG_NOISE_HPP
#define CASCADESEG_NOISE_HPP

#include <Eigen/Eigenvalues>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/landmarks.hpp"

namespace cseg {

/// Per-landmark Gaussian model of detector error, expressed in pixels at a
/// reference face height so it transfers across image scales.
struct NoiseModel {
  double face_size_ref = 0.0;
  std::array<Eigen::Vector2d, kNumLandmarks> mean;
  std::array<Eigen::Matrix2d, kNumLandmarks> cov;

  NoiseModel() {
    for (auto& m : mean) m.setZero();
    for (auto& c : cov) c.setZero();
  }
};

/// Fits the noise model from (ground truth, detected) landmark pairs.
/// Residuals are rescaled to the mean ground-truth face height before the
/// per-landmark mean and unbiased covariance are taken; a single pair yields
/// zero covariance.
inline NoiseModel fit_noise_model(
    const std::vector<std::pair<LandmarkSet, LandmarkSet>>& gt_detected_pairs) {
  const std::size_t n = gt_detected_pairs.size();
  if (n == 0) throw std::invalid_argument("fit_noise_model: need at least one pair");

  NoiseModel model;
  for (const auto& [gt, det] : gt_detected_pairs) {
    validate_landmarks(gt);
    validate_landmarks(det);
    model.face_size_ref += face_height(gt);
  }
  model.face_size_ref /= static_cast<double>(n);
  if (!(model.face_size_ref > 0.0))
    throw std::invalid_argument("fit_noise_model: degenerate ground-truth face heights");

  std::vector<std::array<Eigen::Vector2d, kNumLandmarks>> residuals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [gt, det] = gt_detected_pairs[i];
    const double h = face_height(gt);
    if (!(h > 0.0)) throw std::invalid_argument("fit_noise_model: zero-height face box");
    const double to_ref = model.face_size_ref / h;
    for (int k = 0; k < kNumLandmarks; ++k) {
      residuals[i][static_cast<std::size_t>(k)] = (det.point(k) - gt.point(k)) * to_ref;
      model.mean[static_cast<std::size_t>(k)] += residuals[i][static_cast<std::size_t>(k)];
    }
  }
  for (auto& m : model.mean) m /= static_cast<double>(n);

  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < kNumLandmarks; ++k) {
        const Eigen::Vector2d d =
            residuals[i][static_cast<std::size_t>(k)] - model.mean[static_cast<std::size_t>(k)];
        model.cov[static_cast<std::size_t>(k)] += d * d.transpose();
      }
    for (auto& c : model.cov) c /= static_cast<double>(n - 1);
  }
  return model;
}

/// Draws one plausible detector output for the given landmarks: each point is
/// offset by a sample from its Gaussian, rescaled from the reference face
/// height to this face's height. Landmarks are perturbed in fixed order
/// (two normal draws each), so a seeded generator reproduces the output.
inline LandmarkSet perturb_landmarks(const LandmarkSet& lm, const NoiseModel& model, Rng& rng) {
  validate_landmarks(lm);
  if (!(model.face_size_ref > 0.0))
    throw std::invalid_argument("perturb_landmarks: model has no reference face size");
  const double h = face_height(lm);
  if (!(h > 0.0)) throw std::invalid_argument("perturb_landmarks: zero-height face box");
  const double scale = h / model.face_size_ref;

  LandmarkSet out = lm;
  for (int k = 0; k < kNumLandmarks; ++k) {
    const auto& cov = model.cov[static_cast<std::size_t>(k)];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Eigen::Vector2d clipped = es.eigenvalues().cwiseMax(0.0);
    const Eigen::Matrix2d transform =
        es.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
    const Eigen::Vector2d z(normal(rng), normal(rng));
    const Eigen::Vector2d offset =
        scale * (model.mean[static_cast<std::size_t>(k)] + transform * z);
    out.set_point(k, lm.point(k) + offset);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text serialization: a header line with the reference face height, then one
// line per landmark (one-based index, mean, covariance upper triangle), all
// values printed with enough digits to round-trip doubles exactly.
// ---------------------------------------------------------------------------

inline void save_noise_model(const std::string& path, const NoiseModel& model) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_noise_model: cannot open " + path);
  char line[256];
  std::snprintf(line, sizeof(line), "CSEG_NOISE 1 %.17g\n", model.face_size_ref);
  os << line;
  for (int k = 0; k < kNumLandmarks; ++k) {
    const auto& m = model.mean[static_cast<std::size_t>(k)];
    const auto& c = model.cov[static_cast<std::size_t>(k)];
    std::snprintf(line, sizeof(line), "%d %.17g %.17g %.17g %.17g %.17g\n", k + 1, m.x(), m.y(),
                  c(0, 0), c(0, 1), c(1, 1));
    os << line;
  }
  if (!os) throw std::runtime_error("save_noise_model: write failed for " + path);
}

inline NoiseModel load_noise_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_noise_model: cannot open " + path);

  NoiseModel model;
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version >> model.face_size_ref) || tag != "CSEG_NOISE" || version != 1)
    throw std::runtime_error("load_noise_model: bad header in " + path);
  for (int k = 0; k < kNumLandmarks; ++k) {
    int idx = 0;
    double mx, my, sxx, sxy, syy;
    if (!(is >> idx >> mx >> my >> sxx >> sxy >> syy) || idx != k + 1)
      throw std::runtime_error("load_noise_model: bad landmark row in " + path);
    model.mean[static_cast<std::size_t>(k)] = Eigen::Vector2d(mx, my);
    model.cov[static_cast<std::size_t>(k)] << sxx, sxy, sxy, syy;
  }
  return model;
}

}  // namespace cseg

#endif
