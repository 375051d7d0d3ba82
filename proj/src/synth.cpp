#include "cascadeseg/synth.hpp"

#include <cmath>
#include <stdexcept>

namespace cseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Base colors per class. Eyes vs eyebrows and nose vs skin differ by less
/// than the texture noise, and both lips share one tone; these collisions are
/// what landmark guidance is supposed to resolve.
constexpr float kPalette[kNumClasses][3] = {
    {0.15f, 0.15f, 0.18f},  // background
    {0.72f, 0.58f, 0.48f},  // skin
    {0.22f, 0.16f, 0.12f},  // eyebrows
    {0.24f, 0.18f, 0.14f},  // eyes (near eyebrows)
    {0.73f, 0.59f, 0.48f},  // nose (near skin)
    {0.62f, 0.33f, 0.31f},  // upper lip
    {0.20f, 0.12f, 0.12f},  // inner mouth
    {0.62f, 0.33f, 0.31f},  // lower lip (same tone as upper lip)
};

}  // namespace

LandmarkSet template_landmarks() {
  LandmarkSet lm;
  auto set = [&lm](int k, double x, double y) {
    lm.xy(k, 0) = x;
    lm.xy(k, 1) = y;
  };

  // Jaw: lower half of an ellipse, right side of the face first.
  for (int i = 0; i <= 16; ++i) {
    const double phi = kPi - i * kPi / 16.0;
    set(i, 0.5 + 0.35 * std::cos(phi), 0.52 + 0.40 * std::sin(phi));
  }
  // Brows: five points each, arched.
  for (int i = 0; i < 5; ++i) {
    const double arch = 0.035 * std::sin(kPi * i / 4.0);
    set(17 + i, 0.22 + 0.05 * i, 0.33 - arch);
    set(22 + i, 0.58 + 0.05 * i, 0.33 - arch);
  }
  // Nose bridge and nostril line.
  set(27, 0.50, 0.38);
  set(28, 0.50, 0.44);
  set(29, 0.50, 0.50);
  set(30, 0.50, 0.55);
  set(31, 0.44, 0.585);
  set(32, 0.47, 0.595);
  set(33, 0.50, 0.600);
  set(34, 0.53, 0.595);
  set(35, 0.56, 0.585);
  // Eyes: six-point rings, outer corners at 36 and 45.
  set(36, 0.25, 0.400);
  set(37, 0.29, 0.385);
  set(38, 0.35, 0.385);
  set(39, 0.39, 0.400);
  set(40, 0.35, 0.415);
  set(41, 0.29, 0.415);
  set(42, 0.61, 0.400);
  set(43, 0.65, 0.385);
  set(44, 0.71, 0.385);
  set(45, 0.75, 0.400);
  set(46, 0.71, 0.415);
  set(47, 0.65, 0.415);
  // Mouth: twelve outer points, eight inner, slightly open.
  set(48, 0.370, 0.700);
  set(49, 0.410, 0.672);
  set(50, 0.455, 0.660);
  set(51, 0.500, 0.664);
  set(52, 0.545, 0.660);
  set(53, 0.590, 0.672);
  set(54, 0.630, 0.700);
  set(55, 0.590, 0.735);
  set(56, 0.545, 0.752);
  set(57, 0.500, 0.756);
  set(58, 0.455, 0.752);
  set(59, 0.410, 0.735);
  set(60, 0.405, 0.700);
  set(61, 0.455, 0.685);
  set(62, 0.500, 0.688);
  set(63, 0.545, 0.685);
  set(64, 0.595, 0.700);
  set(65, 0.545, 0.718);
  set(66, 0.500, 0.722);
  set(67, 0.455, 0.718);
  return lm;
}

FaceSample synth_face(const SynthParams& params, Rng& rng) {
  if (params.canvas_size < 16)
    throw std::invalid_argument("synth_face: canvas too small");
  if (params.deform_amplitude < 0.0)
    throw std::invalid_argument("synth_face: negative deformation amplitude");

  const double amp = params.deform_amplitude;
  // Deformation parameters, drawn in fixed order.
  const double theta = amp * uniform(rng, -0.12, 0.12);
  const double scale = 1.0 + amp * uniform(rng, -0.08, 0.08);
  const double aspect = 1.0 + amp * uniform(rng, -0.05, 0.05);
  const double tx = amp * uniform(rng, -0.04, 0.04);
  const double ty = amp * uniform(rng, -0.03, 0.03);
  const double wx = amp * uniform(rng, 0.006, 0.018);
  const double wy = amp * uniform(rng, 0.006, 0.018);
  const double fx = uniform(rng, 0.5, 1.2);
  const double fy = uniform(rng, 0.5, 1.2);
  const double px = uniform(rng, 0.0, 1.0);
  const double py = uniform(rng, 0.0, 1.0);

  const Eigen::Vector2d pivot(0.5, 0.6);
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const Eigen::Matrix2d affine =
      rot * Eigen::Vector2d(scale * aspect, scale).asDiagonal();

  LandmarkSet unit = template_landmarks();
  for (int k = 0; k < kNumLandmarks; ++k) {
    Eigen::Vector2d q =
        pivot + affine * (unit.point(k) - pivot) + Eigen::Vector2d(tx, ty);
    q.x() += wx * std::sin(2.0 * kPi * (fy * q.y() + px));
    q.y() += wy * std::sin(2.0 * kPi * (fx * q.x() + py));
    unit.set_point(k, q);
  }

  // Unit square to canvas: template landmark box centered, 0.8 canvas scale.
  const double size = static_cast<double>(params.canvas_size);
  const Eigen::Vector2d unit_center(0.5, 0.6075);
  FaceSample sample;
  for (int k = 0; k < kNumLandmarks; ++k)
    sample.landmarks.set_point(
        k, (unit.point(k) - unit_center) * 0.8 * size + Eigen::Vector2d(size / 2, size / 2));

  sample.mask = landmarks_to_mask(sample.landmarks, params.canvas_size, params.canvas_size,
                                  params.eyebrow_width_frac);

  // Shading: jittered palette, a mild illumination gradient, per-pixel noise.
  float shift[3];
  for (float& s : shift)
    s = static_cast<float>(uniform(rng, -params.palette_jitter, params.palette_jitter));
  const double gx = uniform(rng, -0.12, 0.12);
  const double gy = uniform(rng, -0.12, 0.12);

  const Index n = params.canvas_size;
  sample.image = ImageRgb(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const float gain = static_cast<float>(
          1.0 + gx * (static_cast<double>(j) / (n - 1) - 0.5) +
          gy * (static_cast<double>(i) / (n - 1) - 0.5));
      const float noise =
          static_cast<float>(uniform(rng, -params.texture_noise, params.texture_noise));
      const int label = sample.mask.labels(i, j);
      for (int c = 0; c < 3; ++c) {
        const float v = (kPalette[label][c] + shift[c]) * gain + noise;
        sample.image.planes[static_cast<std::size_t>(c)](i, j) =
            v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      }
    }
  }
  return sample;
}

}  // namespace cseg
