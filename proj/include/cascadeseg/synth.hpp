#ifndef CASCADESEG_SYNTH_HPP
#define CASCADESEG_SYNTH_HPP

#include "cascadeseg/common.hpp"
#include "cascadeseg/geometry.hpp"
#include "cascadeseg/landmarks.hpp"

namespace cseg {

/// Synthetic face generation. A fixed landmark template in the unit square is
/// randomly deformed (affine plus a smooth sinusoidal warp, both scaled by
/// `deform_amplitude`; zero amplitude reproduces the template exactly), the
/// part mask is rendered from the deformed landmarks, and the image is shaded
/// from the mask with a deliberately ambiguous palette: eyes match eyebrows,
/// the nose matches skin, and the two lips share one tone, so local
/// appearance alone cannot separate those classes.
struct SynthParams {
  Index canvas_size = 96;
  double deform_amplitude = 1.0;
  double texture_noise = 0.04;    // per-pixel shading noise
  double palette_jitter = 0.03;   // per-sample global color shift
  double eyebrow_width_frac = kEyebrowWidthFrac;
};

/// The undeformed 68-point template, in unit-square coordinates.
LandmarkSet template_landmarks();

/// Draws one face: canvas-space landmarks, their part mask, and the shaded
/// image.
FaceSample synth_face(const SynthParams& params, Rng& rng);

}  // namespace cseg

#endif
