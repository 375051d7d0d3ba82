#ifndef CASCADESEG_DATASET_HPP
#define CASCADESEG_DATASET_HPP

#include <string>
#include <vector>

#include "cascadeseg/geometry.hpp"
#include "cascadeseg/image.hpp"
#include "cascadeseg/landmarks.hpp"

namespace cseg {

/// One on-disk sample: `<stem>.png` (image) next to `<stem>.pts` (landmarks).
struct RawSample {
  std::string stem;
  ImageRgb image;
  LandmarkSet landmarks;
};

/// Loads every image/landmark pair in a directory, sorted by stem so the
/// dataset order is stable. Files named `<stem>_mask.png` or `<stem>_vis.png`
/// are companion outputs, not samples. An image without its .pts file is an
/// error; an empty directory is too.
std::vector<RawSample> load_dataset(const std::string& dir);

/// Normalization pipeline for one raw sample: crop/rescale to the target
/// face-box height (with optional crop jitter), then center on a square
/// canvas. The ground-truth mask is rendered from the transformed landmarks.
FaceSample prepare_sample(const ImageRgb& image, const LandmarkSet& landmarks,
                          Index target_height, double jitter, Index square_size, Rng& rng,
                          double eyebrow_width_frac = kEyebrowWidthFrac);

std::vector<FaceSample> prepare_dataset(const std::vector<RawSample>& raw, Index target_height,
                                        double jitter, Index square_size, Rng& rng,
                                        double eyebrow_width_frac = kEyebrowWidthFrac);

/// Writes `<stem>.png`, `<stem>.pts`, `<stem>_mask.png` and (optionally) a
/// `<stem>_vis.png` color rendering into `dir`.
void save_dataset_entry(const std::string& dir, const std::string& stem,
                        const FaceSample& sample, bool with_visualization = false);

}  // namespace cseg

#endif
