#include "cascadeseg/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "cascadeseg/pngio.hpp"
#include "cascadeseg/ptsio.hpp"

namespace cseg {

namespace fs = std::filesystem;

std::vector<RawSample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("load_dataset: not a directory: " + dir);

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
    if (stem.size() >= 4 && stem.compare(stem.size() - 4, 4, "_vis") == 0) continue;
    stems.push_back(stem);
  }
  if (stems.empty()) throw std::runtime_error("load_dataset: no samples in " + dir);
  std::sort(stems.begin(), stems.end());

  std::vector<RawSample> samples;
  samples.reserve(stems.size());
  for (const std::string& stem : stems) {
    const fs::path image_path = fs::path(dir) / (stem + ".png");
    const fs::path pts_path = fs::path(dir) / (stem + ".pts");
    if (!fs::is_regular_file(pts_path))
      throw std::runtime_error("load_dataset: missing landmark file " + pts_path.string());
    RawSample s;
    s.stem = stem;
    s.image = load_image_png(image_path.string());
    s.landmarks = load_pts(pts_path.string());
    samples.push_back(std::move(s));
  }
  return samples;
}

FaceSample prepare_sample(const ImageRgb& image, const LandmarkSet& landmarks,
                          Index target_height, double jitter, Index square_size, Rng& rng,
                          double eyebrow_width_frac) {
  const FaceSample normalized =
      normalize_face(image, landmarks, target_height, jitter, rng, eyebrow_width_frac);
  return fit_to_square(normalized, square_size, eyebrow_width_frac);
}

std::vector<FaceSample> prepare_dataset(const std::vector<RawSample>& raw, Index target_height,
                                        double jitter, Index square_size, Rng& rng,
                                        double eyebrow_width_frac) {
  std::vector<FaceSample> out;
  out.reserve(raw.size());
  for (const RawSample& s : raw)
    out.push_back(prepare_sample(s.image, s.landmarks, target_height, jitter, square_size, rng,
                                 eyebrow_width_frac));
  return out;
}

void save_dataset_entry(const std::string& dir, const std::string& stem,
                        const FaceSample& sample, bool with_visualization) {
  const fs::path base = fs::path(dir) / stem;
  save_image_png(base.string() + ".png", sample.image);
  save_pts(base.string() + ".pts", sample.landmarks);
  save_mask_png(base.string() + "_mask.png", sample.mask);
  if (with_visualization)
    save_mask_visualization_png(base.string() + "_vis.png", sample.mask);
}

}  // namespace cseg
