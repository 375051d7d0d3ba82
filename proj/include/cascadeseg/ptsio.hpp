#ifndef CASCADESEG_PTSIO_HPP
#define CASCADESEG_PTSIO_HPP

#include <string>

#include "cascadeseg/landmarks.hpp"

namespace cseg {

/// Reads the common annotation format: a "version:" line, an "n_points: 68"
/// line, then the 68 "x y" coordinate pairs wrapped in braces. Any other
/// point count is rejected.
LandmarkSet load_pts(const std::string& path);

/// Writes the same format with full double precision, so save/load
/// round-trips exactly.
void save_pts(const std::string& path, const LandmarkSet& lm);

}  // namespace cseg

#endif
