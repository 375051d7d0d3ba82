#ifndef CASCADESEG_IMAGE_HPP
#define CASCADESEG_IMAGE_HPP

#include <algorithm>
#include <array>
#include <cmath>

#include "cascadeseg/common.hpp"

namespace cseg {

/// RGB intensities in [0,1], one row-major plane per channel.
struct ImageRgb {
  std::array<Grid<float>, 3> planes;

  ImageRgb() = default;
  ImageRgb(Index height, Index width) {
    for (auto& p : planes) p = Grid<float>::Zero(height, width);
  }

  Index height() const { return planes[0].rows(); }
  Index width() const { return planes[0].cols(); }

  bool operator==(const ImageRgb& o) const {
    for (int c = 0; c < 3; ++c) {
      if (planes[c].rows() != o.planes[c].rows() || planes[c].cols() != o.planes[c].cols())
        return false;
      if (!(planes[c] == o.planes[c]).all()) return false;
    }
    return true;
  }
};

/// Bilinear sample with clamp-to-edge, (x, y) in pixel units where integer
/// coordinates land on sample points.
inline float bilinear_sample(const Grid<float>& plane, double x, double y) {
  const Index h = plane.rows(), w = plane.cols();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const Index x0 = static_cast<Index>(std::floor(x));
  const Index y0 = static_cast<Index>(std::floor(y));
  const Index x1 = std::min(x0 + 1, w - 1);
  const Index y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1.0 - fx) * plane(y0, x0) + fx * plane(y0, x1);
  const double bot = (1.0 - fx) * plane(y1, x0) + fx * plane(y1, x1);
  return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace cseg

#endif
