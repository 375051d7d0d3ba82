#ifndef CASCADESEG_LANDMARKS_HPP
#define CASCADESEG_LANDMARKS_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <stdexcept>

#include "cascadeseg/common.hpp"

namespace cseg {

using Point2 = Eigen::Vector2d;  // x rightward, y downward, in pixels

inline constexpr int kNumLandmarks = 68;

/// 68 points in the Multi-PIE / 300-W ordering. Row k holds (x, y) of the
/// 1-based landmark k+1: jaw 1-17, right brow 18-22, left brow 23-27, nose
/// bridge 28-31, nostrils 32-36, right eye 37-42, left eye 43-48, outer lips
/// 49-60, inner lips 61-68.
struct LandmarkSet {
  Eigen::Matrix<double, kNumLandmarks, 2> xy = Eigen::Matrix<double, kNumLandmarks, 2>::Zero();

  Point2 point(int k) const { return xy.row(k).transpose(); }
  void set_point(int k, const Point2& p) { xy.row(k) = p.transpose(); }

  /// Accessor by the conventional 1-based landmark number.
  Point2 numbered(int one_based) const { return point(one_based - 1); }

  bool finite() const { return xy.allFinite(); }

  Eigen::AlignedBox2d bounding_box() const {
    Eigen::AlignedBox2d box;
    for (int k = 0; k < kNumLandmarks; ++k) box.extend(point(k));
    return box;
  }
};

/// Outer eye corners used for interocular normalization (1-based 37 and 46).
inline constexpr int kOuterEyeRight = 36;  // 0-based index of landmark 37
inline constexpr int kOuterEyeLeft = 45;   // 0-based index of landmark 46

inline double interocular_distance(const LandmarkSet& lm) {
  return (lm.point(kOuterEyeRight) - lm.point(kOuterEyeLeft)).norm();
}

inline double face_height(const LandmarkSet& lm) {
  return lm.bounding_box().sizes().y();
}

inline void validate_landmarks(const LandmarkSet& lm) {
  if (!lm.finite()) throw std::invalid_argument("landmark set contains non-finite coordinates");
}

}  // namespace cseg

#endif
