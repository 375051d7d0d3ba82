#ifndef CASCADESEG_GEOMETRY_HPP
#define CASCADESEG_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/image.hpp"
#include "cascadeseg/landmarks.hpp"
#include "cascadeseg/mask.hpp"

namespace cseg {

using Polygon = std::vector<Point2>;

/// Default eyebrow stroke width as a fraction of the normalized face height
/// (14 px at a 350 px face).
inline constexpr double kEyebrowWidthFrac = 0.04;

struct FaceSample {
  ImageRgb image;
  LandmarkSet landmarks;
  SegMask mask;
};

// ---------------------------------------------------------------------------
// Polygon rasterization: scanline even-odd fill sampled at pixel centers
// (col + 0.5, row + 0.5). A center exactly on the left boundary of an inside
// interval is inside, on the right boundary outside (half-open rule), which
// matches an even-odd crossing test that counts intersections strictly to the
// right of the sample point.
// ---------------------------------------------------------------------------

inline Grid<std::uint8_t> rasterize_polygon(const Polygon& vertices, Index width, Index height) {
  if (vertices.size() < 3) throw std::invalid_argument("rasterize_polygon: need at least 3 vertices");
  Grid<std::uint8_t> out = Grid<std::uint8_t>::Zero(height, width);

  std::vector<double> xs;
  const std::size_t n = vertices.size();
  for (Index row = 0; row < height; ++row) {
    const double y = static_cast<double>(row) + 0.5;
    xs.clear();
    for (std::size_t e = 0; e < n; ++e) {
      const Point2& a = vertices[e];
      const Point2& b = vertices[(e + 1) % n];
      if ((a.y() <= y) == (b.y() <= y)) continue;
      xs.push_back(a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      Index lo = static_cast<Index>(std::ceil(xs[i] - 0.5));
      Index hi = static_cast<Index>(std::ceil(xs[i + 1] - 0.5)) - 1;
      lo = std::max<Index>(lo, 0);
      hi = std::min<Index>(hi, width - 1);
      for (Index col = lo; col <= hi; ++col) out(row, col) = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Eyebrow stroke: centripetal Catmull-Rom through the five brow points,
// offset by +-width/2 along local normals. Coincident consecutive control
// points degrade the spline, so that case falls back to offsetting the
// polyline through the distinct points.
// ---------------------------------------------------------------------------

namespace detail {

inline Point2 catmull_rom_point(const Point2& p0, const Point2& p1, const Point2& p2,
                                const Point2& p3, double u) {
  // Centripetal knot spacing (alpha = 0.5); Barry-Goldman evaluation.
  auto knot = [](const Point2& a, const Point2& b, double t) {
    return t + std::sqrt((b - a).norm());
  };
  const double t0 = 0.0;
  const double t1 = knot(p0, p1, t0);
  const double t2 = knot(p1, p2, t1);
  const double t3 = knot(p2, p3, t2);
  const double t = t1 + u * (t2 - t1);

  const Point2 a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1;
  const Point2 a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2;
  const Point2 a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3;
  const Point2 b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2;
  const Point2 b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3;
  return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2;
}

/// Offsets a sampled open path by +-width/2 along normals from central
/// differences; returns the closed outline (left side forward, right side
/// back).
inline Polygon offset_path(const std::vector<Point2>& path, double width) {
  const std::size_t n = path.size();
  Polygon left(n), right(n);
  Point2 prev_normal(0.0, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& ahead = path[std::min(i + 1, n - 1)];
    const Point2& behind = path[i == 0 ? 0 : i - 1];
    Point2 tangent = ahead - behind;
    const double len = tangent.norm();
    Point2 normal = prev_normal;
    if (len > 1e-12) {
      tangent /= len;
      normal = Point2(-tangent.y(), tangent.x());
      prev_normal = normal;
    }
    left[i] = path[i] + 0.5 * width * normal;
    right[i] = path[i] - 0.5 * width * normal;
  }
  Polygon outline = std::move(left);
  outline.insert(outline.end(), right.rbegin(), right.rend());
  return outline;
}

}  // namespace detail

inline Polygon eyebrow_stroke(const std::array<Point2, 5>& brow_points, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("eyebrow_stroke: width must be positive");

  bool coincident = false;
  for (int i = 0; i + 1 < 5; ++i)
    if ((brow_points[i + 1] - brow_points[i]).norm() < 1e-9) coincident = true;

  std::vector<Point2> path;
  if (coincident) {
    // Straight-segment offsetting over the distinct points.
    path.push_back(brow_points[0]);
    for (int i = 1; i < 5; ++i)
      if ((brow_points[i] - path.back()).norm() >= 1e-9) path.push_back(brow_points[i]);
    if (path.size() < 2) {
      return Polygon(4, path.front());  // all points coincide: zero-area outline
    }
  } else {
    constexpr int kSegmentsPerSpan = 12;
    std::array<Point2, 7> ctrl;  // reflected phantom endpoints
    ctrl[0] = 2.0 * brow_points[0] - brow_points[1];
    for (int i = 0; i < 5; ++i) ctrl[i + 1] = brow_points[i];
    ctrl[6] = 2.0 * brow_points[4] - brow_points[3];
    for (int span = 0; span < 4; ++span) {
      for (int s = 0; s < kSegmentsPerSpan; ++s) {
        const double u = static_cast<double>(s) / kSegmentsPerSpan;
        path.push_back(detail::catmull_rom_point(ctrl[span], ctrl[span + 1], ctrl[span + 2],
                                                 ctrl[span + 3], u));
      }
    }
    path.push_back(brow_points[4]);
  }
  return detail::offset_path(path, width);
}

// ---------------------------------------------------------------------------
// Part mask construction. Components are painted back to front, later classes
// overwriting earlier ones: skin (jaw closed over the brow upper points),
// eyebrow strokes, eyes, nose, upper lip, inner mouth, lower lip. Every pixel
// keeps exactly one label.
// ---------------------------------------------------------------------------

/// The painted outlines in paint order. `stroke_width` is the eyebrow stroke
/// width in pixels.
inline std::vector<std::pair<ClassId, Polygon>> component_polygons(const LandmarkSet& lm,
                                                                   double stroke_width) {
  auto pick = [&](std::initializer_list<int> zero_based) {
    Polygon poly;
    poly.reserve(zero_based.size());
    for (int k : zero_based) poly.push_back(lm.point(k));
    return poly;
  };
  auto brow = [&](int first) {
    std::array<Point2, 5> pts;
    for (int i = 0; i < 5; ++i) pts[i] = lm.point(first + i);
    return eyebrow_stroke(pts, stroke_width);
  };

  std::vector<std::pair<ClassId, Polygon>> polys;
  // Skin: jaw 1-17, closed across the top via brows 27->23 then 22->18.
  polys.emplace_back(ClassId::skin,
                     pick({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16,
                           26, 25, 24, 23, 22, 21, 20, 19, 18, 17}));
  polys.emplace_back(ClassId::eyebrows, brow(17));
  polys.emplace_back(ClassId::eyebrows, brow(22));
  polys.emplace_back(ClassId::eyes, pick({36, 37, 38, 39, 40, 41}));
  polys.emplace_back(ClassId::eyes, pick({42, 43, 44, 45, 46, 47}));
  polys.emplace_back(ClassId::nose, pick({27, 31, 32, 33, 34, 35}));
  polys.emplace_back(ClassId::upper_lip,
                     pick({48, 49, 50, 51, 52, 53, 54, 64, 63, 62, 61, 60}));
  polys.emplace_back(ClassId::inner_mouth, pick({60, 61, 62, 63, 64, 65, 66, 67}));
  polys.emplace_back(ClassId::lower_lip,
                     pick({54, 55, 56, 57, 58, 59, 48, 60, 67, 66, 65, 64}));
  return polys;
}

inline SegMask landmarks_to_mask(const LandmarkSet& lm, Index width, Index height,
                                 double eyebrow_width_frac = kEyebrowWidthFrac) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("landmarks_to_mask: dimensions must be positive");
  validate_landmarks(lm);

  SegMask mask(height, width);
  const double stroke_width =
      std::max(eyebrow_width_frac * static_cast<double>(height), 1e-12);
  for (const auto& [cls, poly] : component_polygons(lm, stroke_width)) {
    const Grid<std::uint8_t> bits = rasterize_polygon(poly, width, height);
    const auto label = static_cast<std::uint8_t>(cls);
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c)
        if (bits(r, c)) mask.labels(r, c) = label;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Face normalization: crop to the (jitter-perturbed) landmark bounding box and
// rescale so the box height lands on target_height. The same similarity
// transform is applied to the landmarks, and the mask is regenerated from the
// transformed landmarks.
// ---------------------------------------------------------------------------

inline FaceSample normalize_face(const ImageRgb& image, const LandmarkSet& landmarks,
                                 Index target_height, double jitter, Rng& rng,
                                 double eyebrow_width_frac = kEyebrowWidthFrac) {
  if (target_height <= 0) throw std::invalid_argument("normalize_face: target_height must be positive");
  if (!(jitter >= 0.0 && jitter < 0.5))
    throw std::invalid_argument("normalize_face: jitter must lie in [0, 0.5)");
  validate_landmarks(landmarks);

  const Eigen::AlignedBox2d box = landmarks.bounding_box();
  const double box_w = box.sizes().x();
  const double box_h = box.sizes().y();
  if (!(box_w > 0.0) || !(box_h > 0.0))
    throw std::invalid_argument("normalize_face: degenerate landmark bounding box");

  Point2 origin = box.min();
  if (jitter > 0.0) {
    origin.x() += uniform(rng, -1.0, 1.0) * jitter * box_w;
    origin.y() += uniform(rng, -1.0, 1.0) * jitter * box_h;
  }

  const double scale = static_cast<double>(target_height) / box_h;
  const Index out_h = target_height;
  const Index out_w = std::max<Index>(1, static_cast<Index>(std::lround(box_w * scale)));

  FaceSample sample;
  sample.image = ImageRgb(out_h, out_w);
  for (int c = 0; c < 3; ++c) {
    for (Index r = 0; r < out_h; ++r)
      for (Index col = 0; col < out_w; ++col)
        sample.image.planes[c](r, col) = bilinear_sample(
            image.planes[c], static_cast<double>(col) / scale + origin.x(),
            static_cast<double>(r) / scale + origin.y());
  }
  sample.landmarks.xy =
      (landmarks.xy.rowwise() - origin.transpose()) * scale;
  sample.mask = landmarks_to_mask(sample.landmarks, out_w, out_h, eyebrow_width_frac);
  return sample;
}

/// Centers a height-normalized sample on a size x size canvas (integer pixel
/// shift, edge-clamped image, mask regenerated from the shifted landmarks).
/// Training needs fixed square inputs; normalize_face alone leaves the width
/// proportional to the face box.
inline FaceSample fit_to_square(const FaceSample& sample, Index size,
                                double eyebrow_width_frac = kEyebrowWidthFrac) {
  const Index dx = (size - sample.image.width()) / 2;
  const Index dy = (size - sample.image.height()) / 2;
  FaceSample out;
  out.image = ImageRgb(size, size);
  for (int c = 0; c < 3; ++c) {
    const Grid<float>& src = sample.image.planes[c];
    for (Index r = 0; r < size; ++r) {
      const Index sr = std::clamp<Index>(r - dy, 0, src.rows() - 1);
      for (Index col = 0; col < size; ++col) {
        const Index sc = std::clamp<Index>(col - dx, 0, src.cols() - 1);
        out.image.planes[c](r, col) = src(sr, sc);
      }
    }
  }
  out.landmarks.xy = sample.landmarks.xy;
  out.landmarks.xy.col(0).array() += static_cast<double>(dx);
  out.landmarks.xy.col(1).array() += static_cast<double>(dy);
  out.mask = landmarks_to_mask(out.landmarks, size, size, eyebrow_width_frac);
  return out;
}

// ---------------------------------------------------------------------------
// Occlusion augmentation: with the given probability, zeroes a random
// rectangle with sides drawn uniformly from [0.15, 0.4] x image height,
// placed uniformly so it stays inside the image. Labels are intentionally
// left untouched; the mask parameter documents that they pass through.
// ---------------------------------------------------------------------------

inline ImageRgb occlusion_augment(const ImageRgb& image, const SegMask&, double prob, Rng& rng) {
  if (!(prob >= 0.0 && prob <= 1.0))
    throw std::invalid_argument("occlusion_augment: prob must lie in [0,1]");
  ImageRgb out = image;
  if (prob == 0.0 || uniform(rng, 0.0, 1.0) >= prob) return out;

  const Index h = image.height(), w = image.width();
  const double base = static_cast<double>(h);
  const Index rect_w =
      std::clamp<Index>(static_cast<Index>(std::lround(uniform(rng, 0.15, 0.4) * base)), 1, w);
  const Index rect_h =
      std::clamp<Index>(static_cast<Index>(std::lround(uniform(rng, 0.15, 0.4) * base)), 1, h);
  const Index x0 = uniform_index(rng, 0, w - rect_w);
  const Index y0 = uniform_index(rng, 0, h - rect_h);
  for (int c = 0; c < 3; ++c) out.planes[c].block(y0, x0, rect_h, rect_w).setZero();
  return out;
}

}  // namespace cseg

#endif
