#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>

#include "cascadeseg/geometry.hpp"
#include "cascadeseg/synth.hpp"
#include "oracles.hpp"

using namespace cseg;

namespace {

Polygon random_polygon(Rng& rng, int vertices, double lo, double hi) {
  Polygon poly;
  poly.reserve(static_cast<std::size_t>(vertices));
  for (int i = 0; i < vertices; ++i)
    poly.emplace_back(uniform(rng, lo, hi), uniform(rng, lo, hi));
  return poly;
}

LandmarkSet scaled_template(double scale) {
  LandmarkSet lm = template_landmarks();
  lm.xy *= scale;
  return lm;
}

}  // namespace

TEST_CASE("rasterization agrees with the even-odd point-in-polygon test on every pixel") {
  Rng rng(101);
  const Index W = 24, H = 24;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = static_cast<int>(uniform_index(rng, 3, 8));
    // Vertices may fall outside the canvas; clamping must not change labels.
    const Polygon poly = random_polygon(rng, n, -3.0, 27.0);
    const Grid<std::uint8_t> grid = rasterize_polygon(poly, W, H);
    for (Index r = 0; r < H; ++r)
      for (Index c = 0; c < W; ++c) {
        const bool inside =
            oracle::point_in_polygon(static_cast<double>(c) + 0.5,
                                     static_cast<double>(r) + 0.5, poly);
        INFO("trial " << trial << " pixel (" << r << "," << c << ")");
        REQUIRE(static_cast<bool>(grid(r, c)) == inside);
      }
  }
}

TEST_CASE("rasterization fills half-open pixel ranges") {
  // Rectangle through pixel centers: left/top boundary pixels are inside,
  // right/bottom boundary pixels are out.
  const Polygon rect = {{1.5, 1.5}, {4.5, 1.5}, {4.5, 4.5}, {1.5, 4.5}};
  const Grid<std::uint8_t> grid = rasterize_polygon(rect, 8, 8);
  Index count = 0;
  for (Index r = 0; r < 8; ++r)
    for (Index c = 0; c < 8; ++c) {
      const bool want = r >= 1 && r <= 3 && c >= 1 && c <= 3;
      CHECK(static_cast<bool>(grid(r, c)) == want);
      count += grid(r, c);
    }
  CHECK(count == 9);

  // Integer-corner rectangle covers exactly its area in pixels.
  const Polygon box = {{2.0, 1.0}, {5.0, 1.0}, {5.0, 3.0}, {2.0, 3.0}};
  const Grid<std::uint8_t> grid2 = rasterize_polygon(box, 8, 8);
  CHECK(grid2.cast<int>().sum() == 6);
  CHECK(grid2(1, 2) == 1);
  CHECK(grid2(1, 4) == 1);
  CHECK(grid2(1, 5) == 0);
  CHECK(grid2(3, 2) == 0);
}

TEST_CASE("degenerate polygons rasterize to nothing and tiny ones to slivers") {
  CHECK_THROWS_AS((void)rasterize_polygon({{0, 0}, {1, 1}}, 4, 4), std::invalid_argument);
  const Polygon collinear = {{0.0, 0.0}, {3.0, 3.0}, {6.0, 6.0}};
  CHECK(rasterize_polygon(collinear, 8, 8).cast<int>().sum() == 0);
  const Polygon off_canvas = {{20.0, 20.0}, {25.0, 20.0}, {22.0, 24.0}};
  CHECK(rasterize_polygon(off_canvas, 8, 8).cast<int>().sum() == 0);
}

TEST_CASE("eyebrow strokes cover their control points and scale with width") {
  const std::array<Point2, 5> brow = {Point2{4.0, 10.0}, Point2{8.0, 8.5}, Point2{12.0, 8.0},
                                      Point2{16.0, 8.5}, Point2{20.0, 10.0}};
  const Polygon thin = eyebrow_stroke(brow, 1.0);
  const Polygon thick = eyebrow_stroke(brow, 3.0);
  REQUIRE(thin.size() >= 3);

  const Grid<std::uint8_t> thin_px = rasterize_polygon(thin, 26, 20);
  const Grid<std::uint8_t> thick_px = rasterize_polygon(thick, 26, 20);
  CHECK(thin_px.cast<int>().sum() > 0);
  CHECK(thick_px.cast<int>().sum() > thin_px.cast<int>().sum());
  // The stroke passes through the interior control points.
  for (int k = 1; k <= 3; ++k) {
    const Index r = static_cast<Index>(std::lround(brow[std::size_t(k)].y()));
    const Index c = static_cast<Index>(std::lround(brow[std::size_t(k)].x()));
    CHECK(thick_px(r, c) == 1);
  }

  CHECK_THROWS_AS((void)eyebrow_stroke(brow, 0.0), std::invalid_argument);
}

TEST_CASE("coincident brow points fall back to polyline offsetting") {
  const Point2 p(5.0, 5.0);
  const std::array<Point2, 5> repeated = {p, p, Point2{9.0, 5.0}, Point2{9.0, 5.0},
                                          Point2{13.0, 5.0}};
  const Polygon stroke = eyebrow_stroke(repeated, 2.0);
  REQUIRE(stroke.size() >= 3);
  const Grid<std::uint8_t> px = rasterize_polygon(stroke, 18, 10);
  CHECK(px.cast<int>().sum() > 0);
  CHECK(px(5, 9) == 1);

  const std::array<Point2, 5> all_same = {p, p, p, p, p};
  const Polygon empty_stroke = eyebrow_stroke(all_same, 2.0);
  CHECK(rasterize_polygon(empty_stroke, 18, 10).cast<int>().sum() == 0);
}

TEST_CASE("component outlines reference the documented landmark groups") {
  const LandmarkSet lm = scaled_template(64.0);
  const auto parts = component_polygons(lm, 2.0);
  REQUIRE(parts.size() == 9);  // skin, 2 brows, 2 eyes, nose, 2 lips, mouth interior

  CHECK(parts[0].first == ClassId::skin);
  CHECK(parts[0].second.size() == 27);  // 17 jaw + 10 brow-top points
  CHECK(parts[1].first == ClassId::eyebrows);
  CHECK(parts[2].first == ClassId::eyebrows);
  CHECK(parts[3].first == ClassId::eyes);
  CHECK(parts[3].second.size() == 6);
  CHECK(parts[4].first == ClassId::eyes);
  CHECK(parts[5].first == ClassId::nose);
  CHECK(parts[6].first == ClassId::upper_lip);
  CHECK(parts[7].first == ClassId::inner_mouth);
  CHECK(parts[8].first == ClassId::lower_lip);

  // The skin outline starts at the jaw and closes back over the brows; eye
  // rings use the canonical six points.
  CHECK((parts[0].second.front() - lm.point(0)).norm() == 0.0);
  CHECK((parts[0].second.back() - lm.point(17)).norm() == 0.0);
  for (int k = 0; k < 6; ++k)
    CHECK((parts[3].second[std::size_t(k)] - lm.point(36 + k)).norm() == 0.0);
}

TEST_CASE("mask construction is the painter's algorithm over the component list") {
  const LandmarkSet lm = scaled_template(64.0);
  const SegMask mask = landmarks_to_mask(lm, 64, 64);
  const auto hist = mask.histogram();
  Index total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    INFO("class " << class_name(static_cast<ClassId>(c)));
    CHECK(hist[std::size_t(c)] > 0);
    total += hist[std::size_t(c)];
  }
  CHECK(total == 64 * 64);

  // Replay the paint order with the independent inside test: the final label
  // of every pixel is the last component covering it, background otherwise.
  const double stroke = std::max(kEyebrowWidthFrac * 64.0, 1e-12);
  const auto parts = component_polygons(lm, stroke);
  for (Index r = 0; r < 64; ++r)
    for (Index c = 0; c < 64; ++c) {
      std::uint8_t want = 0;
      for (const auto& [cls, poly] : parts)
        if (oracle::point_in_polygon(static_cast<double>(c) + 0.5,
                                     static_cast<double>(r) + 0.5, poly))
          want = static_cast<std::uint8_t>(cls);
      INFO("pixel (" << r << "," << c << ")");
      REQUIRE(mask.labels(r, c) == want);
    }
}

TEST_CASE("mask construction is invariant to which corner the face occupies") {
  LandmarkSet lm = scaled_template(40.0);
  const SegMask base = landmarks_to_mask(lm, 64, 64);
  LandmarkSet shifted = lm;
  shifted.xy.col(0).array() += 20.0;
  shifted.xy.col(1).array() += 15.0;
  const SegMask moved = landmarks_to_mask(shifted, 64, 64);
  Index agree = 0, face_pixels = 0;
  for (Index r = 0; r < 49; ++r)
    for (Index c = 0; c < 44; ++c) {
      if (base.labels(r, c) == moved.labels(r + 15, c + 20)) ++agree;
      if (base.labels(r, c) != 0) ++face_pixels;
    }
  CHECK(face_pixels > 200);
  CHECK(agree == 49 * 44);
}

TEST_CASE("normalize_face rescales the landmark box to the target height") {
  SynthParams params;
  params.canvas_size = 96;
  Rng rng(7);
  const FaceSample canvas = synth_face(params, rng);

  Rng prep(1);
  const FaceSample out =
      normalize_face(canvas.image, canvas.landmarks, 32, 0.0, prep);
  CHECK(out.image.height() == 32);
  CHECK(face_height(out.landmarks) == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(out.landmarks.bounding_box().min().y() == doctest::Approx(0.0).scale(1.0));
  CHECK(out.mask == landmarks_to_mask(out.landmarks, out.image.width(), out.image.height()));

  Rng prep2(1);
  const FaceSample again =
      normalize_face(canvas.image, canvas.landmarks, 32, 0.0, prep2);
  CHECK(again.image == out.image);

  Rng bad(2);
  CHECK_THROWS_AS((void)normalize_face(canvas.image, canvas.landmarks, 32, 0.5, bad),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)normalize_face(canvas.image, canvas.landmarks, 0, 0.0, bad),
                  std::invalid_argument);
}

TEST_CASE("crop jitter moves the crop window, not the face geometry") {
  SynthParams params;
  Rng rng(9);
  const FaceSample canvas = synth_face(params, rng);
  Rng prep(3);
  const FaceSample jittered =
      normalize_face(canvas.image, canvas.landmarks, 32, 0.2, prep);
  // Height normalization still holds; the box just sits off the origin.
  CHECK(face_height(jittered.landmarks) == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(jittered.landmarks.bounding_box().min().norm() > 1e-6);
}

TEST_CASE("fit_to_square centers the sample with an integer shift") {
  SynthParams params;
  Rng rng(11);
  const FaceSample canvas = synth_face(params, rng);
  Rng prep(1);
  const FaceSample norm = normalize_face(canvas.image, canvas.landmarks, 32, 0.0, prep);
  const FaceSample square = fit_to_square(norm, 48);

  CHECK(square.image.height() == 48);
  CHECK(square.image.width() == 48);
  const Point2 shift = square.landmarks.point(0) - norm.landmarks.point(0);
  CHECK(shift.x() == doctest::Approx(std::round(shift.x())).scale(1.0));
  CHECK(shift.y() == doctest::Approx(std::round(shift.y())).scale(1.0));
  CHECK(square.mask == landmarks_to_mask(square.landmarks, 48, 48));
  // Pixel content is shifted, not resampled.
  const Index dx = static_cast<Index>(std::lround(shift.x()));
  const Index dy = static_cast<Index>(std::lround(shift.y()));
  CHECK(square.image.planes[0](dy + 5, dx + 5) == norm.image.planes[0](5, 5));
}

TEST_CASE("occlusion augmentation zeroes one interior rectangle or nothing") {
  SynthParams params;
  Rng rng(13);
  const FaceSample face = synth_face(params, rng);

  Rng aug_off(1);
  const ImageRgb untouched = occlusion_augment(face.image, face.mask, 0.0, aug_off);
  CHECK(untouched == face.image);

  Rng aug_on(2);
  const ImageRgb occluded = occlusion_augment(face.image, face.mask, 1.0, aug_on);
  Index zeroed = 0;
  for (Index r = 0; r < face.image.height(); ++r)
    for (Index c = 0; c < face.image.width(); ++c) {
      const bool was_dark = face.image.planes[0](r, c) == 0.0f &&
                            face.image.planes[1](r, c) == 0.0f &&
                            face.image.planes[2](r, c) == 0.0f;
      const bool is_dark = occluded.planes[0](r, c) == 0.0f &&
                           occluded.planes[1](r, c) == 0.0f &&
                           occluded.planes[2](r, c) == 0.0f;
      if (is_dark && !was_dark) ++zeroed;
    }
  const double h = static_cast<double>(face.image.height());
  CHECK(zeroed > 0);
  CHECK(zeroed <= static_cast<Index>(0.4 * h + 1) * static_cast<Index>(0.4 * h + 1));

  Rng same_a(5), same_b(5);
  CHECK(occlusion_augment(face.image, face.mask, 0.7, same_a) ==
        occlusion_augment(face.image, face.mask, 0.7, same_b));

  Rng bad(1);
  CHECK_THROWS_AS((void)occlusion_augment(face.image, face.mask, 1.5, bad),
                  std::invalid_argument);
}

TEST_CASE("bilinear sampling interpolates and clamps at the border") {
  Grid<float> plane(2, 2);
  plane << 0.0f, 1.0f, 2.0f, 3.0f;
  CHECK(bilinear_sample(plane, 0.0, 0.0) == 0.0f);
  CHECK(bilinear_sample(plane, 1.0, 0.0) == 1.0f);
  CHECK(bilinear_sample(plane, 0.5, 0.0) == doctest::Approx(0.5));
  CHECK(bilinear_sample(plane, 0.5, 0.5) == doctest::Approx(1.5));
  CHECK(bilinear_sample(plane, -5.0, -5.0) == 0.0f);   // clamped to the corner
  CHECK(bilinear_sample(plane, 10.0, 10.0) == 3.0f);
}
