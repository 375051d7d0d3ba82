#ifndef CASCADESEG_METRICS_HPP
#define CASCADESEG_METRICS_HPP

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/landmarks.hpp"
#include "cascadeseg/mask.hpp"

namespace cseg {

/// Per-class intersection over union for one image. A class with an empty
/// union (absent from both masks) has no defined IoU and is excluded from
/// the mean.
struct IoUReport {
  std::array<double, kNumClasses> iou{};
  std::array<bool, kNumClasses> defined{};

  double mean() const {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < kNumClasses; ++c)
      if (defined[static_cast<std::size_t>(c)]) {
        sum += iou[static_cast<std::size_t>(c)];
        ++n;
      }
    return n == 0 ? 0.0 : sum / n;
  }
};

inline IoUReport iou_per_class(const SegMask& pred, const SegMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw std::invalid_argument("iou_per_class: mask dimensions differ");
  validate_mask(pred);
  validate_mask(gt);

  std::array<long, kNumClasses> inter{}, uni{};
  for (Index i = 0; i < gt.height(); ++i)
    for (Index j = 0; j < gt.width(); ++j) {
      const int p = pred.labels(i, j), g = gt.labels(i, j);
      if (p == g) {
        ++inter[static_cast<std::size_t>(p)];
        ++uni[static_cast<std::size_t>(p)];
      } else {
        ++uni[static_cast<std::size_t>(p)];
        ++uni[static_cast<std::size_t>(g)];
      }
    }

  IoUReport r;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto i = static_cast<std::size_t>(c);
    r.defined[i] = uni[i] > 0;
    r.iou[i] = r.defined[i] ? static_cast<double>(inter[i]) / static_cast<double>(uni[i]) : 0.0;
  }
  return r;
}

inline double pixel_accuracy(const SegMask& pred, const SegMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw std::invalid_argument("pixel_accuracy: mask dimensions differ");
  long hits = 0;
  for (Index i = 0; i < gt.height(); ++i)
    for (Index j = 0; j < gt.width(); ++j)
      if (pred.at(i, j) == gt.at(i, j)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gt.height() * gt.width());
}

/// Mean point-to-point distance normalized by the outer-corner interocular
/// distance of the ground truth.
inline double landmark_error(const LandmarkSet& pred, const LandmarkSet& gt) {
  const double iod = interocular_distance(gt);
  if (!(iod > 0.0))
    throw std::invalid_argument("landmark_error: zero interocular distance in ground truth");
  double sum = 0.0;
  for (int k = 0; k < kNumLandmarks; ++k) sum += (pred.point(k) - gt.point(k)).norm();
  return sum / (kNumLandmarks * iod);
}

// ---------------------------------------------------------------------------
// Four-method comparison: per-class IoU means across a test set for the
// unguided baseline, the connected-landmarks baseline, guidance by detected
// landmarks, and guidance by ground-truth landmarks (the upper bound).
// ---------------------------------------------------------------------------

inline const std::array<std::string, 4>& method_names() {
  static const std::array<std::string, 4> names = {"unguided", "connected_landmarks",
                                                   "guided_detected", "guided_gt"};
  return names;
}

struct MethodComparison {
  struct Row {
    std::array<double, kNumClasses> class_mean{};
    std::array<bool, kNumClasses> class_defined{};
    double overall = 0.0;
  };
  std::map<std::string, Row> rows;
};

/// Aggregates per-image reports: class means are taken over the images where
/// the class is defined, the overall mean over the classes observed at all.
/// All four methods must be present, evaluated on the same number of images.
inline MethodComparison compare_methods(
    const std::map<std::string, std::vector<IoUReport>>& per_method) {
  if (per_method.size() != method_names().size())
    throw std::invalid_argument("compare_methods: expected exactly the four methods");
  std::size_t images = 0;
  for (const auto& name : method_names()) {
    auto it = per_method.find(name);
    if (it == per_method.end())
      throw std::invalid_argument("compare_methods: missing method " + name);
    if (it->second.empty()) throw std::invalid_argument("compare_methods: no reports for " + name);
    if (images == 0) images = it->second.size();
    if (it->second.size() != images)
      throw std::invalid_argument("compare_methods: methods saw different image counts");
  }

  MethodComparison cmp;
  for (const auto& name : method_names()) {
    const auto& reports = per_method.at(name);
    MethodComparison::Row row;
    for (int c = 0; c < kNumClasses; ++c) {
      const auto i = static_cast<std::size_t>(c);
      double sum = 0.0;
      long n = 0;
      for (const auto& r : reports)
        if (r.defined[i]) {
          sum += r.iou[i];
          ++n;
        }
      row.class_defined[i] = n > 0;
      row.class_mean[i] = n > 0 ? sum / n : 0.0;
    }
    double total = 0.0;
    int defined = 0;
    for (int c = 0; c < kNumClasses; ++c)
      if (row.class_defined[static_cast<std::size_t>(c)]) {
        total += row.class_mean[static_cast<std::size_t>(c)];
        ++defined;
      }
    row.overall = defined == 0 ? 0.0 : total / defined;
    cmp.rows[name] = row;
  }
  return cmp;
}

/// Writes the comparison as CSV: one row per (method, class) plus a summary
/// row per method with class "ALL". Fixed method order and fixed-precision
/// values keep byte-identical output for identical results.
inline void write_comparison_csv(const std::string& path, const MethodComparison& cmp) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_comparison_csv: cannot open " + path);
  os << "method,class,mean_iou\n";
  char buf[64];
  for (const auto& name : method_names()) {
    const auto& row = cmp.rows.at(name);
    for (int c = 0; c < kNumClasses; ++c) {
      std::snprintf(buf, sizeof(buf), "%.6f", row.class_mean[static_cast<std::size_t>(c)]);
      os << name << ',' << class_name(static_cast<ClassId>(c)) << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.6f", row.overall);
    os << name << ",ALL," << buf << '\n';
  }
  if (!os) throw std::runtime_error("write_comparison_csv: write failed for " + path);
}

}  // namespace cseg

#endif
