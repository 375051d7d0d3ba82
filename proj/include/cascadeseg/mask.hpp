#ifndef CASCADESEG_MASK_HPP
#define CASCADESEG_MASK_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cascadeseg/common.hpp"

namespace cseg {

enum class ClassId : std::uint8_t {
  background = 0,
  skin = 1,
  eyebrows = 2,
  eyes = 3,
  nose = 4,
  upper_lip = 5,
  inner_mouth = 6,
  lower_lip = 7,
};

inline constexpr int kNumClasses = 8;

inline const char* class_name(ClassId c) {
  static constexpr std::array<const char*, kNumClasses> names = {
      "background", "skin", "eyebrows", "eyes", "nose", "upper_lip", "inner_mouth", "lower_lip"};
  return names[static_cast<int>(c)];
}

/// Per-pixel part labels, row-major, values 0..7.
struct SegMask {
  Grid<std::uint8_t> labels;

  SegMask() = default;
  SegMask(Index height, Index width) : labels(Grid<std::uint8_t>::Zero(height, width)) {}

  Index height() const { return labels.rows(); }
  Index width() const { return labels.cols(); }

  ClassId at(Index row, Index col) const { return static_cast<ClassId>(labels(row, col)); }

  std::array<Index, kNumClasses> histogram() const {
    std::array<Index, kNumClasses> h{};
    for (Index r = 0; r < labels.rows(); ++r)
      for (Index c = 0; c < labels.cols(); ++c) h[labels(r, c)]++;
    return h;
  }

  bool operator==(const SegMask& o) const {
    return labels.rows() == o.labels.rows() && labels.cols() == o.labels.cols() &&
           (labels == o.labels).all();
  }
};

inline void validate_mask(const SegMask& m) {
  if ((m.labels >= kNumClasses).any())
    throw std::invalid_argument("mask contains label outside [0,7]");
}

}  // namespace cseg

#endif
