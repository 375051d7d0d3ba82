#ifndef CASCADESEG_PNGIO_HPP
#define CASCADESEG_PNGIO_HPP

#include <string>

#include "cascadeseg/image.hpp"
#include "cascadeseg/mask.hpp"

namespace cseg {

/// Label masks travel as 8-bit grayscale PNG with the raw class ids 0..7 as
/// pixel values; save/load round-trips are bit exact.
void save_mask_png(const std::string& path, const SegMask& mask);
SegMask load_mask_png(const std::string& path);

/// 8-bit RGB images; float planes in [0,1] are quantized on save and mapped
/// back to [0,1] on load. Grayscale, palette, 16-bit and alpha inputs are
/// converted to RGB8 on load.
void save_image_png(const std::string& path, const ImageRgb& image);
ImageRgb load_image_png(const std::string& path);

/// Debug rendering of a mask with one fixed color per class.
void save_mask_visualization_png(const std::string& path, const SegMask& mask);

}  // namespace cseg

#endif
