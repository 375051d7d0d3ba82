#include "cascadeseg/pngio.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace cseg {

namespace {

struct FileHandle {
  std::FILE* fp = nullptr;
  explicit FileHandle(const std::string& path, const char* mode)
      : fp(std::fopen(path.c_str(), mode)) {}
  ~FileHandle() {
    if (fp) std::fclose(fp);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

void write_rows(const std::string& path, Index width, Index height, int color_type,
                const std::vector<png_bytep>& rows) {
  FileHandle file(path, "wb");
  if (!file.fp) throw std::runtime_error("png: cannot open " + path + " for writing");
  PngWriter w;
  if (!w.png || !w.info) throw std::runtime_error("png: writer allocation failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("png: write failed for " + path);
  png_init_io(w.png, file.fp);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

}  // namespace

void save_mask_png(const std::string& path, const SegMask& mask) {
  validate_mask(mask);
  std::vector<png_bytep> rows(static_cast<std::size_t>(mask.height()));
  for (Index r = 0; r < mask.height(); ++r)
    rows[static_cast<std::size_t>(r)] =
        const_cast<png_bytep>(mask.labels.data() + r * mask.width());
  write_rows(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, rows);
}

SegMask load_mask_png(const std::string& path) {
  FileHandle file(path, "rb");
  if (!file.fp) throw std::runtime_error("png: cannot open " + path);
  PngReader r;
  if (!r.png || !r.info) throw std::runtime_error("png: reader allocation failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: read failed for " + path);
  png_init_io(r.png, file.fp);
  png_read_info(r.png, r.info);

  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 8)
    throw std::runtime_error("png: " + path + " is not an 8-bit grayscale label mask");

  const Index height = static_cast<Index>(png_get_image_height(r.png, r.info));
  const Index width = static_cast<Index>(png_get_image_width(r.png, r.info));
  SegMask mask(height, width);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Index i = 0; i < height; ++i)
    rows[static_cast<std::size_t>(i)] = mask.labels.data() + i * width;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  validate_mask(mask);
  return mask;
}

void save_image_png(const std::string& path, const ImageRgb& image) {
  const Index h = image.height(), w = image.width();
  std::vector<png_byte> buffer(static_cast<std::size_t>(h * w * 3));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) {
        const float v = image.planes[static_cast<std::size_t>(c)](i, j);
        const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        buffer[static_cast<std::size_t>((i * w + j) * 3 + c)] =
            static_cast<png_byte>(std::lround(clamped * 255.0f));
      }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (Index i = 0; i < h; ++i)
    rows[static_cast<std::size_t>(i)] = buffer.data() + i * w * 3;
  write_rows(path, w, h, PNG_COLOR_TYPE_RGB, rows);
}

ImageRgb load_image_png(const std::string& path) {
  FileHandle file(path, "rb");
  if (!file.fp) throw std::runtime_error("png: cannot open " + path);
  PngReader r;
  if (!r.png || !r.info) throw std::runtime_error("png: reader allocation failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: read failed for " + path);
  png_init_io(r.png, file.fp);
  png_read_info(r.png, r.info);

  // Fold every input variant down to RGB8.
  const png_byte color_type = png_get_color_type(r.png, r.info);
  const png_byte bit_depth = png_get_bit_depth(r.png, r.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (bit_depth == 16) png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);
  if (png_get_bit_depth(r.png, r.info) != 8 ||
      png_get_channels(r.png, r.info) != 3)
    throw std::runtime_error("png: cannot normalize " + path + " to RGB8");

  const Index height = static_cast<Index>(png_get_image_height(r.png, r.info));
  const Index width = static_cast<Index>(png_get_image_width(r.png, r.info));
  std::vector<png_byte> buffer(static_cast<std::size_t>(height * width * 3));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Index i = 0; i < height; ++i)
    rows[static_cast<std::size_t>(i)] = buffer.data() + i * width * 3;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  ImageRgb image(height, width);
  for (Index i = 0; i < height; ++i)
    for (Index j = 0; j < width; ++j)
      for (int c = 0; c < 3; ++c)
        image.planes[static_cast<std::size_t>(c)](i, j) =
            static_cast<float>(buffer[static_cast<std::size_t>((i * width + j) * 3 + c)]) /
            255.0f;
  return image;
}

void save_mask_visualization_png(const std::string& path, const SegMask& mask) {
  validate_mask(mask);
  static const png_byte palette[kNumClasses][3] = {
      {0, 0, 0},     {128, 0, 0},   {0, 128, 0},   {128, 128, 0},
      {0, 0, 128},   {128, 0, 128}, {0, 128, 128}, {128, 128, 128}};
  const Index h = mask.height(), w = mask.width();
  std::vector<png_byte> buffer(static_cast<std::size_t>(h * w * 3));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        buffer[static_cast<std::size_t>((i * w + j) * 3 + c)] = palette[mask.labels(i, j)][c];
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (Index i = 0; i < h; ++i)
    rows[static_cast<std::size_t>(i)] = buffer.data() + i * w * 3;
  write_rows(path, w, h, PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace cseg
