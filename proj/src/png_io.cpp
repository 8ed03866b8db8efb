#include "incdet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace incdet {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr std::array<std::array<double, 3>, 9> kPalette = {{
    {0.95, 0.30, 0.25},
    {0.25, 0.85, 0.35},
    {0.30, 0.50, 0.98},
    {0.95, 0.80, 0.20},
    {0.80, 0.35, 0.90},
    {0.25, 0.85, 0.85},
    {0.98, 0.55, 0.15},
    {0.60, 0.90, 0.30},
    {0.90, 0.40, 0.60},
}};

// 3x5 digit glyphs, row-major bits (left-to-right from the high bit)
constexpr std::array<std::array<std::uint8_t, 5>, 11> kGlyphs = {{
    {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
    {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
    {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
    {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
    {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
    {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
    {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
    {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
    {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
    {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
    {0b000, 0b000, 0b000, 0b000, 0b010},  // .
}};

void put_pixel(Tensor& img, int x, int y, const std::array<double, 3>& c) {
  const int h = img.dim(1), w = img.dim(2);
  if (x < 0 || x >= w || y < 0 || y >= h) return;
  for (int ch = 0; ch < 3; ++ch)
    img.data()[(static_cast<std::int64_t>(ch) * h + y) * w + x] = c[ch];
}

void draw_rect(Tensor& img, int x1, int y1, int x2, int y2,
               const std::array<double, 3>& c) {
  for (int x = x1; x <= x2; ++x) {
    put_pixel(img, x, y1, c);
    put_pixel(img, x, y2, c);
  }
  for (int y = y1; y <= y2; ++y) {
    put_pixel(img, x1, y, c);
    put_pixel(img, x2, y, c);
  }
}

void draw_glyph(Tensor& img, int gx, int gy, int glyph,
                const std::array<double, 3>& c) {
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 3; ++col)
      if (kGlyphs[glyph][row] & (0b100 >> col))
        put_pixel(img, gx + col, gy + row, c);
}

void draw_score(Tensor& img, int x, int y, double score,
                const std::array<double, 3>& c) {
  // fixed format 0.NN
  const int hundredths = std::clamp(static_cast<int>(std::lround(score * 100)), 0, 99);
  const int glyphs[4] = {score >= 0.995 ? 1 : 0, 10, hundredths / 10,
                         hundredths % 10};
  for (int i = 0; i < 4; ++i) draw_glyph(img, x + 4 * i, y, glyphs[i], c);
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("write_png: image must be [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng error writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v =
            image.data()[(static_cast<std::int64_t>(c) * h + y) * w + x];
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(
            std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw std::runtime_error("read_png: not a PNG file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng error reading " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));

  // normalize any color type to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: unsupported layout in " + path);
  }

  Tensor out = Tensor::zeros({3, h, w});
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.data()[(static_cast<std::int64_t>(c) * h + y) * w + x] =
            row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Tensor annotate_detections(const Tensor& image,
                           const std::vector<Detection>& detections) {
  Tensor out = image.clone();
  const int h = out.dim(1), w = out.dim(2);
  for (const auto& d : detections) {
    const auto& color = kPalette[static_cast<std::size_t>(d.class_id) % kPalette.size()];
    const int x1 = std::clamp(static_cast<int>(std::lround(d.x1)), 0, w - 1);
    const int y1 = std::clamp(static_cast<int>(std::lround(d.y1)), 0, h - 1);
    const int x2 = std::clamp(static_cast<int>(std::lround(d.x2)), 0, w - 1);
    const int y2 = std::clamp(static_cast<int>(std::lround(d.y2)), 0, h - 1);
    draw_rect(out, x1, y1, x2, y2, color);
    draw_score(out, x1 + 2, std::max(0, y1 - 6), d.score, color);
  }
  return out;
}

}  // namespace incdet
