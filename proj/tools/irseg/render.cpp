#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <png.h>

#include "irseg/error.hpp"

namespace irseg::cli {
namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void no_flush(png_structp) {}

}  // namespace

std::string render_overlay_png(const TemperatureImage& frame, const LabelMask& mask) {
  require_same_shape(frame, mask, "overlay");
  const auto w = frame.width(), h = frame.height();
  if (w == 0 || h == 0) throw data_error("render.empty", "cannot render an empty frame");

  const auto [lo_it, hi_it] = std::minmax_element(frame.values().begin(), frame.values().end());
  const double lo = *lo_it, span = *hi_it - *lo_it;

  std::vector<png_byte> rgb(w * h * 3);
  for (std::size_t i = 0; i < w * h; ++i) {
    const double g = span > 0 ? 255.0 * (frame[i] - lo) / span : 0.0;
    const auto gray = static_cast<png_byte>(std::lround(std::clamp(g, 0.0, 255.0)));
    png_byte r = gray, gg = gray, b = gray;
    if (mask[i]) {
      r = static_cast<png_byte>((gray + 255) / 2);
      gg = static_cast<png_byte>(gray / 2);
      b = static_cast<png_byte>(gray / 2);
    }
    rgb[3 * i] = r;
    rgb[3 * i + 1] = gg;
    rgb[3 * i + 2] = b;
  }

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw data_error("render.png", "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw data_error("render.png", "png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = rgb.data() + r * w * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw data_error("render.png", "libpng failed while encoding");
  }
  png_set_write_fn(png, &out, append_bytes, no_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace irseg::cli
