#include "lighthcg/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace lighthcg::img {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image file: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unreadable image: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  int channels = png_get_channels(png, info);
  Image im;
  im.height = static_cast<int>(h);
  im.width = static_cast<int>(w);
  im.channels = channels;
  im.data.resize(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(h);
  size_t stride = static_cast<size_t>(w) * channels;
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = im.data.data() + r * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_png(const std::string& path, const Image& im) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write image file: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failure: " + path);
  }
  png_init_io(png, fp.get());
  int color = im.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  if (im.channels != 1 && im.channels != 3)
    throw std::runtime_error("write_png: unsupported channel count");
  png_set_IHDR(png, info, im.width, im.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  size_t stride = static_cast<size_t>(im.width) * im.channels;
  std::vector<png_bytep> rows(im.height);
  for (int r = 0; r < im.height; ++r)
    rows[r] = const_cast<png_bytep>(im.data.data() + r * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image from_unit(const Eigen::RowVectorXd& pixels, int h, int w, int c) {
  Image im;
  im.height = h;
  im.width = w;
  im.channels = c;
  im.data.resize(static_cast<size_t>(h) * w * c);
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    double v = std::min(1.0, std::max(0.0, pixels(i)));
    im.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return im;
}

Eigen::RowVectorXd to_unit(const Image& im) {
  Eigen::RowVectorXd out(im.data.size());
  for (size_t i = 0; i < im.data.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = im.data[i] / 255.0;
  return out;
}

Image resize(const Image& im, int out_h, int out_w) {
  if (im.height == out_h && im.width == out_w) return im;
  Image out;
  out.height = out_h;
  out.width = out_w;
  out.channels = im.channels;
  out.data.resize(static_cast<size_t>(out_h) * out_w * im.channels);
  double sy = static_cast<double>(im.height) / out_h;
  double sx = static_cast<double>(im.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = std::max(0, std::min(im.height - 1, (int)std::floor(fy)));
    int y1 = std::min(im.height - 1, y0 + 1);
    double wy = fy - y0;
    wy = std::min(1.0, std::max(0.0, wy));
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = std::max(0, std::min(im.width - 1, (int)std::floor(fx)));
      int x1 = std::min(im.width - 1, x0 + 1);
      double wx = fx - x0;
      wx = std::min(1.0, std::max(0.0, wx));
      for (int c = 0; c < im.channels; ++c) {
        auto at = [&](int yy, int xx) {
          return static_cast<double>(
              im.data[(static_cast<size_t>(yy) * im.width + xx) * im.channels +
                      c]);
        };
        double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                   wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        out.data[(static_cast<size_t>(y) * out_w + x) * im.channels + c] =
            static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

}  // namespace lighthcg::img
