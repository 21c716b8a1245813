#include "darthkit/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "darthkit/errors.hpp"

namespace darthkit {

Image pad_to_multiple(const Image& img, int divisor) {
  if (divisor <= 1) return img;
  const int w = (img.width + divisor - 1) / divisor * divisor;
  const int h = (img.height + divisor - 1) / divisor * divisor;
  if (w == img.width && h == img.height) return img;
  Image out(w, h, img.channels, 0);
  for (int y = 0; y < img.height; ++y) {
    const auto* src = &img.data[static_cast<std::size_t>(y) * img.width * img.channels];
    std::copy(src, src + static_cast<std::size_t>(img.width) * img.channels,
              &out.data[static_cast<std::size_t>(y) * w * img.channels]);
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int c = png_get_channels(png, info);
  Image img(w, h, c);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = &img.data[static_cast<std::size_t>(y) * w * c];
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) throw IoError("write_png: unsupported channel count");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&img.data[static_cast<std::size_t>(y) * img.width * img.channels]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace darthkit
