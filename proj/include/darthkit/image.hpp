#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace darthkit {

/// 8-bit interleaved image, row-major HWC, RGB channel order.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const noexcept { return width <= 0 || height <= 0 || data.empty(); }

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Zero-pads on the bottom/right so both dimensions are multiples of `divisor`.
Image pad_to_multiple(const Image& img, int divisor);

/// PNG round trip (8-bit gray, RGB). Writes carry no timestamp chunks, so equal
/// images produce equal bytes.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);

}  // namespace darthkit
