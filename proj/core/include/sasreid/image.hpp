#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace sasreid {

/// Interleaved RGB image with channels in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h * w * 3), fill) {}

  float& at(int y, int x, int c) { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  float at(int y, int x, int c) const { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }

  friend bool operator==(const Image&, const Image&) = default;
};

using Rgb = std::array<double, 3>;
using Hsv = std::array<double, 3>;  // hue in [0, 1), saturation, value

Hsv rgb_to_hsv(const Rgb& rgb);
Rgb hsv_to_rgb(const Hsv& hsv);

/// Rounds every channel to the nearest multiple of 1/255 so that an image
/// survives an 8-bit round trip unchanged.
void quantize(Image& img);

/// Binary portable pixmap (P6, maxval 255).
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace sasreid
