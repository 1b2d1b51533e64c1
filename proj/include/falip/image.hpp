#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "falip/tensor.hpp"

namespace falip {

/// Axis-aligned rectangle in pixel coordinates, half-open: [x0, x1) × [y0, y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Parses "x0,y0,x1,y1".
Box parse_box(const std::string& text);

using Rgb = std::array<float, 3>;

/// Interleaved RGB image with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width);  // black
  Image(std::size_t height, std::size_t width, std::vector<float> pixels);

  static Image filled(std::size_t height, std::size_t width, Rgb color);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  static constexpr std::size_t channels() noexcept { return 3; }

  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[(y * width_ + x) * 3 + c];
  }
  void set(std::size_t y, std::size_t x, Rgb color);

  std::span<const float> pixels() const noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

/// Binary P6, maxval 255. Throws FormatError on anything else.
Image load_ppm(std::span<const std::uint8_t> bytes);
Image load_ppm_file(const std::string& path);
/// Values are rounded to the nearest 8-bit level.
std::vector<std::uint8_t> encode_ppm(const Image& img);
void write_ppm_file(const std::string& path, const Image& img);

/// OpenAI CLIP normalization constants.
inline constexpr std::array<float, 3> kClipMean{0.48145466f, 0.4578275f, 0.40821073f};
inline constexpr std::array<float, 3> kClipStd{0.26862954f, 0.26130258f, 0.27577711f};

/// Bilinear resize (half-pixel centers, clamped edges).
Image resize_bilinear(const Image& img, std::size_t out_height, std::size_t out_width);

/// Resize to side×side and normalize per channel. Returns a [3, side, side]
/// channel-major tensor.
Tensor preprocess(const Image& img, std::size_t side);

/// Strokes the ellipse inscribed in `box`. A pixel inside the box (sampled at
/// its center) is painted iff |d − 1|·min(a, b) ≤ thickness/2, where d is the
/// normalized elliptical distance to the box center and a, b are the
/// semi-axes. Pixels outside the box are never touched.
Image draw_circle(const Image& img, const Box& box, Rgb color, int thickness);

/// Stroke width used by the red-circle baseline: max(2, 2% of the short side).
int default_circle_thickness(const Image& img);

/// Pixels whose centers fall outside `box` are replaced by the mean of the
/// (2r+1)² window around them, sampling with clamped edges. Pixels inside
/// the box keep their value.
Image blur_outside(const Image& img, const Box& box, int radius);

/// Whether the center of pixel (x, y) lies inside the box.
bool pixel_in_box(const Box& box, std::size_t x, std::size_t y);

}  // namespace falip
