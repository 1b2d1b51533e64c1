#include "falip/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "falip/errors.hpp"

namespace falip {

Box parse_box(const std::string& text) {
  std::array<double, 4> v{};
  std::istringstream is(text);
  for (int i = 0; i < 4; ++i) {
    if (!(is >> v[i])) throw ArgumentError("box: expected x0,y0,x1,y1, got '" + text + "'");
    if (i < 3) {
      char comma = 0;
      if (!(is >> comma) || comma != ',') {
        throw ArgumentError("box: expected x0,y0,x1,y1, got '" + text + "'");
      }
    }
  }
  is >> std::ws;
  if (!is.eof()) throw ArgumentError("box: trailing characters in '" + text + "'");
  return Box{v[0], v[1], v[2], v[3]};
}

Image::Image(std::size_t height, std::size_t width)
    : height_(height), width_(width), pixels_(height * width * 3, 0.0f) {}

Image::Image(std::size_t height, std::size_t width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != height * width * 3) {
    throw ShapeError("image: pixel buffer does not match " + std::to_string(height) + "x" +
                     std::to_string(width) + "x3");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ArgumentError("image: pixel value outside [0,1]");
  }
}

Image Image::filled(std::size_t height, std::size_t width, Rgb color) {
  Image img(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) img.set(y, x, color);
  return img;
}

void Image::set(std::size_t y, std::size_t x, Rgb color) {
  float* p = &pixels_[(y * width_ + x) * 3];
  for (std::size_t c = 0; c < 3; ++c) p[c] = std::clamp(color[c], 0.0f, 1.0f);
}

// ---------------------------------------------------------------- PPM

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000UL) throw FormatError(std::string("ppm: ") + what + " too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("ppm: missing ") + what);
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image load_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 3 || bytes[0] != 'P' || bytes[1] != '6' || !std::isspace(bytes[2])) {
    throw FormatError("ppm: not a binary P6 file");
  }
  HeaderReader rd(bytes.subspan(2));
  const auto width = rd.number("width");
  const auto height = rd.number("height");
  const auto maxval = rd.number("maxval");
  if (width == 0 || height == 0) throw FormatError("ppm: zero image dimension");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  std::size_t pos = rd.pos() + 2;
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("ppm: missing whitespace after maxval");
  }
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos < need) throw FormatError("ppm: truncated pixel data");
  std::vector<float> px(need);
  for (std::size_t i = 0; i < need; ++i) px[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return Image(height, width, std::move(px));
}

Image load_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("ppm: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_ppm(bytes);
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.pixels().size());
  for (float v : img.pixels()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return out;
}

void write_ppm_file(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("ppm: cannot write " + path);
  const auto bytes = encode_ppm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- resampling

namespace {

struct Tap {
  std::size_t lo, hi;
  float frac;  // weight of `hi`
};

Tap bilinear_tap(std::size_t out_index, std::size_t in_size, std::size_t out_size) {
  const double src = (static_cast<double>(out_index) + 0.5) * static_cast<double>(in_size) /
                         static_cast<double>(out_size) - 0.5;
  const double clamped = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
  const auto lo = static_cast<std::size_t>(std::floor(clamped));
  const std::size_t hi = std::min(lo + 1, in_size - 1);
  return Tap{lo, hi, static_cast<float>(clamped - static_cast<double>(lo))};
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) throw ArgumentError("resize: zero output size");
  if (img.height() == out_height && img.width() == out_width) return img;
  std::vector<float> px(out_height * out_width * 3);
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap ty = bilinear_tap(y, img.height(), out_height);
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap tx = bilinear_tap(x, img.width(), out_width);
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = img.at(ty.lo, tx.lo, c) * (1.0f - tx.frac) + img.at(ty.lo, tx.hi, c) * tx.frac;
        const float bot = img.at(ty.hi, tx.lo, c) * (1.0f - tx.frac) + img.at(ty.hi, tx.hi, c) * tx.frac;
        px[(y * out_width + x) * 3 + c] = std::clamp(top * (1.0f - ty.frac) + bot * ty.frac, 0.0f, 1.0f);
      }
    }
  }
  return Image(out_height, out_width, std::move(px));
}

Tensor preprocess(const Image& img, std::size_t side) {
  if (side == 0) throw ArgumentError("preprocess: side must be positive");
  const Image sized = resize_bilinear(img, side, side);
  Tensor out({3, side, side});
  auto dst = out.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        dst[(c * side + y) * side + x] = (sized.at(y, x, c) - kClipMean[c]) / kClipStd[c];
  return out;
}

// ---------------------------------------------------------------- visual prompts

bool pixel_in_box(const Box& box, std::size_t x, std::size_t y) {
  const double cx = static_cast<double>(x) + 0.5;
  const double cy = static_cast<double>(y) + 0.5;
  return cx >= box.x0 && cx < box.x1 && cy >= box.y0 && cy < box.y1;
}

int default_circle_thickness(const Image& img) {
  const auto short_side = static_cast<double>(std::min(img.height(), img.width()));
  return std::max(2, static_cast<int>(std::lround(0.02 * short_side)));
}

Image draw_circle(const Image& img, const Box& box, Rgb color, int thickness) {
  if (thickness < 1) throw ArgumentError("draw_circle: thickness must be >= 1");
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
    throw ArgumentError("draw_circle: degenerate box");
  }
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > static_cast<double>(img.width()) ||
      box.y1 > static_cast<double>(img.height())) {
    throw ArgumentError("draw_circle: box exceeds image bounds");
  }
  Image out = img;
  const double a = box.width() / 2.0, b = box.height() / 2.0;
  const double cx = box.x0 + a, cy = box.y0 + b;
  const double half = thickness / 2.0;
  const double r = std::min(a, b);
  const auto xs = static_cast<std::size_t>(std::floor(box.x0));
  const auto ys = static_cast<std::size_t>(std::floor(box.y0));
  for (std::size_t y = ys; y < img.height() && static_cast<double>(y) < box.y1; ++y) {
    for (std::size_t x = xs; x < img.width() && static_cast<double>(x) < box.x1; ++x) {
      if (!pixel_in_box(box, x, y)) continue;
      const double dx = (static_cast<double>(x) + 0.5 - cx) / a;
      const double dy = (static_cast<double>(y) + 0.5 - cy) / b;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (std::abs(d - 1.0) * r <= half) out.set(y, x, color);
    }
  }
  return out;
}

Image blur_outside(const Image& img, const Box& box, int radius) {
  if (radius < 1) throw ArgumentError("blur_outside: radius must be >= 1");
  const std::size_t h = img.height(), w = img.width();
  const auto rad = static_cast<std::ptrdiff_t>(radius);
  const float denom = static_cast<float>((2 * radius + 1) * (2 * radius + 1));
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  // Separable pass: clamping is per-axis, so horizontal-then-vertical window
  // sums equal the clamped 2-D window sum.
  std::vector<float> horiz(h * w * 3, 0.0f);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float s = 0.0f;
        for (std::ptrdiff_t k = -rad; k <= rad; ++k)
          s += img.at(y, clampi(static_cast<std::ptrdiff_t>(x) + k, w), c);
        horiz[(y * w + x) * 3 + c] = s;
      }
  std::vector<float> px(img.pixels().begin(), img.pixels().end());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (pixel_in_box(box, x, y)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        float s = 0.0f;
        for (std::ptrdiff_t k = -rad; k <= rad; ++k)
          s += horiz[(clampi(static_cast<std::ptrdiff_t>(y) + k, h) * w + x) * 3 + c];
        px[(y * w + x) * 3 + c] = std::clamp(s / denom, 0.0f, 1.0f);
      }
    }
  return Image(h, w, std::move(px));
}

}  // namespace falip
