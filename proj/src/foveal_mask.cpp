#include "falip/foveal_mask.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "falip/errors.hpp"

namespace falip {

LayerRange LayerRange::last_n(int layers, int n) {
  return LayerRange{std::max(1, layers - n + 1), layers};
}

LayerRange parse_layer_range(const std::string& text) {
  if (text == "none" || text.empty()) return LayerRange::none();
  std::istringstream is(text);
  int a = 0, b = 0;
  if (!(is >> a)) throw ArgumentError("layer range: expected 'a-b', got '" + text + "'");
  if (is.peek() == '-') {
    is.get();
    if (!(is >> b)) throw ArgumentError("layer range: expected 'a-b', got '" + text + "'");
  } else {
    b = a;
  }
  if (!is.eof()) throw ArgumentError("layer range: trailing characters in '" + text + "'");
  if (a < 1 || b < a) throw ArgumentError("layer range: need 1 <= a <= b, got '" + text + "'");
  return LayerRange{a, b};
}

std::string format_layer_range(const LayerRange& range) {
  if (range.empty()) return "none";
  return std::to_string(range.first) + "-" + std::to_string(range.last);
}

MaskForm parse_mask_form(const std::string& text) {
  if (text == "a" || text == "A") return MaskForm::A;
  if (text == "b" || text == "B") return MaskForm::B;
  if (text == "c" || text == "C") return MaskForm::C;
  throw ArgumentError("mask form must be a, b or c, got '" + text + "'");
}

char mask_form_char(MaskForm form) {
  switch (form) {
    case MaskForm::A: return 'a';
    case MaskForm::B: return 'b';
    case MaskForm::C: return 'c';
  }
  return '?';
}

LayerRange MaskParams::resolve_layers(int encoder_layers) const {
  const LayerRange r = insert_layers.value_or(LayerRange::last_n(encoder_layers));
  if (!r.empty() && (r.first < 1 || r.last > encoder_layers)) {
    throw ArgumentError("insert layers " + format_layer_range(r) + " outside [1, " +
                        std::to_string(encoder_layers) + "]");
  }
  return r;
}

Roa make_roa(std::size_t grid_side, std::vector<std::size_t> tokens) {
  if (tokens.empty()) throw EmptyRoaError("roa: no tokens selected");
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  if (tokens.back() >= grid_side * grid_side) throw ArgumentError("roa: token index out of range");
  std::size_t r0 = grid_side, r1 = 0, c0 = grid_side, c1 = 0;
  for (auto t : tokens) {
    r0 = std::min(r0, t / grid_side);
    r1 = std::max(r1, t / grid_side);
    c0 = std::min(c0, t % grid_side);
    c1 = std::max(c1, t % grid_side);
  }
  return Roa{std::move(tokens), grid_side, r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

Roa box_to_roa(const Box& box, std::size_t image_side, std::size_t patch) {
  if (patch == 0 || image_side % patch != 0) {
    throw ArgumentError("box_to_roa: image side must be divisible by patch size");
  }
  const std::size_t g = image_side / patch;
  std::vector<std::size_t> tokens;
  for (std::size_t r = 0; r < g; ++r) {
    const double py0 = static_cast<double>(r * patch), py1 = static_cast<double>((r + 1) * patch);
    const double oy = std::min(box.y1, py1) - std::max(box.y0, py0);
    if (!(oy > 0.0)) continue;
    for (std::size_t c = 0; c < g; ++c) {
      const double px0 = static_cast<double>(c * patch), px1 = static_cast<double>((c + 1) * patch);
      const double ox = std::min(box.x1, px1) - std::max(box.x0, px0);
      if (ox > 0.0) tokens.push_back(r * g + c);
    }
  }
  if (tokens.empty()) throw EmptyRoaError("box_to_roa: box does not overlap the image");
  return make_roa(g, std::move(tokens));
}

Tensor gaussian_grid(std::size_t h, std::size_t w, float sigma) {
  if (h < 1 || w < 1) throw ArgumentError("gaussian_grid: extents must be >= 1");
  if (!(sigma > 0.0f)) throw ArgumentError("gaussian_grid: sigma must be positive");
  Tensor out({h, w});
  const double ci = (static_cast<double>(h) - 1.0) / 2.0;
  const double cj = (static_cast<double>(w) - 1.0) / 2.0;
  const double two_s2 = 2.0 * static_cast<double>(sigma) * sigma;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
      out(i, j) = static_cast<float>(std::exp(-(di * di + dj * dj) / two_s2));
    }
  return out;
}

Tensor normalize_grid(const Tensor& grid, float alpha, float eps) {
  if (!(eps > 0.0f)) throw ArgumentError("normalize_grid: eps must be positive");
  if (!(alpha >= 0.0f) || !std::isfinite(alpha)) {
    throw ArgumentError("normalize_grid: alpha must be finite and >= 0");
  }
  if (grid.numel() == 0) return grid;
  const auto [lo_it, hi_it] = std::minmax_element(grid.data().begin(), grid.data().end());
  const double lo = *lo_it, hi = *hi_it;
  const double denom = hi - lo + eps;
  Tensor out(grid.shape());
  for (std::size_t i = 0; i < grid.numel(); ++i) {
    out[i] = static_cast<float>(alpha * ((grid[i] - lo + eps) / denom));
  }
  return out;
}

FovealMask assemble_mask(const Tensor& norm_grid, const Roa& roa, std::size_t n_tokens,
                         MaskForm form) {
  if (norm_grid.rank() != 2 || norm_grid.rows() != roa.grid_h || norm_grid.cols() != roa.grid_w) {
    throw ShapeError("assemble_mask: grid extent " + shape_str(norm_grid.shape()) +
                        " does not match roa " + std::to_string(roa.grid_h) + "x" +
                        std::to_string(roa.grid_w));
  }
  if (n_tokens != roa.n_tokens()) {
    throw ArgumentError("assemble_mask: roa grid has " + std::to_string(roa.n_tokens()) +
                        " tokens, encoder has " + std::to_string(n_tokens));
  }
  const std::size_t n = n_tokens + 1;
  Tensor m({n, n});
  for (auto t : roa.token_indices) {
    const float v = norm_grid(t / roa.grid_side - roa.origin_row, t % roa.grid_side - roa.origin_col);
    const std::size_t col = t + 1;
    switch (form) {
      case MaskForm::A: m(0, col) = v; break;
      case MaskForm::B:
        for (std::size_t r = 0; r < n; ++r) m(r, col) = v;
        break;
      case MaskForm::C: m(col, col) = v; break;
    }
  }
  MaskParams params;
  params.form = form;
  return FovealMask{std::move(m), params, roa};
}

FovealMask build_foveal_mask(const Roa& roa, const MaskParams& params) {
  const Tensor grid = normalize_grid(gaussian_grid(roa.grid_h, roa.grid_w, params.sigma),
                                     params.alpha, params.eps);
  FovealMask mask = assemble_mask(grid, roa, roa.n_tokens(), params.form);
  mask.params = params;
  return mask;
}

std::vector<float> roa_token_weights(const Roa& roa, const MaskParams& params) {
  const Tensor grid = normalize_grid(gaussian_grid(roa.grid_h, roa.grid_w, params.sigma),
                                     params.alpha, params.eps);
  std::vector<float> w(roa.n_tokens(), 0.0f);
  for (auto t : roa.token_indices) {
    w[t] = grid(t / roa.grid_side - roa.origin_row, t % roa.grid_side - roa.origin_col);
  }
  return w;
}

}  // namespace falip
