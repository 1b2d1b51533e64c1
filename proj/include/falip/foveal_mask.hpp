#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "falip/image.hpp"
#include "falip/tensor.hpp"

namespace falip {

/// Inclusive 1-based range of transformer layers. `first > last` is empty.
struct LayerRange {
  int first = 1;
  int last = 0;

  bool empty() const { return first > last; }
  bool contains(int layer) const { return layer >= first && layer <= last; }
  /// The last `n` layers of an `layers`-deep encoder, clamped at layer 1.
  static LayerRange last_n(int layers, int n = 4);
  static LayerRange none() { return LayerRange{1, 0}; }

  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Parses "a-b", "a" or "none".
LayerRange parse_layer_range(const std::string& text);
std::string format_layer_range(const LayerRange& range);

/// Where the normalized grid values land in M:
///   A  row 0 only (CLS query row)
///   B  every row
///   C  the diagonal
enum class MaskForm { A, B, C };

MaskForm parse_mask_form(const std::string& text);
char mask_form_char(MaskForm form);

struct MaskParams {
  float alpha = 0.2f;
  float sigma = 100.0f;
  float eps = 1e-6f;
  MaskForm form = MaskForm::A;
  /// Unset means the last four layers of whatever encoder the mask is
  /// applied to.
  std::optional<LayerRange> insert_layers;

  LayerRange resolve_layers(int encoder_layers) const;
};

/// Region of attention in token space.
///
/// Tokens are numbered row-major over a grid_side×grid_side patch grid. The
/// bounding rectangle [origin_row, origin_row+grid_h) × [origin_col,
/// origin_col+grid_w) encloses every index; indices are strictly increasing.
struct Roa {
  std::vector<std::size_t> token_indices;
  std::size_t grid_side = 0;
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  bool empty() const { return token_indices.empty(); }
  std::size_t n_tokens() const { return grid_side * grid_side; }
};

/// Builds a Roa from an arbitrary token set; sorts and deduplicates.
/// Throws EmptyRoaError when `tokens` is empty.
Roa make_roa(std::size_t grid_side, std::vector<std::size_t> tokens);

/// Tokens whose patch rectangle overlaps `box` with positive area.
/// `box` is in pixels of the side×side model input.
Roa box_to_roa(const Box& box, std::size_t image_side, std::size_t patch);

/// R[i][j] = exp(−((i − (h−1)/2)² + (j − (w−1)/2)²) / 2σ²).
Tensor gaussian_grid(std::size_t h, std::size_t w, float sigma);

/// α·(R − min R + ε)/(max R − min R + ε).
Tensor normalize_grid(const Tensor& grid, float alpha, float eps);

/// The (N+1)×(N+1) additive attention bias and what produced it.
struct FovealMask {
  Tensor m;
  MaskParams params;
  Roa roa;

  std::size_t n_tokens() const { return m.rows() - 1; }
};

/// Scatters `norm_grid` (extent grid_h×grid_w) into M for an encoder with
/// `n_tokens` patch tokens. Token t maps to column t+1; index 0 is CLS.
FovealMask assemble_mask(const Tensor& norm_grid, const Roa& roa, std::size_t n_tokens,
                         MaskForm form);

/// gaussian_grid → normalize_grid → assemble_mask with `params`.
FovealMask build_foveal_mask(const Roa& roa, const MaskParams& params);

/// Per-token values of the normalized grid, (N) long, zero outside the ROA.
/// Used by the feature-mask baseline.
std::vector<float> roa_token_weights(const Roa& roa, const MaskParams& params);

}  // namespace falip
