#pragma once

#include <string>
#include <vector>

#include "falip/encoder.hpp"

namespace falip {

/// G_h for one (layer, head): the CLS row of that head's share of the MSA
/// output,
///
///   G_h = Σ_i γ_i^h · (LN(x_i)·W_V^h + b_V^h) · W_O^h + b_O / H
///
/// where W_O^h is the head's row slice of the output projection. Folding
/// W_O^h (and an even share of b_O) in makes Σ_h G_h equal the traced MSA
/// CLS output.
struct HeadContribution {
  int layer = 0;  // 1-based
  int head = 0;   // 0-based
  Tensor g;       // [D]
};

/// p_{i,h} rows for one head, [tokens × D]; rows sum to G_h minus the b_O share.
Tensor token_contributions(const RunTrace& trace, const VisionWeights& w, int layer, int head);

std::vector<HeadContribution> decompose(const RunTrace& trace, const VisionWeights& w, int layer);

/// Σ_h G_h for a layer.
Tensor sum_heads(const std::vector<HeadContribution>& heads);

struct HeadDelta {
  int layer = 0;
  int head = 0;
  Tensor delta;  // G'_h − G_h
  double magnitude = 0.0;
  int rank = 0;  // 1 = largest magnitude
};

struct DeltaReport {
  /// Ordered by (layer, head).
  std::vector<HeadDelta> entries;
  /// Indices into `entries`, by descending magnitude, ties by (layer, head).
  std::vector<std::size_t> ranking;
};

DeltaReport delta_report(const RunTrace& prompted, const RunTrace& plain, const VisionWeights& w);

/// "layer,head,delta_l2,rank" rows in (layer, head) order.
std::string delta_report_csv(const DeltaReport& report);

enum class UnleashMode {
  /// Only the CLS stream is recomputed after an edit; patch tokens keep the
  /// prompted run's states.
  ClsStream,
  /// Every token is recomputed through the remaining layers.
  Exact,
};

struct UnleashOptions {
  LayerRange layers = LayerRange::none();
  UnleashMode mode = UnleashMode::ClsStream;
  /// Multiplier on Σ_h (G'_h − G_h); 1 gives Σ_h [G'_h + (G'_h − G_h)].
  float gain = 1.0f;
};

/// gain·Σ_h (G'_h − G_h) for one layer: the amount added to the prompted
/// MSA CLS term, which is itself Σ_h G'_h.
Tensor unleash_delta(const std::vector<HeadContribution>& prompted,
                     const std::vector<HeadContribution>& plain, float gain);

/// Default unleash range: the last four layers.
UnleashOptions default_unleash_options(const VisionConfig& cfg);

/// Rebuilds the CLS embedding with each in-range layer's MSA CLS term
/// shifted by gain·Σ_h(G'_h − G_h), taking G' from `prompted` and G from
/// `plain`. Returns the projected, normalized embedding.
Tensor unleash(const VisionWeights& w, const RunTrace& prompted, const RunTrace& plain,
               const UnleashOptions& opts);

}  // namespace falip
