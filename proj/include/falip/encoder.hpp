#pragma once

#include <optional>
#include <span>
#include <vector>

#include "falip/foveal_mask.hpp"
#include "falip/model.hpp"
#include "falip/tensor.hpp"

namespace falip {

/// softmax(q·kᵀ/√d + bias)·v for one head. `bias`, when given, is
/// [tokens × tokens] and added to the already-scaled logits. With `causal`,
/// query i only sees keys 0..i. If `probs` is non-null it receives the
/// attention probabilities.
Tensor biased_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias,
                        bool causal = false, Tensor* probs = nullptr);

/// Everything one block computed, kept for head decomposition.
struct LayerTrace {
  Tensor input;          // X_{l-1}, tokens × D
  Tensor ln_input;       // LN1(X_{l-1})
  Tensor values;         // LN1(X_{l-1})·W_V + b_V, all heads side by side
  Tensor cls_attention;  // heads × tokens: CLS query row of each head's probabilities
  Tensor msa_output;     // MSA(LN1(X_{l-1})) including the output projection
  Tensor mlp_output;     // MLP(LN2(X'_l))
  bool biased = false;   // whether the attention bias was applied here
};

struct RunTrace {
  VisionConfig config;
  std::vector<LayerTrace> layers;
  Tensor bias;  // attention bias, empty ([0]) if none
  LayerRange insert_layers = LayerRange::none();
  Tensor final_states;  // X_L, tokens × D
  Tensor final_cls;     // [X_L]_cls before ln_post
  Tensor embedding;

  bool has_bias() const { return bias.rank() == 2; }
};

/// One pre-LN block: X' = X + MSA(LN(X)); X'' = X' + MLP(LN(X')).
///
/// `cls_msa_offset`, when given, is added to row 0 of the MSA output before
/// the residual add.
Tensor block_forward(const Tensor& x, const BlockWeights& w, int heads, Activation act,
                     float ln_eps, const Tensor* bias, bool causal, LayerTrace* trace = nullptr,
                     const Tensor* cls_msa_offset = nullptr);

/// Flattens a [3, S, S] image tensor into [N, 3·p·p] patch rows, row-major
/// over the patch grid; each row is ordered (channel, y, x).
Tensor patchify(const Tensor& pixels, int patch);

/// Patch embedding, CLS prepend, positional embedding and ln_pre: X_0.
/// `token_scale`, when given, multiplies each patch embedding row (N long).
Tensor embed_image(const VisionConfig& cfg, const VisionWeights& w, const Tensor& pixels,
                   std::span<const float> token_scale = {});

/// ln_post → projection → L2 normalization of a CLS state.
Tensor project_image_cls(const VisionConfig& cfg, const VisionWeights& w, const Tensor& cls);

struct ImageForwardOptions {
  const FovealMask* mask = nullptr;
  /// Overrides the mask's own layer choice.
  std::optional<LayerRange> insert_layers;
  bool record_trace = false;
};

struct ImageResult {
  Tensor embedding;
  std::optional<RunTrace> trace;
};

/// Runs the tower from an already-embedded X_0. `offsets[l-1]`, when
/// non-empty, is added to the CLS row of layer l's MSA output.
ImageResult run_image_layers(const VisionConfig& cfg, const VisionWeights& w, const Tensor& x0,
                             const Tensor* bias, LayerRange insert, bool record_trace,
                             std::span<const Tensor> cls_msa_offsets = {});

ImageResult image_forward(const VisionConfig& cfg, const VisionWeights& w, const Tensor& pixels,
                          const ImageForwardOptions& opts = {});
ImageResult image_forward(const ClipModel& model, const Tensor& pixels,
                          const ImageForwardOptions& opts = {});

/// Baseline: scale each ROA patch embedding by (1 + its normalized grid
/// value) and run the unbiased tower.
Tensor feature_mask_forward(const ClipModel& model, const Tensor& pixels, const Roa& roa,
                            const MaskParams& params);

/// Pooling position: first occurrence of `eot_token`, else the last token.
std::size_t eot_position(std::span<const int> ids, int eot_token);

Tensor text_forward(const TextConfig& cfg, const TextWeights& w, std::span<const int> ids);
Tensor text_forward(const ClipModel& model, std::span<const int> ids);

}  // namespace falip
