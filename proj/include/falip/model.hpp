#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "falip/tensor.hpp"

namespace falip {

enum class Activation { Gelu, QuickGelu };

Activation parse_activation(const std::string& text);
std::string activation_name(Activation act);

/// ViT image tower. Token count N = (image_side / patch)².
struct VisionConfig {
  int layers = 12;
  int heads = 12;
  int width = 768;
  int patch = 16;
  int image_side = 224;
  int embed_dim = 512;
  int mlp_ratio = 4;
  Activation activation = Activation::QuickGelu;
  float ln_eps = 1e-5f;

  int head_dim() const { return width / heads; }
  int grid_side() const { return image_side / patch; }
  int n_tokens() const { return grid_side() * grid_side(); }
  void validate() const;  // throws WeightError

  friend bool operator==(const VisionConfig&, const VisionConfig&) = default;
};

/// Causal text tower, pooled at the first `eot_token` (or the last position).
struct TextConfig {
  int layers = 12;
  int heads = 8;
  int width = 512;
  int context_length = 77;
  int vocab_size = 49408;
  int eot_token = 49407;
  int embed_dim = 512;
  int mlp_ratio = 4;
  Activation activation = Activation::QuickGelu;
  float ln_eps = 1e-5f;

  int head_dim() const { return width / heads; }
  void validate() const;

  friend bool operator==(const TextConfig&, const TextConfig&) = default;
};

struct ModelConfig {
  VisionConfig vision;
  TextConfig text;
  float logit_scale = 100.0f;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

/// Desk-scale configuration used by tests: L=2, H=2, D=8, N=4.
ModelConfig toy_config();

/// One pre-LN transformer block. Linear weights are stored [in, out]:
/// y = x·W + b.
struct BlockWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct VisionWeights {
  Tensor patch_embed;  // [3·patch·patch, width], rows ordered (channel, y, x)
  Tensor cls_token;    // [width]
  Tensor pos_embed;    // [N+1, width]
  Tensor ln_pre_gain, ln_pre_bias;
  std::vector<BlockWeights> blocks;
  Tensor ln_post_gain, ln_post_bias;
  Tensor proj;  // [width, embed_dim]
};

struct TextWeights {
  Tensor token_embed;  // [vocab, width]
  Tensor pos_embed;    // [context, width]
  std::vector<BlockWeights> blocks;
  Tensor ln_final_gain, ln_final_bias;
  Tensor proj;  // [width, embed_dim]
};

struct ClipModel {
  ModelConfig config;
  VisionWeights vision;
  TextWeights text;
};

/// Flat name → tensor map plus the config that interprets it.
///
/// Image tensors are unprefixed (patch_embed.weight, cls_token, pos_embed,
/// ln_pre.*, layers.<l>.*, ln_post.*, proj); text tensors carry a "text."
/// prefix. Per-block names: ln1.{gain,bias}, attn.{wq,wk,wv,wo}.{weight,bias},
/// ln2.{gain,bias}, mlp.{fc1,fc2}.{weight,bias}. <l> is zero-based.
struct WeightSet {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;
};

/// Every tensor name `cfg` requires, with its expected shape.
std::vector<std::pair<std::string, Shape>> required_tensors(const ModelConfig& cfg);

/// Resolves and shape-checks every required tensor. Throws WeightError.
ClipModel build_model(const WeightSet& ws);
WeightSet flatten_model(const ClipModel& model);

/// Reads `<dir>/manifest.json`:
///   {"config": {...}, "tensors": [{"name": "...", "file": "..."}]}
/// File paths are relative to `dir`.
WeightSet load_weight_set(const std::string& dir);
void save_weight_set(const std::string& dir, const WeightSet& ws);

/// Seeded random weights for `cfg`. Same (cfg, seed) → bit-identical weights.
WeightSet make_toy_weights(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace falip
