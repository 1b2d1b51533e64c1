#include "falip/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "falip/errors.hpp"

namespace falip {

namespace {

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::Gelu ? gelu(x) : quick_gelu(x);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row_vector(matmul(x, w), b);
}

// Row-wise softmax where row i only covers columns 0..i; the rest stay 0.
Tensor causal_softmax(const Tensor& scores) {
  const std::size_t n = scores.rows();
  Tensor probs({n, scores.cols()});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor prefix({1, i + 1}, std::vector<float>(scores.row(i).begin(),
                                                         scores.row(i).begin() + static_cast<std::ptrdiff_t>(i + 1)));
    const Tensor p = softmax_rows(prefix);
    std::copy(p.data().begin(), p.data().end(), probs.row(i).begin());
  }
  return probs;
}

}  // namespace

Tensor biased_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias,
                        bool causal, Tensor* probs_out) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ArgumentError("biased_attention: q, k, v must be rank 2");
  }
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ArgumentError("biased_attention: q/k/v shapes " + shape_str(q.shape()) + ", " +
                        shape_str(k.shape()) + ", " + shape_str(v.shape()) + " disagree");
  }
  Tensor scores = matmul(q, transpose(k));
  const float root_d = std::sqrt(static_cast<float>(q.cols()));
  for (auto& s : scores.data()) s /= root_d;
  if (bias) {
    if (bias->shape() != scores.shape()) {
      throw ArgumentError("biased_attention: bias shape " + shape_str(bias->shape()) +
                          " does not match logits " + shape_str(scores.shape()));
    }
    scores = add(scores, *bias);
  }
  Tensor probs = causal ? causal_softmax(scores) : softmax_rows(scores);
  Tensor out = matmul(probs, v);
  if (probs_out) *probs_out = std::move(probs);
  return out;
}

Tensor block_forward(const Tensor& x, const BlockWeights& w, int heads, Activation act,
                     float ln_eps, const Tensor* bias, bool causal, LayerTrace* trace,
                     const Tensor* cls_msa_offset) {
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t hd = d / static_cast<std::size_t>(heads);

  Tensor ln = layer_norm(x, w.ln1_gain, w.ln1_bias, ln_eps);
  const Tensor q = linear(ln, w.wq, w.bq);
  const Tensor k = linear(ln, w.wk, w.bk);
  Tensor v = linear(ln, w.wv, w.bv);

  Tensor context({n, d});
  Tensor cls_attention({static_cast<std::size_t>(heads), n});
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    Tensor probs;
    const Tensor head_out = biased_attention(slice_cols(q, h * hd, hd), slice_cols(k, h * hd, hd),
                                             slice_cols(v, h * hd, hd), bias, causal, &probs);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) context(i, h * hd + j) = head_out(i, j);
    std::copy(probs.row(0).begin(), probs.row(0).end(), cls_attention.row(h).begin());
  }

  Tensor msa = linear(context, w.wo, w.bo);
  if (cls_msa_offset) {
    if (cls_msa_offset->numel() != d) throw ShapeError("block_forward: CLS offset length mismatch");
    for (std::size_t j = 0; j < d; ++j) msa(0, j) += (*cls_msa_offset)[j];
    require_finite(msa, "block_forward");
  }
  const Tensor mid = add(x, msa);
  const Tensor ln2 = layer_norm(mid, w.ln2_gain, w.ln2_bias, ln_eps);
  Tensor mlp = linear(activate(linear(ln2, w.fc1_w, w.fc1_b), act), w.fc2_w, w.fc2_b);
  Tensor out = add(mid, mlp);

  if (trace) {
    trace->input = x;
    trace->ln_input = std::move(ln);
    trace->values = std::move(v);
    trace->cls_attention = std::move(cls_attention);
    trace->msa_output = std::move(msa);
    trace->mlp_output = std::move(mlp);
    trace->biased = bias != nullptr;
  }
  return out;
}

Tensor patchify(const Tensor& pixels, int patch) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) != pixels.dim(2)) {
    throw ShapeError("patchify: expected [3, S, S] pixels, got " + shape_str(pixels.shape()));
  }
  const auto side = pixels.dim(1);
  const auto p = static_cast<std::size_t>(patch);
  if (p == 0 || side % p != 0) throw ShapeError("patchify: side not divisible by patch");
  const std::size_t g = side / p;
  Tensor out({g * g, 3 * p * p});
  for (std::size_t gr = 0; gr < g; ++gr)
    for (std::size_t gc = 0; gc < g; ++gc) {
      auto row = out.row(gr * g + gc);
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            row[k++] = pixels[(c * side + gr * p + y) * side + gc * p + x];
    }
  return out;
}

Tensor embed_image(const VisionConfig& cfg, const VisionWeights& w, const Tensor& pixels,
                   std::span<const float> token_scale) {
  const auto side = static_cast<std::size_t>(cfg.image_side);
  if (pixels.shape() != Shape{3, side, side}) {
    throw ShapeError("embed_image: expected [3, " + std::to_string(side) + ", " +
                     std::to_string(side) + "] pixels, got " + shape_str(pixels.shape()));
  }
  Tensor patches = matmul(patchify(pixels, cfg.patch), w.patch_embed);
  const std::size_t n = patches.rows(), d = patches.cols();
  if (!token_scale.empty()) {
    if (token_scale.size() != n) throw ShapeError("embed_image: token scale length mismatch");
    for (std::size_t i = 0; i < n; ++i)
      for (auto& v : patches.row(i)) v *= token_scale[i];
  }
  Tensor x({n + 1, d});
  for (std::size_t j = 0; j < d; ++j) x(0, j) = w.cls_token[j] + w.pos_embed(0, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i + 1, j) = patches(i, j) + w.pos_embed(i + 1, j);
  return layer_norm(x, w.ln_pre_gain, w.ln_pre_bias, cfg.ln_eps);
}

Tensor project_image_cls(const VisionConfig& cfg, const VisionWeights& w, const Tensor& cls) {
  const Tensor row = cls.reshaped({1, cls.numel()});
  const Tensor normed = layer_norm(row, w.ln_post_gain, w.ln_post_bias, cfg.ln_eps);
  const Tensor projected = matmul(normed, w.proj);
  return l2_normalize(projected.reshaped({projected.numel()}));
}

ImageResult run_image_layers(const VisionConfig& cfg, const VisionWeights& w, const Tensor& x0,
                             const Tensor* bias, LayerRange insert, bool record_trace,
                             std::span<const Tensor> cls_msa_offsets) {
  if (!insert.empty() && (insert.first < 1 || insert.last > cfg.layers)) {
    throw ArgumentError("image_forward: insert layers " + format_layer_range(insert) +
                        " outside [1, " + std::to_string(cfg.layers) + "]");
  }
  if (!cls_msa_offsets.empty() && cls_msa_offsets.size() != static_cast<std::size_t>(cfg.layers)) {
    throw ArgumentError("image_forward: need one CLS offset slot per layer");
  }
  if (w.blocks.size() != static_cast<std::size_t>(cfg.layers)) {
    throw WeightError("image_forward: weight set has wrong layer count");
  }
  ImageResult result;
  RunTrace trace;
  if (record_trace) {
    trace.config = cfg;
    trace.layers.resize(static_cast<std::size_t>(cfg.layers));
    if (bias) trace.bias = *bias;
    trace.insert_layers = bias ? insert : LayerRange::none();
  }
  Tensor x = x0;
  for (int l = 1; l <= cfg.layers; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const Tensor* layer_bias = (bias && insert.contains(l)) ? bias : nullptr;
    const Tensor* offset = nullptr;
    if (!cls_msa_offsets.empty() && cls_msa_offsets[idx].numel() != 0) offset = &cls_msa_offsets[idx];
    x = block_forward(x, w.blocks[idx], cfg.heads, cfg.activation, cfg.ln_eps, layer_bias, false,
                      record_trace ? &trace.layers[idx] : nullptr, offset);
  }
  Tensor cls({x.cols()}, std::vector<float>(x.row(0).begin(), x.row(0).end()));
  result.embedding = project_image_cls(cfg, w, cls);
  if (record_trace) {
    trace.final_states = x;
    trace.final_cls = std::move(cls);
    trace.embedding = result.embedding;
    result.trace = std::move(trace);
  }
  return result;
}

ImageResult image_forward(const VisionConfig& cfg, const VisionWeights& w, const Tensor& pixels,
                          const ImageForwardOptions& opts) {
  const Tensor x0 = embed_image(cfg, w, pixels);
  const Tensor* bias = nullptr;
  LayerRange insert = LayerRange::none();
  if (opts.mask) {
    const auto n = static_cast<std::size_t>(cfg.n_tokens()) + 1;
    if (opts.mask->m.shape() != Shape{n, n}) {
      throw ArgumentError("image_forward: mask is " + shape_str(opts.mask->m.shape()) +
                          ", encoder has " + std::to_string(n) + " tokens");
    }
    bias = &opts.mask->m;
    insert = opts.insert_layers.value_or(opts.mask->params.resolve_layers(cfg.layers));
  }
  return run_image_layers(cfg, w, x0, bias, insert, opts.record_trace);
}

ImageResult image_forward(const ClipModel& model, const Tensor& pixels,
                          const ImageForwardOptions& opts) {
  return image_forward(model.config.vision, model.vision, pixels, opts);
}

Tensor feature_mask_forward(const ClipModel& model, const Tensor& pixels, const Roa& roa,
                            const MaskParams& params) {
  const auto& cfg = model.config.vision;
  if (roa.n_tokens() != static_cast<std::size_t>(cfg.n_tokens())) {
    throw ArgumentError("feature_mask_forward: roa grid does not match encoder");
  }
  std::vector<float> scale = roa_token_weights(roa, params);
  for (auto& s : scale) s += 1.0f;
  const Tensor x0 = embed_image(cfg, model.vision, pixels, scale);
  return run_image_layers(cfg, model.vision, x0, nullptr, LayerRange::none(), false).embedding;
}

std::size_t eot_position(std::span<const int> ids, int eot_token) {
  const auto it = std::find(ids.begin(), ids.end(), eot_token);
  return it != ids.end() ? static_cast<std::size_t>(it - ids.begin()) : ids.size() - 1;
}

Tensor text_forward(const TextConfig& cfg, const TextWeights& w, std::span<const int> ids) {
  if (ids.empty()) throw ArgumentError("text_forward: empty token sequence");
  if (ids.size() > static_cast<std::size_t>(cfg.context_length)) {
    throw ArgumentError("text_forward: " + std::to_string(ids.size()) +
                        " tokens exceed context length " + std::to_string(cfg.context_length));
  }
  if (w.blocks.size() != static_cast<std::size_t>(cfg.layers)) {
    throw WeightError("text_forward: weight set has wrong layer count");
  }
  const std::size_t n = ids.size(), d = static_cast<std::size_t>(cfg.width);
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= cfg.vocab_size) {
      throw ArgumentError("text_forward: token id " + std::to_string(ids[i]) + " outside vocab");
    }
    const auto tok = static_cast<std::size_t>(ids[i]);
    for (std::size_t j = 0; j < d; ++j) x(i, j) = w.token_embed(tok, j) + w.pos_embed(i, j);
  }
  for (const auto& block : w.blocks) {
    x = block_forward(x, block, cfg.heads, cfg.activation, cfg.ln_eps, nullptr, true);
  }
  const std::size_t pos = eot_position(ids, cfg.eot_token);
  const Tensor pooled = slice_rows(x, pos, 1);
  const Tensor normed = layer_norm(pooled, w.ln_final_gain, w.ln_final_bias, cfg.ln_eps);
  const Tensor projected = matmul(normed, w.proj);
  return l2_normalize(projected.reshaped({projected.numel()}));
}

Tensor text_forward(const ClipModel& model, std::span<const int> ids) {
  return text_forward(model.config.text, model.text, ids);
}

}  // namespace falip
