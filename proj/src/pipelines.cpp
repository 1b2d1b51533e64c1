#include "falip/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "falip/errors.hpp"

namespace falip {

PromptMethod parse_prompt_method(const std::string& text) {
  if (text == "none") return PromptMethod::None;
  if (text == "foveal") return PromptMethod::Foveal;
  if (text == "feature") return PromptMethod::FeatureMask;
  if (text == "circle") return PromptMethod::RedCircle;
  if (text == "blur") return PromptMethod::Blur;
  if (text == "circle+blur") return PromptMethod::CircleBlur;
  throw ArgumentError("prompt method must be one of none, foveal, feature, circle, blur, "
                      "circle+blur; got '" + text + "'");
}

std::string prompt_method_name(PromptMethod method) {
  switch (method) {
    case PromptMethod::None: return "none";
    case PromptMethod::Foveal: return "foveal";
    case PromptMethod::FeatureMask: return "feature";
    case PromptMethod::RedCircle: return "circle";
    case PromptMethod::Blur: return "blur";
    case PromptMethod::CircleBlur: return "circle+blur";
  }
  return "?";
}

int default_blur_radius(const Image& img) {
  const auto short_side = static_cast<double>(std::min(img.height(), img.width()));
  return std::max(1, static_cast<int>(std::lround(0.03 * short_side)));
}

Box scale_box_to_input(const Box& box, const Image& img, int side) {
  const double sx = static_cast<double>(side) / static_cast<double>(img.width());
  const double sy = static_cast<double>(side) / static_cast<double>(img.height());
  return Box{box.x0 * sx, box.y0 * sy, box.x1 * sx, box.y1 * sy};
}

namespace {

Box clip_to_image(const Box& box, const Image& img) {
  Box b{std::max(box.x0, 0.0), std::max(box.y0, 0.0),
        std::min(box.x1, static_cast<double>(img.width())),
        std::min(box.y1, static_cast<double>(img.height()))};
  if (!(b.width() > 0.0) || !(b.height() > 0.0)) {
    throw EmptyRoaError("box does not overlap the image");
  }
  return b;
}

}  // namespace

Tensor embed_region(const ClipModel& model, const Image& img, const std::optional<Box>& box,
                    const MaskParams& params, PromptMethod method, RunTrace* trace) {
  const auto& cfg = model.config.vision;
  const auto side = static_cast<std::size_t>(cfg.image_side);
  ImageForwardOptions opts;
  opts.record_trace = trace != nullptr;

  auto finish = [&](ImageResult r) {
    if (trace) *trace = std::move(*r.trace);
    return std::move(r.embedding);
  };

  if (!box || method == PromptMethod::None) {
    return finish(image_forward(model, preprocess(img, side), opts));
  }
  switch (method) {
    case PromptMethod::Foveal: {
      const Roa roa = box_to_roa(scale_box_to_input(*box, img, cfg.image_side), side,
                                 static_cast<std::size_t>(cfg.patch));
      const FovealMask mask = build_foveal_mask(roa, params);
      opts.mask = &mask;
      return finish(image_forward(model, preprocess(img, side), opts));
    }
    case PromptMethod::FeatureMask: {
      if (trace) throw ArgumentError("embed_region: feature-mask runs do not record traces");
      const Roa roa = box_to_roa(scale_box_to_input(*box, img, cfg.image_side), side,
                                 static_cast<std::size_t>(cfg.patch));
      return feature_mask_forward(model, preprocess(img, side), roa, params);
    }
    case PromptMethod::RedCircle:
    case PromptMethod::Blur:
    case PromptMethod::CircleBlur: {
      const Box b = clip_to_image(*box, img);
      Image edited = img;
      if (method != PromptMethod::RedCircle) edited = blur_outside(edited, b, default_blur_radius(img));
      if (method != PromptMethod::Blur) {
        edited = draw_circle(edited, b, kRed, default_circle_thickness(img));
      }
      return finish(image_forward(model, preprocess(edited, side), opts));
    }
    case PromptMethod::None: break;
  }
  throw ArgumentError("embed_region: unsupported prompt method");
}

std::size_t argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("argmax over no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::vector<double> subtract_negatives(std::span<const double> similarities,
                                       const std::vector<std::vector<double>>& negatives) {
  std::vector<double> out(similarities.begin(), similarities.end());
  if (negatives.empty()) return out;
  if (negatives.size() != similarities.size()) {
    throw ArgumentError("subtract_negatives: need one negative row per box");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& row = negatives[i];
    if (row.empty()) continue;
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    out[i] -= mean;
  }
  return out;
}

RecResult rec_predict(const ClipModel& model, const RecRequest& req) {
  if (req.boxes.empty()) throw ArgumentError("rec_predict: no candidate boxes");
  const Tensor caption = text_forward(model, req.caption);
  std::vector<Tensor> negatives;
  for (const auto& ids : req.negatives) negatives.push_back(text_forward(model, ids));

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  RecResult result;
  std::vector<double> sims;
  std::vector<std::vector<double>> neg_sims;
  for (const auto& box : req.boxes) {
    Tensor v;
    bool empty = false;
    try {
      v = embed_region(model, req.image, box, req.params, req.method);
    } catch (const EmptyRoaError&) {
      empty = true;
    }
    result.empty_region.push_back(empty);
    if (empty) {
      sims.push_back(kNegInf);
      neg_sims.emplace_back();
      continue;
    }
    sims.push_back(dot(caption.data(), v.data()));
    std::vector<double> row;
    for (const auto& n : negatives) row.push_back(dot(n.data(), v.data()));
    neg_sims.push_back(std::move(row));
  }
  result.scores = negatives.empty() ? sims : subtract_negatives(sims, neg_sims);
  result.index = argmax_lowest(result.scores);
  return result;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("softmax over no scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

ClassifyResult classify(const ClipModel& model, const ClassifyRequest& req) {
  if (req.classes.size() < 2) throw ArgumentError("classify: need at least two classes");
  const Tensor v = embed_region(model, req.image, req.box, req.params, req.method);
  ClassifyResult result;
  for (const auto& ids : req.classes) {
    const Tensor t = text_forward(model, ids);
    result.scores.push_back(dot(v.data(), t.data()) * req.logit_scale);
  }
  result.probabilities = softmax(result.scores);
  result.index = argmax_lowest(result.scores);
  return result;
}

Tensor depth_view_pixels(const DepthView& view, int image_side) {
  const auto side = static_cast<std::size_t>(image_side);
  return preprocess(depth_to_image(view.depth, side), side);
}

PointCloudResult pointcloud_recognize(const ClipModel& model, const PointCloudRequest& req) {
  if (req.classes.empty()) throw ArgumentError("pointcloud_recognize: no class texts");
  double beta_sum = 0.0;
  for (float b : req.beta) {
    if (!(b >= 0.0f) || !std::isfinite(b)) throw ArgumentError("view weights must be >= 0");
    beta_sum += b;
  }
  if (!(beta_sum > 0.0)) throw ArgumentError("view weights must not all be zero");

  const auto& cfg = model.config.vision;
  const auto views = project_views(req.points, static_cast<std::size_t>(cfg.grid_side()));
  std::vector<Tensor> texts;
  for (const auto& ids : req.classes) texts.push_back(text_forward(model, ids));

  PointCloudResult result;
  result.scores.assign(texts.size(), 0.0);
  for (std::size_t j = 0; j < views.size(); ++j) {
    if (req.beta[j] == 0.0f) continue;
    ImageForwardOptions opts;
    FovealMask mask;
    if (req.use_mask) {
      mask = build_foveal_mask(views[j].foreground, req.params);
      opts.mask = &mask;
    }
    const Tensor v = image_forward(model, depth_view_pixels(views[j], cfg.image_side), opts).embedding;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      result.scores[i] += static_cast<double>(req.beta[j]) * dot(v.data(), texts[i].data());
    }
  }
  std::vector<double> logits(result.scores);
  for (auto& s : logits) s *= req.logit_scale;
  result.probabilities = softmax(logits);
  result.index = argmax_lowest(result.scores);
  return result;
}

}  // namespace falip
