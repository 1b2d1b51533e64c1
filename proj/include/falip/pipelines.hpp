#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "falip/encoder.hpp"
#include "falip/image.hpp"
#include "falip/pointcloud.hpp"

namespace falip {

/// How a region is communicated to the image encoder.
enum class PromptMethod {
  None,         // plain encoder, region ignored
  Foveal,       // additive attention bias
  FeatureMask,  // patch-embedding scaling baseline
  RedCircle,    // ellipse drawn on the pixels
  Blur,         // everything outside the box blurred
  CircleBlur,   // both pixel edits
};

PromptMethod parse_prompt_method(const std::string& text);
std::string prompt_method_name(PromptMethod method);

inline constexpr Rgb kRed{1.0f, 0.0f, 0.0f};
/// Blur radius used by the blur baseline: max(1, 3% of the short side).
int default_blur_radius(const Image& img);

/// Maps a box given in `img` pixels onto the side×side model input.
Box scale_box_to_input(const Box& box, const Image& img, int side);

/// Normalized image embedding of `img` with `box` communicated via `method`.
/// No box (or PromptMethod::None) gives the plain embedding. Throws
/// EmptyRoaError if the box selects nothing. With `trace`, the run trace is
/// stored there.
Tensor embed_region(const ClipModel& model, const Image& img, const std::optional<Box>& box,
                    const MaskParams& params, PromptMethod method, RunTrace* trace = nullptr);

/// Lowest index among the maxima; −inf entries only win if all are −inf.
std::size_t argmax_lowest(std::span<const double> scores);

/// S_i − mean_q(negatives[i][q]); unchanged when there are no negatives.
std::vector<double> subtract_negatives(std::span<const double> similarities,
                                       const std::vector<std::vector<double>>& negatives);

struct RecRequest {
  Image image;
  std::vector<Box> boxes;
  std::vector<int> caption;
  std::vector<std::vector<int>> negatives;  // neg_count entries, possibly none
  MaskParams params;
  PromptMethod method = PromptMethod::Foveal;
};

struct RecResult {
  std::vector<double> scores;  // after subtraction; −inf for boxes with an empty region
  std::vector<bool> empty_region;
  std::size_t index = 0;
};

RecResult rec_predict(const ClipModel& model, const RecRequest& req);

/// Softmax over scores (max-subtracted, double precision).
std::vector<double> softmax(std::span<const double> scores);

struct ClassifyRequest {
  Image image;
  std::optional<Box> box;
  std::vector<std::vector<int>> classes;
  MaskParams params;
  float logit_scale = 100.0f;
  PromptMethod method = PromptMethod::Foveal;
};

struct ClassifyResult {
  std::vector<double> scores;  // similarity × logit scale
  std::vector<double> probabilities;
  std::size_t index = 0;
};

ClassifyResult classify(const ClipModel& model, const ClassifyRequest& req);

struct PointCloudRequest {
  std::vector<Point3> points;
  std::vector<std::vector<int>> classes;
  std::array<float, 6> beta{1, 1, 1, 1, 1, 1};
  MaskParams params;
  float logit_scale = 100.0f;
  bool use_mask = true;
};

struct PointCloudResult {
  std::vector<double> scores;  // Σ_j β_j · similarity
  std::vector<double> probabilities;  // softmax(logit_scale · scores)
  std::size_t index = 0;
};

/// The encoder input for one depth view: depth replicated to 3 channels at
/// image_side, normalized as any other image.
Tensor depth_view_pixels(const DepthView& view, int image_side);

PointCloudResult pointcloud_recognize(const ClipModel& model, const PointCloudRequest& req);

}  // namespace falip
