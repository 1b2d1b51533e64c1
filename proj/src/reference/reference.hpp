#pragma once

// Straight-line double-precision reimplementation of the encoders and the
// point-cloud projection. Shares no kernels with the main library: only the
// weight structs and configs are common. Used to cross-check results.

#include <optional>
#include <span>
#include <vector>

#include "falip/model.hpp"
#include "falip/pointcloud.hpp"

namespace falip::reference {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

Mat naive_matmul(const Mat& a, const Mat& b);
Mat to_mat(const Tensor& t);
Vec to_vec(const Tensor& t);

struct BiasSpec {
  Mat bias;         // (N+1)×(N+1)
  int first_layer;  // inclusive, 1-based
  int last_layer;
};

/// Image embedding from [3,S,S] pixels. Optional attention bias on a layer
/// range, optional per-patch scale (feature mask).
Vec image_embedding(const ClipModel& model, const Tensor& pixels,
                    const std::optional<BiasSpec>& bias = std::nullopt,
                    std::span<const double> patch_scale = {});

/// Hidden states X_0..X_L of the image tower.
std::vector<Mat> image_hidden_states(const ClipModel& model, const Tensor& pixels,
                                     const std::optional<BiasSpec>& bias = std::nullopt);

Vec text_embedding(const ClipModel& model, std::span<const int> ids);

/// Per-pixel brute force: for every pixel of every view, scan all points.
std::vector<Mat> depth_views(std::span<const Point3> points, std::size_t resolution);

double cosine(const Vec& a, const Vec& b);
/// ‖a − b‖ / ‖b‖.
double relative_error(const Vec& a, const Vec& b);

}  // namespace falip::reference
