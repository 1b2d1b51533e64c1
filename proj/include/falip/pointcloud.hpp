#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "falip/foveal_mask.hpp"
#include "falip/image.hpp"
#include "falip/tensor.hpp"

namespace falip {

struct Point3 {
  float x = 0, y = 0, z = 0;
};

/// Parses "x y z" lines; blank lines and lines starting with '#' are skipped.
std::vector<Point3> parse_xyz(const std::string& text);
std::vector<Point3> load_xyz_file(const std::string& path);

/// Centers the cloud on its bounding-box midpoint and scales by the longest
/// extent so it fits [0,1]³. Shorter axes end up centered; a fully
/// degenerate cloud maps to (0.5, 0.5, 0.5).
std::vector<Point3> normalize_to_unit_cube(std::span<const Point3> points);

enum class ViewAxis { PosX, NegX, PosY, NegY, PosZ, NegZ };
inline constexpr std::array<ViewAxis, 6> kViewAxes{ViewAxis::PosX, ViewAxis::NegX,
                                                   ViewAxis::PosY, ViewAxis::NegY,
                                                   ViewAxis::PosZ, ViewAxis::NegZ};
const char* view_axis_name(ViewAxis axis);

/// Where a normalized point lands in one orthographic view.
struct ViewSample {
  float u = 0, v = 0;  // image-plane coordinates in [0,1]; u → column, v → row
  float depth = 0;     // 1 − normalized distance from the viewer, in [0,1]
};
ViewSample view_sample(ViewAxis axis, const Point3& p);

struct DepthView {
  ViewAxis axis = ViewAxis::PosX;
  Tensor depth;  // [resolution, resolution], nearest point per pixel, 0 = empty
  Roa foreground;
};

/// Six axis-aligned orthographic depth maps at resolution×resolution, with
/// the pixels of depth > 0 as each view's foreground region.
std::array<DepthView, 6> project_views(std::span<const Point3> points, std::size_t resolution);

/// Nearest-neighbour upsample of a depth map to side×side, replicated to RGB.
Image depth_to_image(const Tensor& depth, std::size_t side);

}  // namespace falip
