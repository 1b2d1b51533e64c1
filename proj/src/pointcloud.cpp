#include "falip/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "falip/errors.hpp"

namespace falip {

std::vector<Point3> parse_xyz(const std::string& text) {
  std::vector<Point3> out;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream is(line);
    Point3 p;
    if (!(is >> p.x >> p.y >> p.z)) {
      throw FormatError("xyz: line " + std::to_string(lineno) + " is not 'x y z'");
    }
    std::string rest;
    if (is >> rest) throw FormatError("xyz: line " + std::to_string(lineno) + " has extra fields");
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw FormatError("xyz: line " + std::to_string(lineno) + " is not finite");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<Point3> load_xyz_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("xyz: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_xyz(ss.str());
}

std::vector<Point3> normalize_to_unit_cube(std::span<const Point3> points) {
  if (points.empty()) throw ArgumentError("point cloud is empty");
  std::array<double, 3> lo{points[0].x, points[0].y, points[0].z};
  std::array<double, 3> hi = lo;
  for (const auto& p : points) {
    const std::array<double, 3> c{p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const std::array<double, 3> c{p.x, p.y, p.z};
    std::array<float, 3> n{0.5f, 0.5f, 0.5f};
    if (extent > 0.0) {
      for (int a = 0; a < 3; ++a) {
        const double mid = (lo[a] + hi[a]) / 2.0;
        n[a] = static_cast<float>(std::clamp((c[a] - mid) / extent + 0.5, 0.0, 1.0));
      }
    }
    out.push_back(Point3{n[0], n[1], n[2]});
  }
  return out;
}

const char* view_axis_name(ViewAxis axis) {
  switch (axis) {
    case ViewAxis::PosX: return "+x";
    case ViewAxis::NegX: return "-x";
    case ViewAxis::PosY: return "+y";
    case ViewAxis::NegY: return "-y";
    case ViewAxis::PosZ: return "+z";
    case ViewAxis::NegZ: return "-z";
  }
  return "?";
}

// Viewers sit on the named side looking inward; z is up for the four side
// views, and the ±z views keep x running left to right.
ViewSample view_sample(ViewAxis axis, const Point3& p) {
  switch (axis) {
    case ViewAxis::PosX: return {p.y, 1.0f - p.z, p.x};
    case ViewAxis::NegX: return {1.0f - p.y, 1.0f - p.z, 1.0f - p.x};
    case ViewAxis::PosY: return {1.0f - p.x, 1.0f - p.z, p.y};
    case ViewAxis::NegY: return {p.x, 1.0f - p.z, 1.0f - p.y};
    case ViewAxis::PosZ: return {p.x, 1.0f - p.y, p.z};
    case ViewAxis::NegZ: return {p.x, p.y, 1.0f - p.z};
  }
  return {};
}

std::array<DepthView, 6> project_views(std::span<const Point3> points, std::size_t resolution) {
  if (points.empty()) throw ArgumentError("project_views: point cloud is empty");
  if (resolution == 0) throw ArgumentError("project_views: resolution must be positive");
  const auto unit = normalize_to_unit_cube(points);
  const auto res_f = static_cast<float>(resolution);
  auto pixel = [&](float t) {
    return std::min(static_cast<std::size_t>(std::max(0.0f, std::floor(t * res_f))), resolution - 1);
  };
  std::array<DepthView, 6> views;
  for (std::size_t vi = 0; vi < 6; ++vi) {
    DepthView& view = views[vi];
    view.axis = kViewAxes[vi];
    view.depth = Tensor({resolution, resolution});
    for (const auto& p : unit) {
      const ViewSample s = view_sample(view.axis, p);
      float& d = view.depth(pixel(s.v), pixel(s.u));
      d = std::max(d, s.depth);
    }
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < view.depth.numel(); ++i)
      if (view.depth[i] > 0.0f) fg.push_back(i);
    view.foreground = make_roa(resolution, std::move(fg));
  }
  return views;
}

Image depth_to_image(const Tensor& depth, std::size_t side) {
  if (depth.rank() != 2 || depth.rows() != depth.cols() || depth.rows() == 0) {
    throw ShapeError("depth_to_image: expected a square depth map");
  }
  const std::size_t res = depth.rows();
  if (side % res != 0) throw ArgumentError("depth_to_image: side must be a multiple of resolution");
  const std::size_t k = side / res;
  Image img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const float v = std::clamp(depth(y / k, x / k), 0.0f, 1.0f);
      img.set(y, x, {v, v, v});
    }
  return img;
}

}  // namespace falip
