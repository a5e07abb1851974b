#pragma once

// SVG 1.1 scatter plot: one <circle> per point, colored from blue (small
// nearest-neighbor distance to the reference) to red (largest).

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include "ppu/error.hpp"
#include "ppu/point_io.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

struct SvgOptions {
  double size = 512.0;   // canvas width and height in px
  double margin = 16.0;
  double radius = 2.0;
};

inline std::string distance_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255.0 * t + 0.5);
  const int b = 255 - r;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x30%02x", r, b);
  return buf;
}

// Projects onto the first two axes. `distances` holds one value per point.
inline std::string render_svg(const PointSet& points, std::span<const double> distances,
                              const SvgOptions& opt = {}) {
  if (distances.size() != points.size()) {
    throw DimensionError("render_svg: one distance per point required");
  }
  if (points.empty()) throw ValidationError("render_svg: no points");
  double lo[2] = {points(0, 0), points(0, 1)};
  double hi[2] = {lo[0], lo[1]};
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      lo[j] = std::min(lo[j], points(i, j));
      hi[j] = std::max(hi[j], points(i, j));
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
  const double k = (opt.size - 2.0 * opt.margin) / extent;
  const double dmax = *std::max_element(distances.begin(), distances.end());

  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
       format_double(opt.size) + "\" height=\"" + format_double(opt.size) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = opt.margin + (points(i, 0) - lo[0]) * k;
    const double y = opt.size - opt.margin - (points(i, 1) - lo[1]) * k;
    const double t = dmax > 0.0 ? distances[i] / dmax : 0.0;
    s += "<circle cx=\"" + format_double(x) + "\" cy=\"" + format_double(y) +
         "\" r=\"" + format_double(opt.radius) + "\" fill=\"" + distance_color(t) +
         "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

inline void write_svg(const std::filesystem::path& path, const PointSet& points,
                      std::span<const double> distances, const SvgOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << render_svg(points, distances, opt);
}

}  // namespace ppu
