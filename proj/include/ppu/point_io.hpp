#pragma once

// Plain-text point files: one point per line, whitespace-separated decimals,
// '#' starts a comment line. Dimension comes from the first data line.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline PointSet parse_points(std::string_view text, const std::string& origin = "<memory>") {
  std::vector<double> coords;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    std::vector<double> values;
    const char* p = line.data() + first;
    const char* stop = line.data() + line.size();
    while (p < stop) {
      while (p < stop && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == stop) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, stop, v);
      if (ec != std::errc() ||
          (next < stop && *next != ' ' && *next != '\t' && *next != '\r')) {
        throw FormatError(origin + ":" + std::to_string(line_no) +
                          ": malformed number");
      }
      values.push_back(v);
      p = next;
    }
    if (dim == 0) {
      if (values.size() != 2 && values.size() != 3) {
        throw FormatError(origin + ":" + std::to_string(line_no) +
                          ": expected 2 or 3 coordinates, found " +
                          std::to_string(values.size()));
      }
      dim = values.size();
    } else if (values.size() != dim) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " coordinates, found " +
                        std::to_string(values.size()));
    }
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw FormatError(origin + ":" + std::to_string(line_no) +
                          ": non-finite coordinate");
      }
    }
    coords.insert(coords.end(), values.begin(), values.end());
    if (end == text.size()) break;
  }
  if (dim == 0) throw FormatError(origin + ": no points");
  return PointSet(dim, std::move(coords));
}

inline PointSet read_points(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_points(ss.str(), path.string());
}

inline std::string format_points(const PointSet& points) {
  std::string out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.dim(); ++j) {
      if (j) out += ' ';
      out += format_double(points(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_points(const std::filesystem::path& path, const PointSet& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_points(points);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace ppu
