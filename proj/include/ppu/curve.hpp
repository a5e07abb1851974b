#pragma once

// Closed planar curves with an arc-length table, used both to synthesize
// contour datasets and as exact ground truth for point-to-curve distances.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

enum class CurveKind { Circle, Ellipse, RoundedPolygon, Fourier };

inline std::string to_string(CurveKind k) {
  switch (k) {
    case CurveKind::Circle: return "circle";
    case CurveKind::Ellipse: return "ellipse";
    case CurveKind::RoundedPolygon: return "rounded-polygon";
    case CurveKind::Fourier: return "fourier";
  }
  return "?";
}

inline CurveKind parse_curve_kind(const std::string& s) {
  if (s == "circle") return CurveKind::Circle;
  if (s == "ellipse") return CurveKind::Ellipse;
  if (s == "rounded-polygon") return CurveKind::RoundedPolygon;
  if (s == "fourier") return CurveKind::Fourier;
  throw ValidationError("unknown curve kind '" + s + "'");
}

// Parameter layouts:
//   circle:          [radius]
//   ellipse:         [a, b, rotation]
//   rounded-polygon: [sides, circumradius, corner radius, rotation]
//   fourier:         [base radius, (amplitude_h, phase_h) for h = 2..6]
struct CurveSpec {
  CurveKind kind = CurveKind::Circle;
  std::vector<double> params{1.0};
  std::uint64_t seed = 0;
  // Seeds skipped because their curve self-intersected.
  std::vector<std::uint64_t> rejected_seeds;
};

inline constexpr std::size_t kArcTableSegments = 4096;
inline constexpr std::size_t kFourierFirstHarmonic = 2;
inline constexpr std::size_t kFourierLastHarmonic = 6;

class ParametricCurve {
 public:
  explicit ParametricCurve(CurveSpec spec) : spec_(std::move(spec)) {
    validate();
    cumulative_.resize(kArcTableSegments + 1, 0.0);
    auto prev = evaluate(0.0);
    for (std::size_t i = 1; i <= kArcTableSegments; ++i) {
      const double t = static_cast<double>(i) / kArcTableSegments;
      auto p = evaluate(t == 1.0 ? 0.0 : t);
      cumulative_[i] = cumulative_[i - 1] + std::hypot(p[0] - prev[0], p[1] - prev[1]);
      prev = p;
    }
  }

  const CurveSpec& spec() const { return spec_; }
  double arc_length() const { return cumulative_.back(); }
  const std::vector<double>& arc_table() const { return cumulative_; }

  // Point at parameter t in [0, 1); the curve is closed, t is taken mod 1.
  std::array<double, 2> evaluate(double t) const {
    t -= std::floor(t);
    const auto& p = spec_.params;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (spec_.kind) {
      case CurveKind::Circle: {
        const double a = two_pi * t;
        return {p[0] * std::cos(a), p[0] * std::sin(a)};
      }
      case CurveKind::Ellipse: {
        const double a = two_pi * t;
        const double x = p[0] * std::cos(a), y = p[1] * std::sin(a);
        const double c = std::cos(p[2]), s = std::sin(p[2]);
        return {c * x - s * y, s * x + c * y};
      }
      case CurveKind::RoundedPolygon:
        return rounded_polygon(t);
      case CurveKind::Fourier: {
        const double a = two_pi * t;
        double r = 1.0;
        for (std::size_t h = kFourierFirstHarmonic; h <= kFourierLastHarmonic; ++h) {
          const std::size_t at = 1 + 2 * (h - kFourierFirstHarmonic);
          r += p[at] * std::cos(static_cast<double>(h) * a + p[at + 1]);
        }
        r *= p[0];
        return {r * std::cos(a), r * std::sin(a)};
      }
    }
    return {0.0, 0.0};
  }

  // Inverts the arc-length table by linear interpolation within a segment.
  double parameter_at_arclength(double s) const {
    const double total = arc_length();
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    i = std::clamp<std::size_t>(i, 1, kArcTableSegments) - 1;
    const double len = cumulative_[i + 1] - cumulative_[i];
    const double frac = len > 0.0 ? (s - cumulative_[i]) / len : 0.0;
    return (static_cast<double>(i) + frac) / kArcTableSegments;
  }

  // True when any two non-adjacent edges of a `samples`-gon approximation
  // of the curve cross.
  bool self_intersects(std::size_t samples = 512) const {
    std::vector<std::array<double, 2>> poly(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      poly[i] = evaluate(static_cast<double>(i) / static_cast<double>(samples));
    }
    auto orient = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                     const std::array<double, 2>& c) {
      return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    };
    for (std::size_t i = 0; i < samples; ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % samples];
      for (std::size_t j = i + 2; j < samples; ++j) {
        if (i == 0 && j == samples - 1) continue;  // shares a vertex
        const auto& c = poly[j];
        const auto& d = poly[(j + 1) % samples];
        const double o1 = orient(a, b, c), o2 = orient(a, b, d);
        const double o3 = orient(c, d, a), o4 = orient(c, d, b);
        if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 &&
            o2 != 0 && o3 != 0 && o4 != 0) {
          return true;
        }
      }
    }
    return false;
  }

 private:
  void validate() const {
    const auto& p = spec_.params;
    auto need = [&](std::size_t n) {
      if (p.size() != n) {
        throw ValidationError(to_string(spec_.kind) + " curve needs " +
                              std::to_string(n) + " parameters, got " +
                              std::to_string(p.size()));
      }
    };
    for (double v : p) {
      if (!std::isfinite(v)) throw ValidationError("non-finite curve parameter");
    }
    switch (spec_.kind) {
      case CurveKind::Circle:
        need(1);
        if (!(p[0] > 0.0)) throw ValidationError("circle radius must be positive");
        break;
      case CurveKind::Ellipse:
        need(3);
        if (!(p[0] > 0.0 && p[1] > 0.0)) {
          throw ValidationError("ellipse axes must be positive");
        }
        break;
      case CurveKind::RoundedPolygon:
        need(4);
        if (p[0] < 3.0 || p[0] != std::floor(p[0]) || !(p[1] > 0.0) ||
            !(p[2] > 0.0)) {
          throw ValidationError(
              "rounded polygon needs >= 3 sides and positive radii");
        }
        break;
      case CurveKind::Fourier:
        need(1 + 2 * (kFourierLastHarmonic - kFourierFirstHarmonic + 1));
        if (!(p[0] > 0.0)) throw ValidationError("fourier base radius must be positive");
        for (std::size_t i = 1; i < p.size(); i += 2) {
          if (p[i] < 0.0 || p[i] > 0.25) {
            throw ValidationError("fourier amplitudes must lie in [0, 0.25]");
          }
        }
        break;
    }
  }

  // Regular polygon offset outward by the corner radius: straight edges
  // joined by circular arcs, parametrized by arc length.
  std::array<double, 2> rounded_polygon(double t) const {
    const auto& p = spec_.params;
    const auto sides = static_cast<std::size_t>(p[0]);
    const double radius = p[1], corner = p[2], rotation = p[3];
    const double step = 2.0 * std::numbers::pi / static_cast<double>(sides);
    const double edge = 2.0 * radius * std::sin(step / 2.0);
    const double arc = corner * step;
    const double piece = edge + arc;
    double s = t * piece * static_cast<double>(sides);
    auto i = static_cast<std::size_t>(s / piece);
    if (i >= sides) i = sides - 1;
    s -= static_cast<double>(i) * piece;
    const double a0 = rotation + step * static_cast<double>(i);
    const double a1 = a0 + step;
    const double normal = a0 + step / 2.0;
    if (s < edge) {
      const double u = s / edge;
      const double x = radius * ((1 - u) * std::cos(a0) + u * std::cos(a1));
      const double y = radius * ((1 - u) * std::sin(a0) + u * std::sin(a1));
      return {x + corner * std::cos(normal), y + corner * std::sin(normal)};
    }
    const double phi = normal + (s - edge) / corner;
    return {radius * std::cos(a1) + corner * std::cos(phi),
            radius * std::sin(a1) + corner * std::sin(phi)};
  }

  CurveSpec spec_;
  std::vector<double> cumulative_;
};

namespace detail {
inline CurveSpec random_curve_spec(CurveKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  CurveSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  switch (kind) {
    case CurveKind::Circle:
      spec.params = {0.7 + 0.3 * u01(rng)};
      break;
    case CurveKind::Ellipse:
      spec.params = {1.0, 0.5 + 0.4 * u01(rng), std::numbers::pi * u01(rng)};
      break;
    case CurveKind::RoundedPolygon: {
      const double sides = 3.0 + std::floor(4.0 * u01(rng));
      spec.params = {sides, 0.8, 0.1 + 0.2 * u01(rng), two_pi * u01(rng)};
      break;
    }
    case CurveKind::Fourier: {
      spec.params = {1.0};
      for (std::size_t h = kFourierFirstHarmonic; h <= kFourierLastHarmonic; ++h) {
        spec.params.push_back(0.25 * u01(rng) * 2.0 / static_cast<double>(h));
        spec.params.push_back(two_pi * u01(rng));
      }
      break;
    }
  }
  return spec;
}
}  // namespace detail

// Deterministic random curve of the given kind. A self-intersecting draw is
// rejected and regenerated from the next seed; rejected seeds are recorded.
inline ParametricCurve generate_curve(CurveKind kind, std::uint64_t seed) {
  std::vector<std::uint64_t> rejected;
  for (std::uint64_t s = seed;; ++s) {
    CurveSpec spec = detail::random_curve_spec(kind, s);
    ParametricCurve curve(spec);
    if (!curve.self_intersects()) {
      spec.rejected_seeds = rejected;
      spec.seed = seed;
      return ParametricCurve(std::move(spec));
    }
    rejected.push_back(s);
  }
}

// Curve with explicit parameters; rejects self-intersecting shapes.
inline ParametricCurve make_curve(CurveKind kind, std::vector<double> params) {
  ParametricCurve curve(CurveSpec{kind, std::move(params), 0, {}});
  if (curve.self_intersects()) {
    throw ValidationError(to_string(kind) + " curve self-intersects");
  }
  return curve;
}

// n points at equal arc-length spacing starting at t = 0.
inline PointSet sample_curve_uniform(const ParametricCurve& curve, std::size_t n) {
  if (n < 3) throw ValidationError("sample_curve_uniform needs n >= 3");
  std::vector<double> coords;
  coords.reserve(2 * n);
  const double total = curve.arc_length();
  for (std::size_t j = 0; j < n; ++j) {
    const double s = total * static_cast<double>(j) / static_cast<double>(n);
    auto p = curve.evaluate(curve.parameter_at_arclength(s));
    coords.push_back(p[0]);
    coords.push_back(p[1]);
  }
  return PointSet(2, std::move(coords));
}

}  // namespace ppu
