#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ppu/curve.hpp"
#include "ppu/error.hpp"
#include "ppu/loss.hpp"
#include "ppu/point_io.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

// Mean distance from each point to a dense arc-length-uniform sampling of the
// curve. Discretization error is bounded by arc_length / oracle_samples.
inline double point_to_curve(const PointSet& points, const ParametricCurve& curve,
                             std::size_t oracle_samples = 4096) {
  if (points.dim() != 2) {
    throw DimensionError("point_to_curve is defined for 2-D points only");
  }
  if (oracle_samples < 1000) {
    throw ValidationError("point_to_curve needs at least 1000 oracle samples");
  }
  if (points.empty()) throw ValidationError("point_to_curve: empty point set");
  const PointSet dense = sample_curve_uniform(curve, oracle_samples);
  double total = 0.0;
  for (double d : nearest(points, dense).sq_distance) total += std::sqrt(d);
  return total / static_cast<double>(points.size());
}

struct MetricsReport {
  double chamfer = 0.0;    // squared-distance form
  double hausdorff = 0.0;  // unsquared
  std::optional<double> point_to_curve;
  std::vector<double> nn_distances;  // prediction -> reference, unsquared

  // key = value lines.
  std::string to_text() const {
    std::string s = "# chamfer: mean squared NN distance, both directions\n"
                    "# hausdorff: max unsquared NN distance, both directions\n";
    s += "chamfer = " + format_double(chamfer) + "\n";
    s += "hausdorff = " + format_double(hausdorff) + "\n";
    if (point_to_curve) {
      s += "point_to_curve = " + format_double(*point_to_curve) + "\n";
    }
    return s;
  }
};

inline MetricsReport evaluate_metrics(const PointSet& prediction,
                                      const PointSet& reference,
                                      const ParametricCurve* curve = nullptr) {
  MetricsReport r;
  r.chamfer = chamfer(prediction, reference);
  r.hausdorff = hausdorff(prediction, reference);
  if (curve) r.point_to_curve = point_to_curve(prediction, *curve);
  for (double d : nearest(prediction, reference).sq_distance) {
    r.nn_distances.push_back(std::sqrt(d));
  }
  return r;
}

}  // namespace ppu
