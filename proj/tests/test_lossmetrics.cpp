#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ppu/gradcheck.hpp"
#include "ppu/loss.hpp"
#include "ppu/metrics.hpp"

using namespace ppu;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PointSet pts(std::size_t d, std::vector<double> c) { return PointSet(d, std::move(c)); }

PointSet rigid(const PointSet& p, double angle, double tx, double ty) {
  PointSet out = p;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < p.size(); ++i) {
    out(i, 0) = c * p(i, 0) - s * p(i, 1) + tx;
    out(i, 1) = s * p(i, 0) + c * p(i, 1) + ty;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- chamfer

TEST(Chamfer, SelfIsZero) {
  std::mt19937_64 rng(1);
  PointSet p = oracle::random_points(30, 3, rng);
  EXPECT_EQ(chamfer(p, p), 0.0);
}

TEST(Chamfer, TwoPointsOnALine) { EXPECT_DOUBLE_EQ(chamfer(pts(1, {0}), pts(1, {1})), 2.0); }

TEST(Chamfer, Symmetric) {
  std::mt19937_64 rng(2);
  PointSet p = oracle::random_points(25, 2, rng), q = oracle::random_points(40, 2, rng);
  EXPECT_DOUBLE_EQ(chamfer(p, q), chamfer(q, p));
}

TEST(Chamfer, EmptyOrMismatchedThrows) {
  EXPECT_THROW(chamfer(PointSet(2, {}), pts(2, {0, 0})), ValidationError);
  EXPECT_THROW(chamfer(pts(2, {0, 0}), pts(3, {0, 0, 0})), DimensionError);
}

// ---------------------------------------------------------------- oracle sweep

TEST(OracleSweep, ChamferModifiedHausdorffMatchBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(1, 200);
    const std::size_t d = 2 + trial % 2;
    PointSet p = oracle::random_points(nd(rng), d, rng);
    PointSet q = oracle::random_points(nd(rng), d, rng);
    const double delta = 0.01 * (1 + trial % 7);
    ASSERT_NEAR(chamfer(p, q), oracle::chamfer(p, q), 1e-12) << trial;
    ASSERT_NEAR(modified_chamfer_value(p, q, delta), oracle::modified_chamfer(p, q, delta), 1e-12)
        << trial;
    ASSERT_NEAR(hausdorff(p, q), oracle::hausdorff(p, q), 1e-12) << trial;
  }
}

// ---------------------------------------------------------------- modified chamfer

TEST(ModifiedChamfer, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(4);
  PointSet p = oracle::random_points(20, 2, rng);
  EXPECT_EQ(modified_chamfer(p, p, LossConfig{}), 0.0);
}

TEST(ModifiedChamfer, OutlierOnlyChangesNormalization) {
  // q has spacing 1, so delta = 5. The outlier at x = 100 is filtered both ways.
  PointSet q = pts(1, {0, 1, 2, 3});
  PointSet p = pts(1, {0.5, 1, 2, 3});
  PointSet p_out = pts(1, {0.5, 1, 2, 3, 100});
  const double delta = chamfer_delta(q, LossConfig{});
  EXPECT_DOUBLE_EQ(delta, 5.0);
  const double base = modified_chamfer_value(p, q, delta);
  const double with = modified_chamfer_value(p_out, q, delta);
  // Terms: p->q sum 0.25; q->p sum 0.25 (point 0 to 0.5).
  EXPECT_DOUBLE_EQ(base, 0.25 / 4 + 0.25 / 4);
  EXPECT_DOUBLE_EQ(with, 0.25 / 5 + 0.25 / 4);
}

TEST(ModifiedChamfer, InfiniteDeltaIsChamfer) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    PointSet p = oracle::random_points(30, 2, rng), q = oracle::random_points(25, 2, rng);
    EXPECT_NEAR(modified_chamfer_value(p, q, kInf), chamfer(p, q), 1e-12);
    EXPECT_NEAR(modified_chamfer(p, q, LossConfig{kInf}), chamfer(p, q), 1e-12);
  }
}

TEST(ModifiedChamfer, MonotoneInDelta) {
  std::mt19937_64 rng(6);
  PointSet p = oracle::random_points(40, 2, rng), q = oracle::random_points(40, 2, rng);
  double prev = 0.0;
  for (double delta = 0.0; delta < 1.0; delta += 0.005) {
    const double v = modified_chamfer_value(p, q, delta);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(ModifiedChamfer, TensorValueMatchesPointValue) {
  std::mt19937_64 rng(7);
  PointSet p = oracle::random_points(20, 3, rng), q = oracle::random_points(35, 3, rng);
  Tape tape;
  EXPECT_NEAR(modified_chamfer(tape, p.to_tensor(true), q, LossConfig{}).item(),
              modified_chamfer(p, q, LossConfig{}), 1e-15);
}

TEST(ModifiedChamfer, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    PointSet q = oracle::random_points(30, 2, rng);
    Tensor p = oracle::random_tensor({20, 2}, rng);
    const double err = finite_difference_check(
        [&](Tape& tape, const std::vector<Tensor>& in) {
          return modified_chamfer(tape, in[0], q, LossConfig{});
        },
        {p}, 1e-7);
    EXPECT_LT(err, 1e-5) << trial;
  }
}

TEST(ModifiedChamfer, NonFinitePredictionGivesNaN) {
  Tensor p = Tensor::from({2, 1}, {0.0, std::numeric_limits<double>::quiet_NaN()}, true);
  Tape tape;
  EXPECT_TRUE(std::isnan(modified_chamfer(tape, p, pts(1, {0, 1}), LossConfig{}).item()));
}

TEST(ModifiedChamfer, NonPositiveMultiplierThrows) {
  EXPECT_THROW(chamfer_delta(pts(1, {0, 1}), LossConfig{0.0}), ValidationError);
}

// ---------------------------------------------------------------- hausdorff

TEST(Hausdorff, SelfIsZero) {
  std::mt19937_64 rng(9);
  PointSet p = oracle::random_points(30, 2, rng);
  EXPECT_EQ(hausdorff(p, p), 0.0);
}

TEST(Hausdorff, LineExample) { EXPECT_DOUBLE_EQ(hausdorff(pts(1, {0, 1}), pts(1, {0, 3})), 2.0); }

TEST(Hausdorff, BoundsEveryNearestDistance) {
  std::mt19937_64 rng(10);
  PointSet p = oracle::random_points(30, 2, rng), q = oracle::random_points(20, 2, rng);
  const double h = hausdorff(p, q);
  for (double d : oracle::nn_sq(p, q)) EXPECT_GE(h, std::sqrt(d));
  for (double d : oracle::nn_sq(q, p)) EXPECT_GE(h, std::sqrt(d));
}

// ---------------------------------------------------------------- invariance

TEST(Invariance, RigidTransformLeavesMetricsUnchanged) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    PointSet p = oracle::random_points(40, 2, rng), q = oracle::random_points(50, 2, rng);
    const double angle = 0.3 + t, tx = 2.0 - t, ty = 0.5 * t;
    PointSet rp = rigid(p, angle, tx, ty), rq = rigid(q, angle, tx, ty);
    EXPECT_NEAR(chamfer(p, q), chamfer(rp, rq), 1e-9);
    EXPECT_NEAR(hausdorff(p, q), hausdorff(rp, rq), 1e-9);
    EXPECT_NEAR(modified_chamfer_value(p, q, 0.05), modified_chamfer_value(rp, rq, 0.05), 1e-9);
  }
}

// ---------------------------------------------------------------- point to curve

TEST(PointToCurve, OnCurvePointsWithinDiscretization) {
  ParametricCurve curve = generate_curve(CurveKind::Fourier, 12);
  PointSet on = sample_curve_uniform(curve, 333);
  EXPECT_LT(point_to_curve(on, curve, 4096), curve.arc_length() / 4096.0);
}

TEST(PointToCurve, PointOutsideUnitCircle) {
  ParametricCurve circle = make_curve(CurveKind::Circle, {1.0});
  const double v = point_to_curve(pts(2, {2, 0}), circle, 2000);
  EXPECT_NEAR(v, 1.0, circle.arc_length() / 2000.0);
}

TEST(PointToCurve, RefinementIsStable) {
  ParametricCurve curve = generate_curve(CurveKind::Ellipse, 13);
  std::mt19937_64 rng(14);
  PointSet p = oracle::random_points(50, 2, rng);
  const double coarse = point_to_curve(p, curve, 1000);
  const double fine = point_to_curve(p, curve, 2000);
  EXPECT_LE(fine, coarse + curve.arc_length() / 1000.0);
}

TEST(PointToCurve, Errors) {
  ParametricCurve circle = make_curve(CurveKind::Circle, {1.0});
  EXPECT_THROW(point_to_curve(pts(3, {0, 0, 0}), circle), DimensionError);
  EXPECT_THROW(point_to_curve(pts(2, {0, 0}), circle, 999), ValidationError);
}

// ---------------------------------------------------------------- report

TEST(Report, FieldsAndText) {
  PointSet p = pts(1, {0, 1}), q = pts(1, {0, 3});
  MetricsReport r = evaluate_metrics(p, q);
  EXPECT_DOUBLE_EQ(r.chamfer, oracle::chamfer(p, q));
  EXPECT_DOUBLE_EQ(r.hausdorff, 2.0);
  EXPECT_FALSE(r.point_to_curve.has_value());
  EXPECT_EQ(r.nn_distances, (std::vector<double>{0.0, 1.0}));
  const std::string text = r.to_text();
  EXPECT_NE(text.find("chamfer = "), std::string::npos);
  EXPECT_NE(text.find("hausdorff = 2"), std::string::npos);
  EXPECT_EQ(text.find("point_to_curve"), std::string::npos);
}

TEST(Report, IncludesPointToCurveWhenCurveGiven) {
  ParametricCurve circle = make_curve(CurveKind::Circle, {1.0});
  PointSet p = sample_curve_uniform(circle, 64);
  MetricsReport r = evaluate_metrics(p, p, &circle);
  ASSERT_TRUE(r.point_to_curve.has_value());
  EXPECT_LT(*r.point_to_curve, 1e-2);
}
