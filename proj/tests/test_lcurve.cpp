#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "hsnet/experiment.hpp"
#include "hsnet/lcurve.hpp"

using namespace hsnet;

namespace {

LCurve curve_of(std::initializer_list<std::array<double, 3>> pts,
                PenaltyTransform phi = PenaltyTransform::identity) {
  LCurve c;
  c.phi = phi;
  for (const auto& p : pts) c.points.push_back({p[0], p[1], p[2], false});
  return c;
}

struct SmallTask {
  Dataset data = gen_gaussian({4, 4, 1.0, 1e-4, 0.9}, 300, 21);
  GraphFactory factory = [](std::uint64_t seed) { return build_linear_autoencoder(8, 8, seed); };
  TrainConfig train = [] {
    TrainConfig c;
    c.step_size = 0.3;
    c.epochs = 30;
    c.seed = 5;
    return c;
  }();
};

}  // namespace

TEST(Menger, RightAngleAndCollinear) {
  // Unit right angle: circumradius sqrt(2)/2.
  EXPECT_NEAR(menger_curvature(0, 1, 0, 0, 1, 0), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(menger_curvature(0, 0, 1, 1, 2, 2), 0.0);
  EXPECT_EQ(menger_curvature(0, 0, 0, 0, 1, 1), 0.0);
}

TEST(Corner, RightAngleLPicksTheBend) {
  const auto r = corner_by_curvature(curve_of({{1e-3, 0, 1}, {1e-2, 0, 0}, {1e-1, 1, 0}}));
  EXPECT_EQ(r.index, 1u);
  EXPECT_EQ(r.lambda, 1e-2);
}

TEST(Corner, CollinearPointsReturnTheMiddle) {
  const auto r = corner_by_curvature(curve_of({{1, 0, 3}, {2, 1, 2}, {3, 2, 1}}));
  EXPECT_EQ(r.index, 1u);
  EXPECT_EQ(r.lambda, 2.0);
}

TEST(Corner, TiesGoToTheLargerLambda) {
  // Symmetric zig-zag: both interior points have the same curvature.
  const auto r = corner_by_curvature(curve_of({{1, 0, 3}, {2, 1, 1}, {3, 2, 3}, {4, 3, 1}}));
  EXPECT_EQ(r.curvature[1], r.curvature[2]);
  EXPECT_EQ(r.index, 2u);
}

TEST(Corner, FewerThanThreePointsIsInsufficient) {
  EXPECT_THROW(corner_by_curvature(curve_of({{1, 0, 1}, {2, 1, 0}})), InsufficientDataError);
  LCurve c = curve_of({{1, 0, 1}, {2, 1, 0}, {3, 2, 0}});
  c.points[1].diverged = true;
  EXPECT_THROW(corner_by_curvature(c), InsufficientDataError);
}

TEST(Corner, IgnoresLambdaLabels) {
  const LCurve a = curve_of({{1e-5, 0.01, 9}, {1e-4, 0.011, 4}, {1e-3, 0.02, 1}, {1e-2, 0.2, 0.5}});
  LCurve b = a;
  const double relabel[] = {0.1, 0.7, 3.0, 50.0};
  for (std::size_t i = 0; i < 4; ++i) b.points[i].lambda = relabel[i];
  EXPECT_EQ(corner_by_curvature(a).index, corner_by_curvature(b).index);
}

TEST(Corner, DivergedPointsAreSkipped) {
  LCurve c = curve_of({{1, 0, 1}, {2, 0, 0}, {3, 5, 5}, {4, 1, 0}});
  c.points[2].diverged = true;
  EXPECT_EQ(corner_by_curvature(c).index, 1u);
}

TEST(SelectCorner, MatchesCurvatureCornerOnAnOrderedCurve) {
  const LCurve c = curve_of({{1e-5, 0.01, 9}, {1e-4, 0.011, 4}, {1e-3, 0.02, 1}, {1e-2, 0.2, 0.5}});
  const CornerResult a = corner_by_curvature(c), b = select_corner(c);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(a.curvature, b.curvature);
}

TEST(SelectCorner, NoisyTailDoesNotWin) {
  // A clean bend at index 2, then a small spike in the flat tail that raw
  // curvature prefers.
  const LCurve c = curve_of({{1, 0.00, 1.00},
                             {2, 0.02, 0.30},
                             {3, 0.06, 0.05},
                             {4, 0.60, 0.02},
                             {5, 0.58, 0.05},
                             {6, 0.62, 0.01},
                             {7, 1.00, 0.00}});
  EXPECT_EQ(corner_by_curvature(c).index, 4u);
  const CornerResult r = select_corner(c);
  EXPECT_EQ(r.index, 2u);
  EXPECT_EQ(r.lambda, 3.0);
  ASSERT_EQ(r.curvature.size(), 7u);
  EXPECT_EQ(r.curvature[4], 0.0);
}

TEST(SelectCorner, IndicesReferToTheFullCurve) {
  // Point 1 diverged and point 3 is out of order; the ordered part is
  // (0,1) (0.1,0.1) (0.2,0) (1,0), whose sharpest turn is at (0.2,0).
  LCurve c = curve_of({{1, 0, 1}, {2, 0.5, 0.7}, {3, 0.1, 0.1}, {4, 0.05, 0.2}, {5, 0.2, 0}, {6, 1, 0}});
  c.points[1].diverged = true;
  const CornerResult r = select_corner(c);
  EXPECT_EQ(r.index, 4u);
  EXPECT_EQ(r.lambda, 5.0);
  EXPECT_EQ(r.curvature[1], 0.0);
  EXPECT_EQ(r.curvature[3], 0.0);
  EXPECT_GT(r.curvature[2], 0.0);
  // Nothing but noise: falls back to the plain rule on every point.
  const LCurve reversed = curve_of({{1, 0.5, 0.5}, {2, 0.4, 0.6}, {3, 0.3, 0.8}});
  EXPECT_EQ(select_corner(reversed).index, corner_by_curvature(reversed).index);
  EXPECT_THROW(select_corner(curve_of({{1, 0, 1}, {2, 1, 0}})), InsufficientDataError);
}

TEST(LogGrid, EndpointsAndSpacing) {
  const auto g = log_grid(1e-5, 1e-1, 2);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-5);
  EXPECT_DOUBLE_EQ(g.back(), 1e-1);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::sqrt(10.0), 1e-12);
}

TEST(Grid, SingleLambdaGivesOnePoint) {
  SmallTask t;
  const std::vector<double> lambdas{1e-3};
  EXPECT_EQ(build_lcurve_grid(t.factory, t.data, lambdas, t.train).points.size(), 1u);
}

TEST(Grid, EndpointOrderingOnConvexTask) {
  SmallTask t;
  const auto lambdas = log_grid(1e-5, 1e-1, 1);
  const LCurve c = build_lcurve_grid(t.factory, t.data, lambdas, t.train);
  ASSERT_EQ(c.points.size(), lambdas.size());
  EXPECT_LE(c.points.front().deviation, c.points.back().deviation);
  EXPECT_GE(c.points.front().sparsity, c.points.back().sparsity);
}

TEST(Grid, DeterministicGivenSeed) {
  SmallTask t;
  const auto lambdas = log_grid(1e-4, 1e-2, 1);
  EXPECT_EQ(build_lcurve_grid(t.factory, t.data, lambdas, t.train).points,
            build_lcurve_grid(t.factory, t.data, lambdas, t.train).points);
}

TEST(Grid, DivergentRunsAreFlagged) {
  SmallTask t;
  t.train.step_size = 40.0;
  const std::vector<double> lambdas{1e-3, 1e-2};
  const LCurve c = build_lcurve_grid(t.factory, t.data, lambdas, t.train);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_TRUE(c.points[0].diverged);
  EXPECT_TRUE(c.points[1].diverged);
}

TEST(LCurveCsv, RoundTripsBitExactly) {
  SmallTask t;
  const auto lambdas = log_grid(1e-4, 1e-1, 1);
  LCurve c = build_lcurve_grid(t.factory, t.data, lambdas, t.train, PenaltyTransform::log);
  c.points[1].diverged = true;
  std::stringstream ss;
  write_lcurve_csv(ss, c);
  const LCurve back = read_lcurve_csv(ss, PenaltyTransform::log);
  EXPECT_EQ(back.points, c.points);
}

TEST(Overhead, ProbeAndFinalEpochsAgainstABaseline) {
  EXPECT_NEAR(epoch_overhead(7 * 4, 268, 279), 6.09, 0.01);
  EXPECT_NEAR(epoch_overhead(5 * 4, 215, 221), 6.33, 0.01);
  EXPECT_EQ(epoch_overhead(0, 100, 100), 0.0);
  EXPECT_THROW(epoch_overhead(1, 1, 0), DomainError);
}

TEST(Selection, UnboundedCeilingRunsOutOfProbes) {
  SmallTask t;
  NetworkGraph g = t.factory(1);
  SelectorConfig s;
  s.epsilon = std::numeric_limits<double>::max();
  s.max_probes = 6;
  s.probe_epochs = 1;
  try {
    select_and_train(g, t.data, s, t.train, fixed_epoch_budget(1));
    FAIL() << "expected SelectionError";
  } catch (const SelectionError& e) {
    ASSERT_EQ(e.history().size(), 6u);
    for (std::size_t i = 1; i < e.history().size(); ++i) {
      EXPECT_GT(e.history()[i].lambda, e.history()[i - 1].lambda);
    }
  }
}

TEST(Selection, InfeasibleStartKeepsInitialLambda) {
  SmallTask t;
  NetworkGraph g = t.factory(2);
  SelectorConfig s;
  s.lambda0 = 1e-4;
  s.epsilon = 1e-12;  // unreachable after a few epochs
  const auto r = select_and_train(g, t.data, s, t.train, fixed_epoch_budget(3));
  EXPECT_TRUE(r.initial_probe_exceeded);
  EXPECT_EQ(r.lambda, s.lambda0);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.final_epochs(), 3u);
}

TEST(Selection, GuardSemanticsAndStepBack) {
  SmallTask t;
  NetworkGraph g = t.factory(3);
  SelectorConfig s;
  s.lambda0 = 1e-4;
  s.probe_epochs = 10;
  s.warmup_epochs = 10;
  const auto r = select_and_train(g, t.data, s, t.train, fixed_epoch_budget(5));
  ASSERT_TRUE(r.reference_deviation.has_value());
  EXPECT_DOUBLE_EQ(r.epsilon, 1.1 * *r.reference_deviation);
  ASSERT_GE(r.history.size(), 2u);
  for (std::size_t i = 0; i + 1 < r.history.size(); ++i) {
    EXPECT_TRUE(r.history[i].within_ceiling) << i;
    EXPECT_GT(r.history[i + 1].lambda, r.history[i].lambda);
  }
  EXPECT_FALSE(r.history.back().within_ceiling);
  double largest_feasible = 0;
  for (const auto& p : r.history) {
    if (p.within_ceiling) largest_feasible = std::max(largest_feasible, p.lambda);
  }
  EXPECT_EQ(r.lambda, largest_feasible);
  EXPECT_EQ(r.probe_epochs_total(), 10 * r.history.size());
  EXPECT_EQ(r.final_epochs(), 5u);
  for (const auto& st : r.final_stats) EXPECT_EQ(st.lambda, r.lambda);
}

TEST(Selection, AdditiveGrowth) {
  SmallTask t;
  NetworkGraph g = t.factory(4);
  SelectorConfig s;
  s.lambda0 = 0.0;
  s.delta = 2e-2;
  s.growth = LambdaGrowth::additive;
  s.probe_epochs = 5;
  const auto r = select_and_train(g, t.data, s, t.train, fixed_epoch_budget(1));
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_NEAR(r.history[i].lambda, 2e-2 * static_cast<double>(i), 1e-15);
  }
}

TEST(Termination, PlateauStopsAfterPatience) {
  auto stop = objective_plateau(3, 1e-3, 100);
  std::vector<EpochStats> s;
  for (std::size_t e = 1; e <= 100 && !stop(s); ++e) {
    const double E = e < 10 ? 1.0 / static_cast<double>(e) : 0.1;
    s.push_back({e, E, 0.0, 0.0, {}});
  }
  EXPECT_EQ(s.size(), 13u);  // epochs 11-13 fail to beat the 0.1 of epoch 10
  auto capped = objective_plateau(3, 1e-3, 7);
  std::vector<EpochStats> t;
  while (!capped(t)) t.push_back({t.size() + 1, 1.0 / static_cast<double>(t.size() + 1), 0, 0, {}});
  EXPECT_EQ(t.size(), 7u);
}

TEST(GaussianStudy, CornerComesFromTheMeanOfIndependentGrids) {
  GaussianAeSetting setting{{3, 3, 1.0, 1e-4, 0.9}, 6, 3.0};
  GaussianStudyConfig config;
  config.samples = 120;
  config.train = {.step_size = 0.3, .batch_size = 16, .epochs = 15};
  config.grid_lo = 1e-4;
  config.grid_hi = 1e-1;
  config.grid_per_decade = 1;
  config.grid_repetitions = 2;
  config.repetitions = 3;
  const GaussianStudyRow row = run_gaussian_study(setting, config, 11);

  const auto lambdas = log_grid(config.grid_lo, config.grid_hi, config.grid_per_decade);
  auto grid = [&](std::uint64_t grid_seed) {
    TrainConfig t = config.train;
    t.seed = derive_seed(grid_seed, 1);
    return build_lcurve_grid([](std::uint64_t s) { return build_linear_autoencoder(6, 6, s); },
                             gen_gaussian(setting.spec, config.samples, derive_seed(grid_seed, 0)),
                             lambdas, t, config.phi);
  };
  const LCurve a = grid(11), b = grid(derive_seed(11, 501));
  ASSERT_EQ(row.curve.points.size(), lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    EXPECT_DOUBLE_EQ(row.curve.points[i].deviation, (a.points[i].deviation + b.points[i].deviation) / 2);
    EXPECT_DOUBLE_EQ(row.curve.points[i].sparsity, (a.points[i].sparsity + b.points[i].sparsity) / 2);
  }
  EXPECT_EQ(row.corner.lambda, select_corner(row.curve).lambda);
  ASSERT_EQ(row.nonzero.size(), 3u);
  for (std::size_t n : row.nonzero) EXPECT_LE(n, 6u);

  config.grid_repetitions = 0;
  EXPECT_THROW(run_gaussian_study(setting, config, 11), ConfigError);
}
