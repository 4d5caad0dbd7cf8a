#include <catch2/catch_amalgamated.hpp>

#include "cputs/conformal.hpp"
#include "cputs/rng.hpp"

#include <cmath>
#include <set>

using namespace cputs;
using Catch::Approx;

TEST_CASE("weighted p-value on hand examples with unit weights")
{
  CalibrationScores cal;
  cal.scores = {1.0, 2.0, 3.0};
  cal.weights = {1.0, 1.0, 1.0};
  REQUIRE(weighted_p_value(cal, 2.5, 1.0) == Approx(0.5));
  REQUIRE(weighted_p_value(cal, 1.5, 1.0) == Approx(0.75));
  REQUIRE(weighted_p_value(cal, 0.0, 1.0) == Approx(1.0));
  REQUIRE(weighted_p_value(cal, 3.5, 1.0) == Approx(0.25));
  // Ties count in favour of the test point.
  REQUIRE(weighted_p_value(cal, 3.0, 1.0) == Approx(0.5));
}

TEST_CASE("weighted p-value respects the weights")
{
  CalibrationScores cal;
  cal.scores = {1.0, 2.0};
  cal.weights = {3.0, 1.0};
  // Only the score 2 exceeds 1.5: p = (1 + w_test) / (4 + w_test).
  REQUIRE(weighted_p_value(cal, 1.5, 2.0) == Approx(0.5));
  REQUIRE_THROWS_AS(weighted_p_value(CalibrationScores{}, 0.0, 1.0), std::invalid_argument);
  CalibrationScores bad;
  bad.scores = {1.0};
  bad.weights = {0.0};
  REQUIRE_THROWS_AS(weighted_p_value(bad, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("p-values are invariant to a common weight rescaling")
{
  Rng rng(19);
  CalibrationScores cal, scaled;
  for (int i = 0; i < 200; ++i) {
    cal.scores.push_back(rng.normal());
    cal.weights.push_back(0.1 + 3.0 * rng.uniform());
  }
  scaled = cal;
  for (double& w : scaled.weights)
    w *= 137.25;
  for (int t = 0; t < 50; ++t) {
    const double r = rng.normal();
    const double w = 0.1 + rng.uniform();
    const double a = weighted_p_value(cal, r, w);
    const double b = weighted_p_value(scaled, r, 137.25 * w);
    REQUIRE(a == Approx(b).margin(1e-12));
  }
}

TEST_CASE("the p-value table matches the direct computation")
{
  Rng rng(23);
  CalibrationScores cal;
  for (int i = 0; i < 500; ++i) {
    cal.scores.push_back(rng.normal());
    cal.weights.push_back(0.05 + 2.0 * rng.uniform());
  }
  const PValueTable table(cal);
  for (int t = 0; t < 200; ++t) {
    const double r = 3.0 * rng.normal();
    const double w = 0.05 + rng.uniform();
    REQUIRE(table.p_value(r, w) == Approx(weighted_p_value(cal, r, w)).margin(1e-12));
  }
}

TEST_CASE("p-values are superuniform under exchangeability")
{
  Rng rng(29);
  const int n_cal = 99;
  const int trials = 20000;
  const std::vector<double> ts{0.05, 0.1, 0.2, 0.5};
  std::vector<int> below(ts.size(), 0);
  CalibrationScores cal;
  cal.scores.resize(n_cal);
  cal.weights.assign(n_cal, 1.0);
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n_cal; ++i)
      cal.scores[static_cast<std::size_t>(i)] = rng.normal();
    const double p = weighted_p_value(cal, rng.normal(), 1.0);
    for (std::size_t k = 0; k < ts.size(); ++k)
      below[k] += p <= ts[k] ? 1 : 0;
  }
  for (std::size_t k = 0; k < ts.size(); ++k)
    REQUIRE(static_cast<double>(below[k]) / trials <= ts[k] + 0.03);
}

TEST_CASE("extract_set interpolates crossings into intervals")
{
  const std::vector<double> grid{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> p{0.0, 1.0, 1.0, 0.0};
  const std::vector<Interval> set = extract_set(grid, p, 0.5);
  REQUIRE(set.size() == 1);
  REQUIRE(set[0].lo == Approx(0.5));
  REQUIRE(set[0].hi == Approx(2.5));
  REQUIRE(set[0].length() == Approx(2.0));

  // Two bumps give two intervals; ends above alpha stay open to the edge.
  const std::vector<double> grid2{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> p2{0.8, 0.1, 0.1, 0.9, 0.9};
  const std::vector<Interval> set2 = extract_set(grid2, p2, 0.5);
  REQUIRE(set2.size() == 2);
  REQUIRE(set2[0].lo == Approx(0.0));
  REQUIRE(set2[1].hi == Approx(4.0));
  REQUIRE_THROWS_AS(extract_set(grid, p2, 0.5), std::invalid_argument);
}

TEST_CASE("prediction result covers points inside its intervals")
{
  PredictionResult res;
  res.set = {{0.0, 1.0}, {2.0, 2.5}};
  REQUIRE(res.covers(0.5));
  REQUIRE(res.covers(1.0));
  REQUIRE_FALSE(res.covers(1.5));
  REQUIRE(res.covers(2.25));
  REQUIRE(res.total_length() == Approx(1.5));
}

TEST_CASE("source split is a disjoint seed-stable partition")
{
  const SplitPlan plan = SplitPlan::make(101, 0.5, 7);
  REQUIRE(plan.train.size() == 50);
  REQUIRE(plan.calibration.size() == 51);
  std::set<std::size_t> all(plan.train.begin(), plan.train.end());
  all.insert(plan.calibration.begin(), plan.calibration.end());
  REQUIRE(all.size() == 101);
  REQUIRE(*all.rbegin() == 100);

  const SplitPlan again = SplitPlan::make(101, 0.5, 7);
  REQUIRE(again.train == plan.train);
  const SplitPlan other = SplitPlan::make(101, 0.5, 8);
  REQUIRE(other.train != plan.train);

  REQUIRE_THROWS_AS(SplitPlan::make(3, 0.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(SplitPlan::make(100, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(SplitPlan::make(100, 1.0, 1), std::invalid_argument);
}

namespace {

struct PipelineData
{
  Eigen::MatrixXd source_X;
  Eigen::VectorXd source_y;
  Eigen::MatrixXd target_X;
};

PipelineData make_pipeline_data(std::size_t n, std::uint64_t seed)
{
  Rng rng(seed);
  PipelineData d;
  d.source_X.resize(static_cast<Eigen::Index>(n), 1);
  d.source_y.resize(static_cast<Eigen::Index>(n));
  d.target_X.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double ys = rng.normal();
    d.source_y[static_cast<Eigen::Index>(i)] = ys;
    d.source_X(static_cast<Eigen::Index>(i), 0) = ys + 0.5 * rng.normal();
    const double yt = 1.0 + rng.normal();
    d.target_X(static_cast<Eigen::Index>(i), 0) = yt + 0.5 * rng.normal();
  }
  return d;
}

} // namespace

TEST_CASE("labeled pipeline with an empty labeled set equals the unlabeled pipeline")
{
  const PipelineData d = make_pipeline_data(400, 41);
  Eigen::MatrixXd no_labeled_X(0, 1);
  Eigen::VectorXd no_labeled_y(0);
  PipelineConfig cfg;
  cfg.seed = 5;

  Eigen::RowVectorXd x(1);
  x << 1.2;
  const PredictionResult a = scenario1_predict(d.source_X, d.source_y, d.target_X, x, 0.1, cfg);
  const PredictionResult b = scenario2_predict(d.source_X, d.source_y, no_labeled_X,
                                               no_labeled_y, d.target_X, x, 0.1, cfg);
  REQUIRE(a.p_values.size() == b.p_values.size());
  for (std::size_t i = 0; i < a.p_values.size(); ++i)
    REQUIRE(a.p_values[i] == b.p_values[i]); // bitwise identical
  REQUIRE(a.set.size() == b.set.size());
}

TEST_CASE("pipeline produces valid p-values and a nonempty band at moderate alpha")
{
  const PipelineData d = make_pipeline_data(500, 43);
  PipelineConfig cfg;
  cfg.seed = 3;
  const ConformalPipeline pipe =
      ConformalPipeline::fit_unlabeled(d.source_X, d.source_y, d.target_X, cfg);
  Eigen::RowVectorXd x(1);
  x << 0.8;
  const PredictionResult res = pipe.predict(x, 0.1);
  for (const double p : res.p_values) {
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
  REQUIRE_FALSE(res.set.empty());
  REQUIRE(res.total_length() > 0.5);
  REQUIRE(res.total_length() < 10.0);
  REQUIRE_THROWS_AS(pipe.predict(x, 0.0), std::invalid_argument);

  // The per-candidate accessor agrees with the grid computation.
  const double y_mid = res.candidate_grid[res.candidate_grid.size() / 2];
  REQUIRE(pipe.p_value_at(x, y_mid) == Approx(res.p_values[res.p_values.size() / 2]).margin(1e-12));
}

TEST_CASE("oracle weight path bypasses the fit and flags the missing model")
{
  const PipelineData d = make_pipeline_data(300, 47);
  PipelineConfig cfg;
  cfg.seed = 9;
  cfg.oracle_weight = [](double y) { return std::exp(y - 0.5); };
  const ConformalPipeline pipe =
      ConformalPipeline::fit_unlabeled(d.source_X, d.source_y, d.target_X, cfg);
  REQUIRE_THROWS_AS(pipe.weight_model(), std::logic_error);
  REQUIRE(pipe.weight_fn()(1.0) == Approx(std::exp(0.5)));

  Eigen::RowVectorXd x(1);
  x << 1.0;
  const PredictionResult res = pipe.predict(x, 0.1);
  REQUIRE_FALSE(res.set.empty());
}

TEST_CASE("combined score blends endpoints correctly")
{
  CombinedScore s;
  s.k = 1.0;
  s.r1 = 5.0;
  s.r2 = -2.0;
  REQUIRE(s.value() == Approx(-2.0)); // k = 1: source-only score
  s.k = 0.0;
  REQUIRE(s.value() == Approx(5.0));
  s.k = 0.25;
  REQUIRE(s.value() == Approx(0.75 * 5.0 + 0.25 * -2.0));
}
