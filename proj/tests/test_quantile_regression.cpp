#include <catch2/catch_amalgamated.hpp>

#include "cputs/quantile_regression.hpp"
#include "cputs/rng.hpp"
#include "cputs/stats.hpp"

#include <cmath>

using namespace cputs;
using Catch::Approx;

TEST_CASE("check loss on both sides of zero")
{
  REQUIRE(check_loss(1.0, 0.3) == Approx(0.3));
  REQUIRE(check_loss(-1.0, 0.3) == Approx(0.7));
  REQUIRE(check_loss(0.0, 0.9) == Approx(0.0));
}

TEST_CASE("fit_quantile recovers an exact linear relationship")
{
  const int n = 50;
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = -2.0 + 4.0 * i / (n - 1);
    design(i, 0) = 1.0;
    design(i, 1) = x;
    y[i] = 2.0 + 3.0 * x;
  }
  for (const double tau : {0.25, 0.5, 0.9}) {
    const Eigen::VectorXd beta = fit_quantile(design, y, tau);
    REQUIRE(beta[0] == Approx(2.0).margin(2e-4));
    REQUIRE(beta[1] == Approx(3.0).margin(2e-4));
  }
}

TEST_CASE("intercept-only fit approximates the sample quantile")
{
  Rng rng(31);
  const int n = 2001;
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(n, 1);
  Eigen::VectorXd y(n);
  std::vector<double> raw(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.normal();
    raw[static_cast<std::size_t>(i)] = y[i];
  }
  for (const double tau : {0.1, 0.5, 0.75}) {
    const Eigen::VectorXd beta = fit_quantile(design, y, tau);
    REQUIRE(beta[0] == Approx(sample_quantile(raw, tau)).margin(0.02));
  }
}

TEST_CASE("noisy linear model: conditional quantiles shift by the noise quantile")
{
  Rng rng(8);
  const int n = 4000;
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = 3.0 * rng.uniform();
    design(i, 0) = 1.0;
    design(i, 1) = x;
    y[i] = 1.0 + 2.0 * x + rng.normal();
  }
  const Eigen::VectorXd beta = fit_quantile(design, y, 0.8);
  REQUIRE(beta[1] == Approx(2.0).margin(0.1));
  REQUIRE(beta[0] == Approx(1.0 + normal_quantile(0.8)).margin(0.1));
}

TEST_CASE("fit_quantile validates input")
{
  Eigen::MatrixXd x(3, 1);
  x << 1.0, 1.0, 1.0;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  REQUIRE_THROWS_AS(fit_quantile(x, y, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_quantile(x, y, 1.0), std::invalid_argument);
  Eigen::VectorXd wrong(2);
  wrong << 1.0, 2.0;
  REQUIRE_THROWS_AS(fit_quantile(x, wrong, 0.5), std::invalid_argument);
  Eigen::MatrixXd wide(2, 3);
  wide.setOnes();
  Eigen::VectorXd two(2);
  two.setOnes();
  REQUIRE_THROWS_AS(fit_quantile(wide, two, 0.5), std::invalid_argument);
}

TEST_CASE("Hall-Sheather bandwidth values and rate")
{
  // tau = 1/2, n = 1000: closed-form evaluation of the rule.
  REQUIRE(hall_sheather_bandwidth(0.5, 1000) ==
          Approx(0.09715590262051786).epsilon(1e-9));
  // n^{-1/3} rate: scaling n by 8 halves the bandwidth.
  REQUIRE(hall_sheather_bandwidth(0.3, 8000) ==
          Approx(hall_sheather_bandwidth(0.3, 1000) / 2.0).epsilon(1e-12));
  // Extreme levels are capped so the satellites stay inside (0,1).
  REQUIRE(hall_sheather_bandwidth(0.01, 100) == Approx(0.005));
  REQUIRE(hall_sheather_bandwidth(0.99, 100) == Approx(0.005));
  REQUIRE_THROWS_AS(hall_sheather_bandwidth(0.0, 100), std::invalid_argument);
  REQUIRE_THROWS_AS(hall_sheather_bandwidth(0.5, 0), std::invalid_argument);
}

TEST_CASE("anchor-level count rule")
{
  REQUIRE(quantile_grid_rule(1000) == 20); // 2 * 1000^(1/3)
  REQUIRE(quantile_grid_rule(500) == 16);
  REQUIRE(quantile_grid_rule(50) == 9);      // lower clip
  REQUIRE(quantile_grid_rule(1000000) == 25); // upper clip
}

TEST_CASE("quantile process rearranges crossing planes into a monotone curve")
{
  // Hand-built process whose planes cross at x = 1.
  std::vector<double> taus{0.25, 0.5, 0.75};
  std::vector<Eigen::VectorXd> betas(3, Eigen::VectorXd(2));
  betas[0] << 0.0, 1.0;  // 0.25-level: y = x
  betas[1] << 0.5, 0.0;  // median: y = 0.5
  betas[2] << 1.0, -1.0; // 0.75-level: y = 1 - x
  const QuantileProcess proc(taus, betas);

  Eigen::RowVectorXd x(1);
  x << 2.0; // raw fitted values: 2.0, 0.5, -1.0 (decreasing)
  const std::vector<double> curve = proc.curve_at(x);
  REQUIRE(curve[0] == Approx(-1.0));
  REQUIRE(curve[1] == Approx(0.5));
  REQUIRE(curve[2] == Approx(2.0));

  // Interpolation between levels, constant beyond the ends.
  REQUIRE(proc.eval(0.375, x) == Approx(-0.25));
  REQUIRE(proc.eval(0.1, x) == Approx(-1.0));
  REQUIRE(proc.eval(0.9, x) == Approx(2.0));
}

TEST_CASE("fitted quantile process levels include satellites")
{
  Rng rng(14);
  const int n = 300;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    y[i] = x(i, 0) + rng.normal();
  }
  const QuantileProcess proc(x, y, 9);
  REQUIRE(proc.anchor_count() == 9);
  REQUIRE(proc.levels().size() >= 27 - 2); // anchors plus satellites, minus overlaps
  REQUIRE(std::is_sorted(proc.levels().begin(), proc.levels().end()));
}
