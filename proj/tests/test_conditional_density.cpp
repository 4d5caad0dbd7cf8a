#include <catch2/catch_amalgamated.hpp>

#include "cputs/conditional_density.hpp"
#include "cputs/rng.hpp"
#include "cputs/stats.hpp"

#include <cmath>

using namespace cputs;
using Catch::Approx;

namespace {

//! Quantile process of the standard normal: xi(tau | x) = Phi^{-1}(tau),
//! independent of x, on kappa levels j/(kappa+1).
QuantileProcess standard_normal_process(int kappa)
{
  std::vector<double> taus;
  std::vector<Eigen::VectorXd> betas;
  for (int j = 1; j <= kappa; ++j) {
    const double tau = static_cast<double>(j) / (kappa + 1);
    taus.push_back(tau);
    Eigen::VectorXd b(2);
    b << normal_quantile(tau), 0.0;
    betas.push_back(b);
  }
  return QuantileProcess(std::move(taus), std::move(betas));
}

} // namespace

TEST_CASE("density curve normalizes to one on its grid")
{
  ConditionalDensity dens(standard_normal_process(21), -3.0, 3.0, 1024);
  dens.set_sample_size(2000);
  Eigen::RowVectorXd x(1);
  x << 0.4; // irrelevant: the process is constant in x
  const DensityCurve curve = dens.curve(x);

  const std::vector<double>& grid = dens.grid();
  std::vector<double> vals(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    vals[i] = curve.source(grid[i]);
  REQUIRE(trapezoid(grid, vals) == Approx(1.0).margin(1e-3));
}

TEST_CASE("quotient estimate tracks the true normal density at the anchors")
{
  ConditionalDensity dens(standard_normal_process(25), -3.2, 3.2, 1024);
  dens.set_sample_size(100000); // small bandwidths: quotient nearly exact
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DensityCurve curve = dens.curve(x);
  for (const double y : {-0.5, 0.0, 0.5})
    REQUIRE(curve.source(y) == Approx(normal_pdf(y)).epsilon(0.05));
  for (const double y : {-1.5, 1.5})
    REQUIRE(curve.source(y) == Approx(normal_pdf(y)).epsilon(0.10));
}

TEST_CASE("unit weight leaves the curve unchanged")
{
  ConditionalDensity dens(standard_normal_process(17), -3.0, 3.0, 512);
  dens.set_sample_size(1500);
  Eigen::RowVectorXd x(1);
  x << -1.0;
  const DensityCurve plain = dens.curve(x);
  const DensityCurve weighted = dens.curve(x, [](double) { return 1.0; });
  for (double y = -3.5; y <= 3.5; y += 0.05)
    REQUIRE(weighted.target(y) == Approx(plain.source(y)).margin(1e-12));
}

TEST_CASE("exponential tilting of a normal recovers the shifted normal")
{
  // exp(y - 1/2) * N(0,1) density is exactly the N(1,1) density; with anchors
  // deep into both tails the polyline reproduces it to a few parts in 10^3.
  ConditionalDensity dens(standard_normal_process(199), -3.2, 3.2, 4096);
  dens.set_sample_size(1000000);
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DensityCurve curve = dens.curve(x, [](double y) { return std::exp(y - 0.5); });

  double sup = 0.0;
  for (double y = -2.0; y <= 2.5; y += 0.01)
    sup = std::max(sup, std::abs(curve.target(y) - normal_pdf(y - 1.0)));
  REQUIRE(sup <= 5e-3);
}

TEST_CASE("tails carry the leftover anchor mass")
{
  // With kappa anchors the polyline keeps mass 1/(kappa+1) beyond each end.
  const int kappa = 19;
  ConditionalDensity dens(standard_normal_process(kappa), -3.0, 3.0, 2048);
  dens.set_sample_size(5000);
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DensityCurve curve = dens.curve(x);

  const double edge = normal_quantile(static_cast<double>(kappa) / (kappa + 1));
  const std::vector<double> grid = linspace_vec(edge, edge + 6.0, 4001);
  std::vector<double> vals(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    vals[i] = curve.source(grid[i]);
  const double tail_mass = trapezoid(grid, vals);
  REQUIRE(tail_mass == Approx(1.0 / (kappa + 1)).epsilon(0.25));
}

TEST_CASE("degenerate anchors are flagged and kept finite")
{
  // Two identical levels collapse onto one anchor point.
  std::vector<double> taus{0.3, 0.5, 0.7};
  std::vector<Eigen::VectorXd> betas(3, Eigen::VectorXd(2));
  betas[0] << 0.0, 0.0;
  betas[1] << 0.0, 0.0; // same plane: zero spread at the median
  betas[2] << 1.0, 0.0;
  ConditionalDensity dens(QuantileProcess(std::move(taus), std::move(betas)), -1.0, 2.0, 256);
  dens.set_sample_size(900);
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DensityCurve curve = dens.curve(x);
  REQUIRE(curve.degenerate());
  for (double y = -1.5; y <= 2.5; y += 0.1) {
    REQUIRE(std::isfinite(curve.source(y)));
    REQUIRE(curve.source(y) <= DensityCurve::kCap);
  }
}

TEST_CASE("fit_conditional_density on a linear-Gaussian sample")
{
  Rng rng(3);
  const int n = 3000;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2.0 * rng.uniform() - 1.0;
    y[i] = x(i, 0) + rng.normal();
  }
  const ConditionalDensity dens = fit_conditional_density(x, y);

  Eigen::RowVectorXd probe(1);
  probe << 0.5; // Y | X = 0.5 is N(0.5, 1)
  const DensityCurve curve = dens.curve(probe);
  REQUIRE(curve.source(0.5) == Approx(normal_pdf(0.0)).epsilon(0.15));
  REQUIRE(curve.source(-0.5) == Approx(normal_pdf(1.0)).epsilon(0.25));
  REQUIRE_FALSE(curve.degenerate());

  Eigen::MatrixXd tiny(2, 1);
  tiny.setZero();
  Eigen::VectorXd tiny_y(2);
  tiny_y.setZero();
  REQUIRE_THROWS_AS(fit_conditional_density(tiny, tiny_y), std::invalid_argument);
}

TEST_CASE("weight correction requires apply_weight")
{
  ConditionalDensity dens(standard_normal_process(15), -3.0, 3.0, 512);
  dens.set_sample_size(700);
  Eigen::RowVectorXd x(1);
  x << 0.0;
  const DensityCurve curve = dens.curve(x);
  REQUIRE_THROWS_AS(curve.target(0.0), std::logic_error);
}
