#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cputs/stats.hpp"

namespace cputs {

//! Check (pinball) loss rho_tau(r) = r (tau - 1{r < 0}).
inline double check_loss(double r, double tau)
{
  return r * (tau - (r < 0.0 ? 1.0 : 0.0));
}

//! Linear quantile regression by iteratively reweighted least squares on the
//! smoothed check loss, with the smoothing parameter driven down a fixed
//! continuation schedule. Design rows are augmented with an intercept by the
//! caller; this routine fits exactly the columns it is given.
inline Eigen::VectorXd fit_quantile(const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y,
                                    double tau,
                                    int max_iter = 200)
{
  if (X.rows() != y.size() || X.rows() == 0)
    throw std::invalid_argument("fit_quantile: design/response mismatch");
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("fit_quantile: quantile level outside (0,1)");
  if (X.rows() < X.cols())
    throw std::invalid_argument("fit_quantile: more columns than rows");

  // Least-squares warm start.
  const Eigen::MatrixXd gram0 = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt0(gram0);
  if (ldlt0.info() != Eigen::Success || (ldlt0.vectorD().array() <= 1e-12 * X.rows()).any())
    throw std::runtime_error("fit_quantile: rank-deficient design");
  Eigen::VectorXd beta = ldlt0.solve(X.transpose() * y);

  const double scale = std::max(1e-12, (y - X * beta).cwiseAbs().mean());
  Eigen::VectorXd r(y.size()), w(y.size());
  for (double eps = scale; eps >= 0.999e-6; eps = std::max(eps * 0.1, 1e-6)) {
    for (int it = 0; it < max_iter; ++it) {
      r = y - X * beta;
      w = (r.cwiseAbs().array() + eps).inverse();
      const Eigen::MatrixXd xw = X.transpose() * w.asDiagonal();
      Eigen::MatrixXd gram = xw * X;
      const Eigen::VectorXd rhs =
          xw * y + (tau - 0.5) * 2.0 * X.colwise().sum().transpose();
      gram.diagonal().array() += 1e-12 * gram.trace() / gram.rows();
      const Eigen::VectorXd next = gram.ldlt().solve(rhs);
      const double move = (next - beta).lpNorm<Eigen::Infinity>();
      beta = next;
      if (move < 1e-10 * (1.0 + beta.lpNorm<Eigen::Infinity>()))
        break;
    }
    if (eps <= 1e-6)
      break;
  }
  if (!beta.allFinite())
    throw std::runtime_error("fit_quantile: solution diverged");
  return beta;
}

//! Hall–Sheather bandwidth for quotient density estimation at level tau,
//! capped so both satellite levels tau +- h stay strictly inside (0,1).
inline double hall_sheather_bandwidth(double tau, std::size_t n)
{
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("hall_sheather_bandwidth: level outside (0,1)");
  if (n == 0)
    throw std::invalid_argument("hall_sheather_bandwidth: empty sample");
  const double z = normal_quantile(0.975);
  const double q = normal_quantile(tau);
  const double phi = normal_pdf(q);
  const double core = 1.5 * phi * phi / (2.0 * q * q + 1.0);
  double h = std::pow(static_cast<double>(n), -1.0 / 3.0) *
             std::pow(z, 2.0 / 3.0) * std::cbrt(core);
  h = std::min({h, tau - 0.005, 0.995 - tau});
  if (h <= 0.0)
    throw std::runtime_error("hall_sheather_bandwidth: level too extreme for sample size");
  return h;
}

//! Number of anchor quantile levels as a function of the fitting sample size.
inline int quantile_grid_rule(std::size_t n)
{
  const int k = static_cast<int>(std::ceil(2.0 * std::cbrt(static_cast<double>(n))));
  return std::clamp(k, 9, 25);
}

//! Family of linear conditional quantile fits xi(tau | x) across a grid of
//! levels, plus the satellite levels tau +- h(tau) needed by the quotient
//! density estimator. Per-x evaluation applies monotone rearrangement: the
//! fitted values at all stored levels are sorted so that the resulting curve
//! is a valid (nondecreasing) quantile function even when the individual
//! regression planes cross.
class QuantileProcess
{
public:
  QuantileProcess() = default;

  //! Fit at levels j/(kappa+1), j = 1..kappa, each with its two satellites.
  //! The design matrix X must not include an intercept column; one is added.
  QuantileProcess(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int kappa)
  {
    if (kappa < 1)
      throw std::invalid_argument("QuantileProcess: grid must have at least one level");
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<double> levels;
    levels.reserve(static_cast<std::size_t>(kappa) * 3);
    for (int j = 1; j <= kappa; ++j) {
      const double tau = static_cast<double>(j) / (kappa + 1);
      const double h = hall_sheather_bandwidth(tau, n);
      levels.push_back(tau);
      levels.push_back(tau - h);
      levels.push_back(tau + h);
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 levels.end());

    Eigen::MatrixXd design(X.rows(), X.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(X.cols()) = X;

    taus_ = std::move(levels);
    betas_.reserve(taus_.size());
    for (const double tau : taus_)
      betas_.push_back(fit_quantile(design, y, tau));
    anchor_count_ = kappa;
  }

  //! Assemble from explicit per-level coefficients (levels must be strictly
  //! increasing; coefficients include the intercept as the first entry).
  QuantileProcess(std::vector<double> taus, std::vector<Eigen::VectorXd> betas)
      : taus_(std::move(taus)), betas_(std::move(betas)), anchor_count_(static_cast<int>(taus_.size()))
  {
    if (taus_.size() != betas_.size() || taus_.empty())
      throw std::invalid_argument("QuantileProcess: level/coefficient mismatch");
    if (!std::is_sorted(taus_.begin(), taus_.end()))
      throw std::invalid_argument("QuantileProcess: levels must be sorted");
  }

  const std::vector<double>& levels() const { return taus_; }
  int anchor_count() const { return anchor_count_; }

  //! Rearranged quantile curve at covariate x: values()[i] is the monotone
  //! estimate of xi(levels()[i] | x).
  std::vector<double> curve_at(const Eigen::RowVectorXd& x) const
  {
    std::vector<double> vals(taus_.size());
    Eigen::RowVectorXd row(x.size() + 1);
    row[0] = 1.0;
    row.rightCols(x.size()) = x;
    for (std::size_t i = 0; i < betas_.size(); ++i)
      vals[i] = row.dot(betas_[i]);
    std::sort(vals.begin(), vals.end());
    return vals;
  }

  //! xi(tau | x) by linear interpolation between the rearranged fitted
  //! levels; constant extrapolation beyond the outermost levels.
  double eval(double tau, const Eigen::RowVectorXd& x) const
  {
    const std::vector<double> vals = curve_at(x);
    return interpolate(tau, vals);
  }

  //! Same, but reusing a curve already produced by curve_at(x).
  double interpolate(double tau, const std::vector<double>& vals) const
  {
    if (tau <= taus_.front())
      return vals.front();
    if (tau >= taus_.back())
      return vals.back();
    const auto it = std::upper_bound(taus_.begin(), taus_.end(), tau);
    const std::size_t hi = static_cast<std::size_t>(it - taus_.begin());
    const std::size_t lo = hi - 1;
    const double t = (tau - taus_[lo]) / (taus_[hi] - taus_[lo]);
    return vals[lo] + t * (vals[hi] - vals[lo]);
  }

private:
  std::vector<double> taus_;
  std::vector<Eigen::VectorXd> betas_;
  int anchor_count_ = 0;
};

} // namespace cputs
