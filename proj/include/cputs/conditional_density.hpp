#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cputs/quantile_regression.hpp"
#include "cputs/stats.hpp"

namespace cputs {

//! Piecewise-linear conditional density in y at a fixed covariate value.
//!
//! Anchors sit at the rearranged conditional quantiles of the anchor levels;
//! the density value there is the quotient estimate 2h / (xi(tau+h) - xi(tau-h)).
//! Outside the outermost anchors the curve decays exponentially at the rate
//! that makes each tail carry exactly the probability mass the anchor levels
//! leave beyond it, so the curve integrates to about one and the tails are
//! sharp where the edge density is high relative to the leftover mass and
//! long where it is low.
class DensityCurve
{
public:
  static constexpr double kFloor = 1e-8;
  static constexpr double kCap = 1e6;

  DensityCurve(std::vector<double> ys,
               std::vector<double> ds,
               const std::vector<double>& grid,
               bool degenerate)
      : ys_(std::move(ys)), ds_(std::move(ds)), degenerate_(degenerate)
  {
    if (ys_.size() != ds_.size() || ys_.empty())
      throw std::invalid_argument("DensityCurve: anchor mismatch");
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      vals[i] = raw(grid[i]);
    z_source_ = trapezoid(grid, vals);
    if (!(z_source_ > 0.0) || !std::isfinite(z_source_))
      throw std::runtime_error("DensityCurve: source curve has no mass");
  }

  //! Attach a likelihood-ratio weight w(y); target() then evaluates the
  //! renormalized product density proportional to source(y) * w(y).
  void apply_weight(std::function<double(double)> w, const std::vector<double>& grid)
  {
    weight_ = std::move(w);
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      vals[i] = raw(grid[i]) / z_source_ * weight_(grid[i]);
    z_target_ = trapezoid(grid, vals);
    if (!(z_target_ > 0.0) || !std::isfinite(z_target_))
      throw std::runtime_error("DensityCurve: weighted curve has no mass");
  }

  //! Normalized source-population density estimate p(y | x).
  double source(double y) const
  {
    return std::clamp(raw(y) / z_source_, kFloor, kCap);
  }

  //! Normalized target-population density estimate q(y | x); requires a
  //! weight attached via apply_weight().
  double target(double y) const
  {
    if (!weight_)
      throw std::logic_error("DensityCurve: no weight attached");
    return std::clamp(raw(y) / z_source_ * weight_(y) / z_target_, kFloor, kCap);
  }

  bool degenerate() const { return degenerate_; }
  const std::vector<double>& anchors() const { return ys_; }

  //! Unnormalized polyline value, floor outside the tail endpoints.
  double raw(double y) const
  {
    if (y <= ys_.front() || y >= ys_.back())
      return kFloor;
    const auto it = std::upper_bound(ys_.begin(), ys_.end(), y);
    const std::size_t hi = static_cast<std::size_t>(it - ys_.begin());
    const std::size_t lo = hi - 1;
    const double t = (y - ys_[lo]) / (ys_[hi] - ys_[lo]);
    return ds_[lo] + t * (ds_[hi] - ds_[lo]);
  }

private:
  std::vector<double> ys_; // strictly increasing; first/last are tail endpoints
  std::vector<double> ds_;
  bool degenerate_ = false;
  double z_source_ = 1.0;
  double z_target_ = 1.0;
  std::function<double(double)> weight_;
};

//! Conditional density estimator built on a family of linear quantile fits:
//! the quotient (difference-quotient) rule turns the quantile process into
//! density values at the anchor quantiles, and a fixed evaluation grid over
//! the response range provides the normalization for every curve, so that a
//! weight correction with w == 1 reproduces the source density exactly.
class ConditionalDensity
{
public:
  ConditionalDensity() = default;

  ConditionalDensity(QuantileProcess process, double y_lo, double y_hi, int grid_size = 512)
      : process_(std::move(process))
  {
    if (!(y_hi > y_lo))
      throw std::invalid_argument("ConditionalDensity: empty response range");
    if (grid_size < 2)
      throw std::invalid_argument("ConditionalDensity: grid too small");
    const double pad = 0.1 * (y_hi - y_lo);
    grid_ = linspace_vec(y_lo - pad, y_hi + pad, static_cast<std::size_t>(grid_size));

    // Anchor levels, fixed across x; quotient bandwidths follow once the
    // fitting sample size is known (set_sample_size).
    const int kappa = process_.anchor_count();
    anchor_taus_.reserve(kappa);
    for (int j = 1; j <= kappa; ++j)
      anchor_taus_.push_back(static_cast<double>(j) / (kappa + 1));
  }

  //! Record the fitting sample size used for the quotient bandwidths.
  void set_sample_size(std::size_t n)
  {
    sample_size_hint_ = n;
    anchor_h_.clear();
    anchor_h_.reserve(anchor_taus_.size());
    for (const double tau : anchor_taus_)
      anchor_h_.push_back(hall_sheather_bandwidth(tau, n));
  }

  const std::vector<double>& grid() const { return grid_; }
  const QuantileProcess& process() const { return process_; }

  //! Source-population density curve at covariate x.
  DensityCurve curve(const Eigen::RowVectorXd& x) const
  {
    if (anchor_h_.empty())
      throw std::logic_error("ConditionalDensity: sample size not set");
    const std::vector<double> q = process_.curve_at(x);

    std::vector<double> ys, ds;
    ys.reserve(anchor_taus_.size() + 2);
    ds.reserve(anchor_taus_.size() + 2);
    bool degenerate = false;
    for (std::size_t j = 0; j < anchor_taus_.size(); ++j) {
      const double tau = anchor_taus_[j];
      const double h = anchor_h_[j];
      const double y = process_.interpolate(tau, q);
      const double spread = process_.interpolate(tau + h, q) - process_.interpolate(tau - h, q);
      double d;
      if (spread < 2.0 * h / DensityCurve::kCap) {
        d = DensityCurve::kCap;
        degenerate = true;
      } else {
        d = 2.0 * h / spread;
      }
      if (!ys.empty() && y - ys.back() < 1e-12) {
        ds.back() = std::max(ds.back(), d); // collapsed anchors share a point
        degenerate = true;
        continue;
      }
      ys.push_back(y);
      ds.push_back(d);
    }

    // Tails beyond the outermost anchors, carrying the leftover level mass.
    append_tail(ys, ds, anchor_taus_.front(), false);
    append_tail(ys, ds, 1.0 - anchor_taus_.back(), true);

    return DensityCurve(std::move(ys), std::move(ds), grid_, degenerate);
  }

  //! Target-population density curve at x: source curve reweighted by w and
  //! renormalized on the shared grid.
  DensityCurve curve(const Eigen::RowVectorXd& x, std::function<double(double)> w) const
  {
    DensityCurve c = curve(x);
    c.apply_weight(std::move(w), grid_);
    return c;
  }

private:
  //! Extend the anchor polyline past one end with an exponential tail that
  //! carries `mass`, the probability the anchor levels leave beyond this
  //! edge. Matching d_edge * exp(-lambda * dy) to that mass fixes the rate
  //! lambda = d_edge / mass, so a high edge density with little mass left
  //! drops like a cliff while a low edge density with real mass left decays
  //! slowly. Nodes halve the density per step so the polyline tracks the
  //! exponential within a few percent, ending at the floor.
  static void append_tail(std::vector<double>& ys,
                          std::vector<double>& ds,
                          double mass,
                          bool right)
  {
    const std::size_t m = ys.size();
    const double spacing = m >= 2 ? (right ? ys[m - 1] - ys[m - 2] : ys[1] - ys[0]) : 1.0;
    const double d_edge = right ? ds[m - 1] : ds[0];
    const double y_edge = right ? ys[m - 1] : ys[0];

    std::vector<double> ty, td;
    if (mass > 0.0 && d_edge > DensityCurve::kFloor && std::isfinite(d_edge)) {
      const double lambda = d_edge / mass;
      const double step = std::log(2.0) / lambda;
      const int halvings =
          static_cast<int>(std::ceil(std::log2(d_edge / DensityCurve::kFloor)));
      for (int k = 1; k <= halvings; ++k) {
        ty.push_back(right ? y_edge + k * step : y_edge - k * step);
        td.push_back(std::max(d_edge * std::exp2(static_cast<double>(-k)),
                              DensityCurve::kFloor));
      }
    } else {
      ty.push_back(right ? y_edge + spacing : y_edge - spacing);
      td.push_back(DensityCurve::kFloor);
    }

    if (right) {
      ys.insert(ys.end(), ty.begin(), ty.end());
      ds.insert(ds.end(), td.begin(), td.end());
    } else {
      ys.insert(ys.begin(), ty.rbegin(), ty.rend());
      ds.insert(ds.begin(), td.rbegin(), td.rend());
    }
  }

  QuantileProcess process_;
  std::vector<double> grid_;
  std::vector<double> anchor_taus_;
  std::vector<double> anchor_h_;
  std::size_t sample_size_hint_ = 0;
};

//! Fit a conditional density from data: quantile-process fit on (X, y) with
//! the sample-size-driven level grid, response range taken from y.
inline ConditionalDensity fit_conditional_density(const Eigen::MatrixXd& X,
                                                  const Eigen::VectorXd& y,
                                                  int kappa = 0,
                                                  int grid_size = 512)
{
  if (X.rows() != y.size())
    throw std::invalid_argument("fit_conditional_density: design/response mismatch");
  if (X.rows() < X.cols() + 2)
    throw std::invalid_argument("fit_conditional_density: not enough rows");
  const int k = kappa > 0 ? kappa : quantile_grid_rule(static_cast<std::size_t>(y.size()));
  QuantileProcess process(X, y, k);
  ConditionalDensity dens(std::move(process), y.minCoeff(), y.maxCoeff(), grid_size);
  dens.set_sample_size(static_cast<std::size_t>(y.size()));
  return dens;
}

} // namespace cputs
