#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cputs {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

//! Inverse standard normal CDF: Abramowitz-Stegun 26.2.23 initial guess
//! polished by three Newton steps, accurate to ~1e-15 away from the extreme tails.
inline double normal_quantile(double p)
{
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  const bool upper = p > 0.5;
  const double pl = upper ? 1.0 - p : p;
  const double t = std::sqrt(-2.0 * std::log(pl));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
  if (!upper)
    x = -x;
  for (int i = 0; i < 3; ++i) {
    const double err = normal_cdf(x) - p;
    const double d = normal_pdf(x);
    if (d <= 0.0)
      break;
    x -= err / d;
  }
  return x;
}

//! Sample quantile with linear interpolation between order statistics
//! (type 7, the R default). Sorts a copy.
inline double sample_quantile(std::vector<double> v, double p)
{
  if (v.empty())
    throw std::invalid_argument("sample_quantile: empty sample");
  std::sort(v.begin(), v.end());
  if (p <= 0.0)
    return v.front();
  if (p >= 1.0)
    return v.back();
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size())
    return v.back();
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double sample_sd(const Eigen::VectorXd& v)
{
  const auto n = v.size();
  if (n < 2)
    return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1));
}

inline double sample_iqr(const Eigen::VectorXd& v)
{
  std::vector<double> tmp(v.data(), v.data() + v.size());
  return sample_quantile(tmp, 0.75) - sample_quantile(std::move(tmp), 0.25);
}

//! Trapezoid rule over an arbitrary sorted grid.
inline double trapezoid(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("trapezoid: need matching grids of size >= 2");
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return acc;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("trapezoid: need matching grids of size >= 2");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return acc;
}

inline Eigen::VectorXd linspace(double lo, double hi, int n)
{
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

inline std::vector<double> linspace_vec(double lo, double hi, std::size_t n)
{
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + step * static_cast<double>(i);
  return out;
}

} // namespace cputs
