#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cputs {

//! Univariate B-spline basis of degree d over a nondecreasing knot vector.
//! With a clamped quasi-uniform knot vector the J basis functions are a
//! partition of unity on the knot span; outside the span every function
//! evaluates to zero. Immutable after construction.
class SplineBasis
{
public:
  //! Empty basis (count() == 0); a placeholder until a real fit replaces it.
  SplineBasis() = default;

  SplineBasis(std::vector<double> knots, int degree)
    : knots_(std::move(knots))
    , degree_(degree)
  {
    if (degree_ < 0)
      throw std::invalid_argument("SplineBasis: degree must be >= 0");
    if (static_cast<int>(knots_.size()) < degree_ + 2)
      throw std::invalid_argument("SplineBasis: too few knots");
    if (!std::is_sorted(knots_.begin(), knots_.end()))
      throw std::invalid_argument("SplineBasis: knots must be nondecreasing");
  }

  //! Clamped basis sized for a response sample: J - d - 1 interior knots placed
  //! uniformly over the sample range padded by 5% on each side, so calibration
  //! and test responses near the boundary stay in-span.
  static SplineBasis from_sample(const Eigen::VectorXd& sample, int count, int degree)
  {
    if (sample.size() == 0)
      throw std::invalid_argument("SplineBasis: empty sample");
    if (count < degree + 1)
      throw std::invalid_argument("SplineBasis: count must be >= degree + 1");
    const double mn = sample.minCoeff();
    const double mx = sample.maxCoeff();
    if (!(mn < mx))
      throw std::invalid_argument("SplineBasis: zero response range");
    const double margin = 0.05 * (mx - mn);
    return clamped_uniform(mn - margin, mx + margin, count, degree);
  }

  static SplineBasis clamped_uniform(double lo, double hi, int count, int degree)
  {
    if (!(lo < hi))
      throw std::invalid_argument("SplineBasis: empty span");
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(count + degree + 1));
    for (int i = 0; i <= degree; ++i)
      knots.push_back(lo);
    const int spans = count - degree;
    for (int i = 1; i < spans; ++i)
      knots.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spans));
    for (int i = 0; i <= degree; ++i)
      knots.push_back(hi);
    return SplineBasis(std::move(knots), degree);
  }

  int count() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  int degree() const { return degree_; }
  double span_min() const { return knots_.front(); }
  double span_max() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }

  //! All J basis values at y (Cox-de Boor). Zero vector outside the knot span.
  Eigen::VectorXd evaluate(double y) const
  {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(count());
    evaluate_into(y, out);
    return out;
  }

  void evaluate_into(double y, Eigen::VectorXd& out) const
  {
    out.setZero();
    if (knots_.empty() || y < knots_.front() || y > knots_.back())
      return;
    const int span = find_span(y);
    if (span >= degree_ && span <= count() - 1) {
      nonzero_basis(span, y, out);
    } else {
      // Unclamped knot vectors can place y in a span with fewer than d+1
      // functions alive; fall back to the defining recursion per function.
      for (int j = 0; j < count(); ++j)
        out[j] = cox_de_boor(j, degree_, y);
    }
  }

private:
  //! Largest i with knots_[i] <= y < knots_[i+1]; y at the right end maps to
  //! the last nonempty span so the span boundary stays in-support.
  int find_span(double y) const
  {
    const int n = static_cast<int>(knots_.size());
    if (y >= knots_.back()) {
      int i = n - 2;
      while (i > 0 && knots_[i] == knots_.back())
        --i;
      return i;
    }
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), y);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  //! Triangular scheme for the d+1 functions alive on span (NURBS book A2.2).
  void nonzero_basis(int span, double y, Eigen::VectorXd& out) const
  {
    const int d = degree_;
    double n[26], left[26], right[26]; // degree is small in practice
    if (d > 24)
      throw std::invalid_argument("SplineBasis: degree too large");
    n[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = y - knots_[static_cast<std::size_t>(span + 1 - j)];
      right[j] = knots_[static_cast<std::size_t>(span + j)] - y;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = n[r] / (right[r + 1] + left[j - r]);
        n[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      n[j] = saved;
    }
    for (int j = 0; j <= d; ++j)
      out[span - d + j] = n[j];
  }

  double cox_de_boor(int j, int k, double y) const
  {
    const auto t = [&](int i) { return knots_[static_cast<std::size_t>(i)]; };
    if (k == 0) {
      const bool closes_right = t(j + 1) == knots_.back() && y == knots_.back();
      return (y >= t(j) && y < t(j + 1)) || closes_right ? 1.0 : 0.0;
    }
    double acc = 0.0;
    const double dl = t(j + k) - t(j);
    if (dl > 0.0)
      acc += (y - t(j)) / dl * cox_de_boor(j, k - 1, y);
    const double dr = t(j + k + 1) - t(j + 1);
    if (dr > 0.0)
      acc += (t(j + k + 1) - y) / dr * cox_de_boor(j + 1, k - 1, y);
    return acc;
  }

  std::vector<double> knots_;
  int degree_ = -1; // -1 marks the empty default; count() is then 0
};

//! Default response-basis size: ceil(4.5 n^(1/5)) clipped to [5, 25], growing
//! slowly with the training sample so the sieve stays well conditioned.
inline int spline_count_rule(std::size_t n_train)
{
  const int j = static_cast<int>(std::ceil(4.5 * std::pow(static_cast<double>(n_train), 0.2)));
  return std::clamp(j, 5, 25);
}

} // namespace cputs
