#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cputs/rbf_basis.hpp"
#include "cputs/spline_basis.hpp"
#include "cputs/stats.hpp"

namespace cputs {

//! Inputs of the covariate-matching quadratic program that identifies the
//! likelihood-ratio weight w(y) = alpha' B(y):
//!   U     exact RBF Gram matrix (K x K),
//!   V     cross moment (1/n_t) sum psi(X_i) B'(Y_i) over the source training rows,
//!   u     target covariate mean (1/n_Q) sum psi(X_i^Q),
//!   b_bar source-sample mean of B(Y), standing in for E_p[B(Y)] in the
//!         normalization constraint.
struct MatchingProblem
{
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  Eigen::VectorXd u;
  Eigen::VectorXd b_bar;
  double delta = 1e-4;
  double rho = 1e-4;
};

inline MatchingProblem assemble_matching(const Eigen::MatrixXd& source_X,
                                         const Eigen::VectorXd& source_y,
                                         const Eigen::MatrixXd& target_X,
                                         const SplineBasis& spline,
                                         const RbfBasis& rbf,
                                         double delta = 1e-4,
                                         double rho = 1e-4)
{
  if (source_X.rows() == 0 || target_X.rows() == 0)
    throw std::invalid_argument("assemble_matching: empty dataset");
  if (source_X.rows() != source_y.size() || source_X.cols() != target_X.cols())
    throw std::invalid_argument("assemble_matching: dimension mismatch");
  if (!source_X.allFinite() || !source_y.allFinite() || !target_X.allFinite())
    throw std::invalid_argument("assemble_matching: non-finite data");

  const int k = rbf.count();
  const int j = spline.count();
  MatchingProblem prob;
  prob.delta = delta;
  prob.rho = rho;
  prob.U = rbf.gram();
  prob.V = Eigen::MatrixXd::Zero(k, j);
  prob.b_bar = Eigen::VectorXd::Zero(j);

  Eigen::VectorXd psi(k), b(j);
  const auto n_t = source_X.rows();
  for (Eigen::Index i = 0; i < n_t; ++i) {
    rbf.evaluate_into(source_X.row(i), psi);
    spline.evaluate_into(source_y[i], b);
    prob.V.noalias() += psi * b.transpose();
    prob.b_bar += b;
  }
  prob.V /= static_cast<double>(n_t);
  prob.b_bar /= static_cast<double>(n_t);

  prob.u = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < target_X.rows(); ++i) {
    rbf.evaluate_into(target_X.row(i), psi);
    prob.u += psi;
  }
  prob.u /= static_cast<double>(target_X.rows());
  return prob;
}

//! Fitted likelihood-ratio weight w(y) = alpha' B(y), clipped to
//! [1e-8, clip_max] so downstream normalized conformal weights stay
//! well-defined even outside the knot span.
//!
//! The spline coefficients are data-driven only where the training responses
//! actually land; outside that range the ridge term dominates the matching
//! objective and pulls the fit toward zero regardless of the true ratio.
//! When tail completion is armed (see complete_tails), evaluation beyond the
//! central response range therefore continues the log-slope of the fitted
//! curve instead of reading the ridge-shrunk coefficients: exact for
//! exponential tilts such as location shifts, flat when there is no shift,
//! and decaying when the target is more concentrated than the source. The
//! [1e-8, clip_max] clamp bounds the continuation on both sides.
struct WeightModel
{
  Eigen::VectorXd alpha;
  SplineBasis basis;
  double clip_max = 20.0;
  bool converged = true;
  int iterations = 0;

  // Tail completion switch points and the log-linear continuation at each;
  // infinities keep the raw spline evaluation everywhere (the default).
  double tail_lo = -std::numeric_limits<double>::infinity();
  double tail_hi = std::numeric_limits<double>::infinity();
  double level_lo = 1.0, slope_lo = 0.0;
  double level_hi = 1.0, slope_hi = 0.0;

  double operator()(double y) const
  {
    double v;
    if (y > tail_hi)
      v = level_hi * std::exp(std::min(slope_hi * (y - tail_hi), 50.0));
    else if (y < tail_lo)
      v = level_lo * std::exp(std::min(slope_lo * (y - tail_lo), 50.0));
    else
      v = raw(y);
    return std::clamp(v, 1e-8, clip_max);
  }

  //! Unclamped spline value alpha' B(y).
  double raw(double y) const
  {
    basis.evaluate_into(y, scratch());
    return alpha.dot(scratch());
  }

  //! Arm the log-linear continuation beyond the central range of the
  //! training responses. Each side's slope and switch-point level come from
  //! a least-squares line through log w at the response quantiles of the
  //! adjacent outer quarter (quartile out to the switch point): local enough
  //! to track a curved log-weight near the boundary, while averaging out the
  //! pointwise wiggle a two-point difference would inherit.
  void complete_tails(const Eigen::VectorXd& train_y)
  {
    if (train_y.size() < 2)
      return;
    std::vector<double> ys(train_y.data(), train_y.data() + train_y.size());
    const auto side = [&](double tau_from, double tau_to, double& level, double& slope,
                          double& cut) {
      double sy = 0, sl = 0, syy = 0, syl = 0;
      const int m = 10;
      for (int i = 0; i < m; ++i) {
        const double tau = tau_from + (tau_to - tau_from) * i / (m - 1);
        const double y = sample_quantile(ys, tau);
        const double l = std::log(std::max(raw(y), 1e-8));
        sy += y; sl += l; syy += y * y; syl += y * l;
      }
      cut = sample_quantile(ys, tau_to);
      const double var = syy - sy * sy / m;
      if (var > 1e-10) {
        slope = (syl - sy * sl / m) / var;
        level = std::max(std::exp(sl / m + slope * (cut - sy / m)), 1e-8);
      } else {
        slope = 0.0;
        level = std::max(raw(cut), 1e-8);
      }
    };
    side(0.75, 0.975, level_hi, slope_hi, tail_hi);
    side(0.25, 0.025, level_lo, slope_lo, tail_lo);
  }

private:
  Eigen::VectorXd& scratch() const
  {
    thread_local Eigen::VectorXd buf;
    if (buf.size() != alpha.size())
      buf.resize(alpha.size());
    return buf;
  }
};

struct WeightSolveOptions
{
  int max_iter = 10000;
  double tol = 1e-10;
  double clip_max = 20.0;
  std::vector<double>* objective_trace = nullptr; // optional diagnostic
};

namespace detail {

//! Dykstra's alternating projection onto {alpha >= 0} intersected with
//! {b_bar' alpha = 1}.
inline Eigen::VectorXd project_feasible(Eigen::VectorXd x, const Eigen::VectorXd& b_bar)
{
  const double bb = b_bar.squaredNorm();
  if (bb <= 0.0)
    throw std::invalid_argument("solve_weights: degenerate normalization vector");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(x.size());
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd xp = x + p;
    const Eigen::VectorXd y = xp - ((b_bar.dot(xp) - 1.0) / bb) * b_bar;
    p = xp - y;
    const Eigen::VectorXd yq = y + q;
    const Eigen::VectorXd xn = yq.cwiseMax(0.0);
    q = yq - xn;
    const double move = (xn - x).lpNorm<Eigen::Infinity>();
    x = xn;
    if (move < 1e-13 && it > 0)
      break;
  }
  return x;
}

} // namespace detail

//! Minimize alpha' V'(U+dI)^-1 V alpha - 2 u'(U+dI)^-1 V alpha + rho |alpha|^2
//! over {alpha >= 0, b_bar' alpha = 1} by projected gradient descent with
//! backtracking line search, warm-started from the uniform weight. The
//! pointwise constraint w(y) >= 0 is enforced through alpha >= 0, which is
//! sufficient because B-splines are nonnegative.
inline WeightModel solve_weights(const MatchingProblem& prob,
                                 const SplineBasis& basis,
                                 const WeightSolveOptions& opts = {})
{
  const auto j = prob.V.cols();
  Eigen::MatrixXd reg = prob.U;
  reg.diagonal().array() += prob.delta;
  const Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("solve_weights: ridge-regularized Gram is not positive definite");
  const Eigen::MatrixXd mv = llt.solve(prob.V);
  Eigen::MatrixXd a = prob.V.transpose() * mv;
  a.diagonal().array() += prob.rho;
  const Eigen::VectorXd c = mv.transpose() * prob.u;
  if (!a.allFinite() || !c.allFinite())
    throw std::runtime_error("solve_weights: objective matrix is not finite");

  const auto objective = [&](const Eigen::VectorXd& x) {
    return x.dot(a * x) - 2.0 * c.dot(x);
  };

  const double bsum = prob.b_bar.sum();
  if (bsum <= 0.0)
    throw std::runtime_error("solve_weights: normalization vector has no mass");
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(j, 1.0 / bsum);

  double step = 1.0 / std::max(1e-12, 2.0 * a.operatorNorm());
  double f = objective(alpha);
  if (opts.objective_trace)
    opts.objective_trace->push_back(f);

  bool converged = false;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd grad = 2.0 * (a * alpha - c);
    double t = step * 2.0;
    Eigen::VectorXd cand;
    double fc = f;
    for (int bt = 0; bt < 60; ++bt) {
      cand = detail::project_feasible(alpha - t * grad, prob.b_bar);
      fc = objective(cand);
      const Eigen::VectorXd d = cand - alpha;
      if (fc <= f + grad.dot(d) + d.squaredNorm() / (2.0 * t) + 1e-14)
        break;
      t *= 0.5;
    }
    step = t;
    if (fc > f) // inexact projection can stall; keep the better iterate
      cand = alpha, fc = f;
    const double drop = f - fc;
    alpha = cand;
    f = fc;
    if (opts.objective_trace)
      opts.objective_trace->push_back(f);
    if (drop >= 0.0 && drop < opts.tol) {
      converged = true;
      ++iter;
      break;
    }
  }

  // Exact feasibility polish: nonnegativity then rescale onto the constraint.
  alpha = alpha.cwiseMax(0.0);
  const double s = prob.b_bar.dot(alpha);
  if (s <= 1e-300)
    throw std::runtime_error("solve_weights: projected iterate lost all mass");
  alpha /= s;

  WeightModel model{std::move(alpha), basis, opts.clip_max, converged, iter};
  return model;
}

//! End-to-end weight fit from raw samples: response spline sized by the
//! training count (unless overridden), RBF covariate basis on the pooled
//! source/target covariates, then the constrained matching solve.
struct WeightFitConfig
{
  int spline_count = 0; // 0 = sample-size rule
  int rbf_count = 0;    // 0 = sample-size rule
  int spline_degree = 3;
  double delta = 1e-4;
  double rho = 1e-4;
  double clip_max = 20.0;
};

inline WeightModel fit_target_shift_weights(const Eigen::MatrixXd& source_X,
                                            const Eigen::VectorXd& source_y,
                                            const Eigen::MatrixXd& target_X,
                                            const WeightFitConfig& cfg = {})
{
  if (source_X.rows() != source_y.size() || source_X.rows() == 0)
    throw std::invalid_argument("fit_target_shift_weights: bad source data");
  if (target_X.rows() == 0 || target_X.cols() != source_X.cols())
    throw std::invalid_argument("fit_target_shift_weights: bad target covariates");
  const auto n = static_cast<std::size_t>(source_X.rows());
  const int j = cfg.spline_count > 0 ? cfg.spline_count : spline_count_rule(n);
  const int k = cfg.rbf_count > 0 ? cfg.rbf_count : rbf_count_rule(n);
  const SplineBasis spline = SplineBasis::from_sample(source_y, j, cfg.spline_degree);
  Eigen::MatrixXd pooled(source_X.rows() + target_X.rows(), source_X.cols());
  pooled.topRows(source_X.rows()) = source_X;
  pooled.bottomRows(target_X.rows()) = target_X;
  const RbfBasis rbf = RbfBasis::from_data(pooled, source_X, k);
  const MatchingProblem prob =
      assemble_matching(source_X, source_y, target_X, spline, rbf, cfg.delta, cfg.rho);
  WeightSolveOptions opts;
  opts.clip_max = cfg.clip_max;
  WeightModel model = solve_weights(prob, spline, opts);
  model.complete_tails(source_y);
  return model;
}

} // namespace cputs
