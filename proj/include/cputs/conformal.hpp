#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cputs/conditional_density.hpp"
#include "cputs/rbf_basis.hpp"
#include "cputs/rng.hpp"
#include "cputs/spline_basis.hpp"
#include "cputs/weights.hpp"

namespace cputs {

//! Random train/calibration split of the source sample.
struct SplitPlan
{
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;

  static SplitPlan make(std::size_t n, double train_fraction, std::uint64_t seed)
  {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw std::invalid_argument("split_source: train fraction outside (0,1)");
    if (n < 4)
      throw std::invalid_argument("split_source: need at least 4 rows");
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
      throw std::invalid_argument("split_source: fraction leaves an empty part");
    Rng rng(seed);
    const std::vector<std::size_t> perm = rng.permutation(n);
    SplitPlan plan;
    plan.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.calibration.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.calibration.begin(), plan.calibration.end());
    return plan;
  }
};

inline SplitPlan split_source(std::size_t n, double train_fraction, std::uint64_t seed)
{
  return SplitPlan::make(n, train_fraction, seed);
}

//! Nonconformity scores and likelihood-ratio weights on the calibration set.
struct CalibrationScores
{
  std::vector<double> scores;
  std::vector<double> weights;
};

//! Rank statistic of the weighted conformal construction:
//!   p = (sum_{R_i >= r} w_i + w_test) / (sum_i w_i + w_test),
//! where ties count in favour of the test point and the test point's own
//! indicator is always 1.
inline double weighted_p_value(const CalibrationScores& cal, double test_score, double test_weight)
{
  if (cal.scores.empty() || cal.scores.size() != cal.weights.size())
    throw std::invalid_argument("weighted_p_value: empty or mismatched calibration");
  double hit = 0.0, total = 0.0;
  for (std::size_t i = 0; i < cal.scores.size(); ++i) {
    if (!(cal.weights[i] > 0.0))
      throw std::invalid_argument("weighted_p_value: nonpositive weight");
    total += cal.weights[i];
    if (cal.scores[i] >= test_score)
      hit += cal.weights[i];
  }
  return (hit + test_weight) / (total + test_weight);
}

//! Sorted-score view of a calibration set for O(log n) p-value queries:
//! suffix sums of the weights give sum{w_i : R_i >= r} by binary search.
class PValueTable
{
public:
  explicit PValueTable(const CalibrationScores& cal)
  {
    const std::size_t n = cal.scores.size();
    if (n == 0 || cal.weights.size() != n)
      throw std::invalid_argument("PValueTable: empty or mismatched calibration");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cal.scores[a] < cal.scores[b]; });
    sorted_scores_.resize(n);
    suffix_weight_.resize(n + 1);
    suffix_weight_[n] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      sorted_scores_[i] = cal.scores[order[i]];
    for (std::size_t i = n; i-- > 0;) {
      const double w = cal.weights[order[i]];
      if (!(w > 0.0))
        throw std::invalid_argument("PValueTable: nonpositive weight");
      suffix_weight_[i] = suffix_weight_[i + 1] + w;
    }
  }

  double p_value(double test_score, double test_weight) const
  {
    const auto it =
        std::lower_bound(sorted_scores_.begin(), sorted_scores_.end(), test_score);
    const auto idx = static_cast<std::size_t>(it - sorted_scores_.begin());
    return (suffix_weight_[idx] + test_weight) / (suffix_weight_[0] + test_weight);
  }

private:
  std::vector<double> sorted_scores_;
  std::vector<double> suffix_weight_; // suffix_weight_[i] = sum of weights of scores[i..]
};

struct Interval
{
  double lo;
  double hi;
  double length() const { return hi - lo; }
};

//! {y : p(y) > alpha} as a union of intervals, with endpoints linearly
//! interpolated between grid points where the p-value curve crosses alpha.
inline std::vector<Interval> extract_set(const std::vector<double>& grid,
                                         const std::vector<double>& p_values,
                                         double alpha)
{
  if (grid.size() != p_values.size() || grid.size() < 2)
    throw std::invalid_argument("extract_set: grid/p-value mismatch");
  std::vector<Interval> set;
  bool inside = p_values[0] > alpha;
  double lo = grid[0];
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const bool next_inside = p_values[i + 1] > alpha;
    if (inside == next_inside)
      continue;
    const double t = (alpha - p_values[i]) / (p_values[i + 1] - p_values[i]);
    const double cross = grid[i] + t * (grid[i + 1] - grid[i]);
    if (next_inside)
      lo = cross;
    else
      set.push_back({lo, cross});
    inside = next_inside;
  }
  if (inside)
    set.push_back({lo, grid.back()});
  return set;
}

struct PredictionResult
{
  std::vector<double> candidate_grid;
  std::vector<double> p_values;
  std::vector<Interval> set;
  double alpha = 0.0;

  double total_length() const
  {
    double acc = 0.0;
    for (const Interval& iv : set)
      acc += iv.length();
    return acc;
  }

  bool covers(double y) const
  {
    for (const Interval& iv : set)
      if (y >= iv.lo && y <= iv.hi)
        return true;
    return false;
  }
};

//! Blend of the target-trained and source-trained density scores; K = 1
//! recovers the source-only (unlabeled-target) score.
struct CombinedScore
{
  double k = 1.0;
  double r1 = 0.0; // score from the density fit directly on labeled target rows
  double r2 = 0.0; // score from the weight-corrected source density

  double value() const { return (1.0 - k) * r1 + k * r2; }
};

//! Tuning knobs; zero means "derive from the training sample size".
struct PipelineConfig
{
  double train_fraction = 0.5;
  std::uint64_t seed = 1;
  int spline_count = 0; // response-basis size J
  int rbf_count = 0;    // covariate-basis size K
  int kappa = 0;        // quantile-level grid size
  double delta = 1e-4;  // Gram ridge
  double rho = 1e-4;    // coefficient ridge
  double clip_max = 20.0;
  int grid_size = 400;    // candidate grid for prediction sets
  double grid_pad = 0.25; // padding fraction on the response range
  int spline_degree = 3;
  int density_grid = 512; // normalization grid for density curves
  std::function<double(double)> oracle_weight; // bypasses the weight fit
};

//! Fitted split-conformal pipeline under target shift. Fit once per dataset,
//! then predict() for any number of test covariates; prediction is pure and
//! safe to call concurrently.
class ConformalPipeline
{
public:
  //! Unlabeled-target pipeline: density-ratio weights from covariate
  //! matching, source-trained conditional density, weighted calibration.
  static ConformalPipeline fit_unlabeled(const Eigen::MatrixXd& source_X,
                                         const Eigen::VectorXd& source_y,
                                         const Eigen::MatrixXd& target_X,
                                         const PipelineConfig& cfg = {})
  {
    ConformalPipeline pipe;
    pipe.init_source(source_X, source_y, target_X, cfg);
    pipe.finish_calibration(source_X, source_y);
    return pipe;
  }

  //! Labeled-target pipeline: blends the source-trained corrected density
  //! score with a density fit directly on the labeled target rows, weighted
  //! by relative sample size. Falls back to the unlabeled pipeline when the
  //! labeled sample cannot support a quantile fit.
  static ConformalPipeline fit_labeled(const Eigen::MatrixXd& source_X,
                                       const Eigen::VectorXd& source_y,
                                       const Eigen::MatrixXd& labeled_X,
                                       const Eigen::VectorXd& labeled_y,
                                       const Eigen::MatrixXd& unlabeled_X,
                                       const PipelineConfig& cfg = {})
  {
    const Eigen::Index n0 = labeled_X.rows();
    if (n0 != labeled_y.size())
      throw std::invalid_argument("fit_labeled: labeled target design/response mismatch");
    Eigen::MatrixXd target_cov(n0 + unlabeled_X.rows(), source_X.cols());
    target_cov.topRows(unlabeled_X.rows()) = unlabeled_X;
    target_cov.bottomRows(n0) = labeled_X;

    if (n0 < source_X.cols() + 2) // too few labeled rows: source-only score
      return fit_unlabeled(source_X, source_y, target_cov, cfg);

    ConformalPipeline pipe;
    pipe.init_source(source_X, source_y, target_cov, cfg);
    pipe.direct_density_ = fit_conditional_density(labeled_X, labeled_y,
                                                   cfg.kappa, cfg.density_grid);
    pipe.has_direct_ = true;
    pipe.blend_k_ = static_cast<double>(pipe.split_.train.size()) /
                    static_cast<double>(n0 + pipe.split_.train.size());
    pipe.finish_calibration(source_X, source_y);
    return pipe;
  }

  PredictionResult predict(const Eigen::RowVectorXd& x, double alpha) const
  {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("predict: alpha must be in (0,1)");
    DensityCurve corrected = density_.curve(x, weight_fn_);
    DensityCurve direct = has_direct_ ? direct_density_.curve(x)
                                      : corrected; // unused when K = 1
    PredictionResult res;
    res.alpha = alpha;
    res.candidate_grid = candidate_grid_;
    res.p_values.resize(candidate_grid_.size());
    for (std::size_t g = 0; g < candidate_grid_.size(); ++g) {
      const double y = candidate_grid_[g];
      const double score = score_at(corrected, direct, y);
      res.p_values[g] = table_->p_value(score, weight_fn_(y));
    }
    res.set = extract_set(res.candidate_grid, res.p_values, alpha);
    return res;
  }

  //! Weighted p-value at one candidate response for one test covariate row.
  double p_value_at(const Eigen::RowVectorXd& x, double y) const
  {
    DensityCurve corrected = density_.curve(x, weight_fn_);
    DensityCurve direct = has_direct_ ? direct_density_.curve(x) : corrected;
    return table_->p_value(score_at(corrected, direct, y), weight_fn_(y));
  }

  const SplitPlan& split() const { return split_; }
  const CalibrationScores& calibration() const { return cal_; }
  const WeightModel& weight_model() const
  {
    if (!has_weight_model_)
      throw std::logic_error("weight_model: pipeline was fit with externally supplied weights");
    return weight_model_;
  }
  const std::function<double(double)>& weight_fn() const { return weight_fn_; }
  double blend() const { return blend_k_; }
  const ConditionalDensity& source_density() const { return density_; }
  const std::vector<double>& candidate_grid() const { return candidate_grid_; }

private:
  void init_source(const Eigen::MatrixXd& source_X,
                   const Eigen::VectorXd& source_y,
                   const Eigen::MatrixXd& target_X,
                   const PipelineConfig& cfg)
  {
    if (source_X.rows() != source_y.size())
      throw std::invalid_argument("pipeline: source design/response mismatch");
    if (target_X.cols() != source_X.cols())
      throw std::invalid_argument("pipeline: covariate dimension mismatch");
    cfg_ = cfg;
    split_ = SplitPlan::make(static_cast<std::size_t>(source_X.rows()),
                             cfg.train_fraction, cfg.seed);
    const auto n_train = split_.train.size();
    Eigen::MatrixXd train_X(n_train, source_X.cols());
    Eigen::VectorXd train_y(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
      train_X.row(static_cast<Eigen::Index>(i)) =
          source_X.row(static_cast<Eigen::Index>(split_.train[i]));
      train_y[static_cast<Eigen::Index>(i)] =
          source_y[static_cast<Eigen::Index>(split_.train[i])];
    }

    if (cfg.oracle_weight) {
      const auto oracle = cfg.oracle_weight;
      weight_fn_ = [oracle](double y) { return std::max(oracle(y), 1e-8); };
    } else {
      if (target_X.rows() == 0)
        throw std::invalid_argument("pipeline: no target covariates to match");
      WeightFitConfig wcfg;
      wcfg.spline_count = cfg.spline_count;
      wcfg.rbf_count = cfg.rbf_count;
      wcfg.spline_degree = cfg.spline_degree;
      wcfg.delta = cfg.delta;
      wcfg.rho = cfg.rho;
      wcfg.clip_max = cfg.clip_max;
      weight_model_ = fit_target_shift_weights(train_X, train_y, target_X, wcfg);
      has_weight_model_ = true;
      weight_fn_ = weight_model_;
    }

    density_ = fit_conditional_density(train_X, train_y, cfg.kappa, cfg.density_grid);

    const double y_lo = source_y.minCoeff();
    const double y_hi = source_y.maxCoeff();
    const double pad = cfg.grid_pad * (y_hi - y_lo);
    candidate_grid_ =
        linspace_vec(y_lo - pad, y_hi + pad, static_cast<std::size_t>(cfg.grid_size));
  }

  void finish_calibration(const Eigen::MatrixXd& source_X, const Eigen::VectorXd& source_y)
  {
    const auto n_cal = split_.calibration.size();
    cal_.scores.resize(n_cal);
    cal_.weights.resize(n_cal);
    for (std::size_t i = 0; i < n_cal; ++i) {
      const auto row = static_cast<Eigen::Index>(split_.calibration[i]);
      const Eigen::RowVectorXd x = source_X.row(row);
      const double y = source_y[row];
      DensityCurve corrected = density_.curve(x, weight_fn_);
      DensityCurve direct = has_direct_ ? direct_density_.curve(x) : corrected;
      cal_.scores[i] = score_at(corrected, direct, y);
      cal_.weights[i] = weight_fn_(y);
    }
    table_.emplace(cal_);
  }

  double score_at(const DensityCurve& corrected, const DensityCurve& direct, double y) const
  {
    CombinedScore s;
    s.k = blend_k_;
    s.r2 = -corrected.target(y);
    s.r1 = has_direct_ ? -direct.source(y) : 0.0;
    return s.value();
  }

  PipelineConfig cfg_;
  SplitPlan split_;
  WeightModel weight_model_;
  bool has_weight_model_ = false;
  std::function<double(double)> weight_fn_;
  ConditionalDensity density_;
  ConditionalDensity direct_density_;
  bool has_direct_ = false;
  double blend_k_ = 1.0;
  CalibrationScores cal_;
  std::optional<PValueTable> table_;
  std::vector<double> candidate_grid_;
};

//! One-shot unlabeled-target prediction for a single test covariate row.
inline PredictionResult scenario1_predict(const Eigen::MatrixXd& source_X,
                                          const Eigen::VectorXd& source_y,
                                          const Eigen::MatrixXd& target_X,
                                          const Eigen::RowVectorXd& x_test,
                                          double alpha,
                                          const PipelineConfig& cfg = {})
{
  return ConformalPipeline::fit_unlabeled(source_X, source_y, target_X, cfg)
      .predict(x_test, alpha);
}

//! One-shot labeled-target prediction for a single test covariate row.
inline PredictionResult scenario2_predict(const Eigen::MatrixXd& source_X,
                                          const Eigen::VectorXd& source_y,
                                          const Eigen::MatrixXd& labeled_X,
                                          const Eigen::VectorXd& labeled_y,
                                          const Eigen::MatrixXd& unlabeled_X,
                                          const Eigen::RowVectorXd& x_test,
                                          double alpha,
                                          const PipelineConfig& cfg = {})
{
  return ConformalPipeline::fit_labeled(source_X, source_y, labeled_X, labeled_y,
                                        unlabeled_X, cfg)
      .predict(x_test, alpha);
}

//! Vanilla split-conformal baseline: least-squares mean, absolute-residual
//! score, symmetric interval. Fit on source rows it plays CP-P; fit on the
//! labeled target rows it plays CP-Q.
class BaselineCp
{
public:
  static BaselineCp fit(const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y,
                        double train_fraction = 0.5,
                        std::uint64_t seed = 1)
  {
    if (X.rows() != y.size() || X.rows() < 4)
      throw std::invalid_argument("baseline_cp: need at least 4 labeled rows");
    const SplitPlan plan =
        SplitPlan::make(static_cast<std::size_t>(X.rows()), train_fraction, seed);

    Eigen::MatrixXd train(plan.train.size(), X.cols() + 1);
    Eigen::VectorXd train_y(plan.train.size());
    for (std::size_t i = 0; i < plan.train.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(plan.train[i]);
      train(static_cast<Eigen::Index>(i), 0) = 1.0;
      train.row(static_cast<Eigen::Index>(i)).tail(X.cols()) = X.row(row);
      train_y[static_cast<Eigen::Index>(i)] = y[row];
    }
    BaselineCp model;
    model.beta_ = (train.transpose() * train)
                      .ldlt()
                      .solve(train.transpose() * train_y);

    model.abs_residuals_.resize(plan.calibration.size());
    for (std::size_t i = 0; i < plan.calibration.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(plan.calibration[i]);
      model.abs_residuals_[i] = std::abs(y[row] - model.mean(X.row(row)));
    }
    std::sort(model.abs_residuals_.begin(), model.abs_residuals_.end());
    return model;
  }

  double mean(const Eigen::RowVectorXd& x) const
  {
    return beta_[0] + x.dot(beta_.tail(x.size()));
  }

  PredictionResult predict(const Eigen::RowVectorXd& x, double alpha) const
  {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("predict: alpha must be in (0,1)");
    const auto n_cal = abs_residuals_.size();
    const auto rank = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(n_cal + 1)));
    const double d = rank <= n_cal ? abs_residuals_[rank - 1]
                                   : std::numeric_limits<double>::infinity();
    const double mu = mean(x);
    PredictionResult res;
    res.alpha = alpha;
    res.set = {{mu - d, mu + d}};
    return res;
  }

private:
  Eigen::VectorXd beta_;
  std::vector<double> abs_residuals_;
};

inline PredictionResult baseline_cp(const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y,
                                    const Eigen::RowVectorXd& x_test,
                                    double alpha,
                                    double train_fraction = 0.5,
                                    std::uint64_t seed = 1)
{
  return BaselineCp::fit(X, y, train_fraction, seed).predict(x_test, alpha);
}

} // namespace cputs
