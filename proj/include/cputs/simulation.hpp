#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cputs/conformal.hpp"
#include "cputs/rng.hpp"

namespace cputs {

enum class Shift { location, location_scale };
enum class Model { linear, nonlinear };
enum class Method { cputs, cp_p, cp_q };

inline std::string to_string(Shift s)
{
  return s == Shift::location ? "location" : "location-scale";
}
inline std::string to_string(Model m)
{
  return m == Model::linear ? "linear" : "nonlinear";
}
inline std::string to_string(Method m)
{
  switch (m) {
    case Method::cputs: return "cputs";
    case Method::cp_p: return "cp-p";
    default: return "cp-q";
  }
}

//! Synthetic benchmark design: the response laws shift between populations
//! while the covariate law given the response stays fixed.
struct SimDesign
{
  Shift shift = Shift::location;
  Model model = Model::linear;
  std::size_t n_source = 2000;
  std::size_t n_target_unlabeled = 1000;
  std::size_t n_target_labeled = 0;
  std::size_t n_test = 300;
  std::uint64_t seed = 1;
};

struct SimData
{
  Eigen::MatrixXd source_X;
  Eigen::VectorXd source_y;
  Eigen::MatrixXd labeled_X;
  Eigen::VectorXd labeled_y;
  Eigen::MatrixXd unlabeled_X;
  Eigen::MatrixXd test_X;
  Eigen::VectorXd test_y;
};

namespace detail {

//! One standardized skew-normal draw (population mean 0, variance 1):
//! Z = delta |Z1| + sqrt(1 - delta^2) Z2, then centred and scaled by the
//! closed-form skew-normal moments.
inline double skew_normal_draw(Rng& rng, double shape)
{
  const double delta = shape / std::sqrt(1.0 + shape * shape);
  const double z = delta * std::abs(rng.normal()) +
                   std::sqrt(1.0 - delta * delta) * rng.normal();
  const double mean = delta * std::sqrt(2.0 / M_PI);
  const double sd = std::sqrt(1.0 - 2.0 * delta * delta / M_PI);
  return (z - mean) / sd;
}

//! Covariate given response: X = Y + eps, or X = U + eps with log U ~ N(Y,1).
inline double covariate_for(double y, Model model, Rng& rng)
{
  const double base = model == Model::linear ? y : std::exp(y + rng.normal());
  return base + skew_normal_draw(rng, 15.0);
}

inline double source_response(Shift shift, Rng& rng)
{
  return shift == Shift::location ? rng.normal() : 1.5 * rng.normal();
}

inline double target_response(Shift shift, Rng& rng)
{
  return shift == Shift::location ? 1.0 + rng.normal() : 1.0 + 0.5 * rng.normal();
}

inline void fill_block(Eigen::MatrixXd& X, Eigen::VectorXd& y, std::size_t n,
                       bool target, const SimDesign& d, Rng& rng)
{
  X.resize(static_cast<Eigen::Index>(n), 1);
  y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = target ? target_response(d.shift, rng) : source_response(d.shift, rng);
    y[static_cast<Eigen::Index>(i)] = yi;
    X(static_cast<Eigen::Index>(i), 0) = covariate_for(yi, d.model, rng);
  }
}

} // namespace detail

//! Standardized skew-normal noise stream, exposed for distributional checks.
inline std::vector<double> gen_skew_noise(std::size_t n, double shape, std::uint64_t seed)
{
  if (n == 0)
    throw std::invalid_argument("gen_skew_noise: need n >= 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = detail::skew_normal_draw(rng, shape);
  return out;
}

//! Draw one full benchmark dataset. All blocks come from a single stream in
//! a fixed order (source, labeled target, unlabeled target, test), so the
//! data are reproducible from the design seed alone.
inline SimData gen_design(const SimDesign& d)
{
  if (d.n_source < 4)
    throw std::invalid_argument("gen_design: need at least 4 source rows");
  Rng rng(d.seed);
  SimData data;
  detail::fill_block(data.source_X, data.source_y, d.n_source, false, d, rng);
  detail::fill_block(data.labeled_X, data.labeled_y, d.n_target_labeled, true, d, rng);
  Eigen::VectorXd dummy;
  detail::fill_block(data.unlabeled_X, dummy, d.n_target_unlabeled, true, d, rng);
  detail::fill_block(data.test_X, data.test_y, d.n_test, true, d, rng);
  return data;
}

//! Per-replication metrics for one method.
struct RepMetrics
{
  double coverage = 0.0;   // fraction of test points inside the set
  double avg_length = 0.0; // mean total set length over test points
  bool ok = false;
};

struct MethodSummary
{
  Method method = Method::cputs;
  double coverage = 0.0;   // mean over replications, as a fraction
  double avg_length = 0.0; // mean over replications
  double se_length = 0.0;  // sd of per-rep AL / sqrt(#reps used)
  std::size_t reps_used = 0;
};

struct ExperimentResult
{
  SimDesign design;
  double alpha = 0.1;
  std::size_t replications = 0;
  std::size_t failures = 0;
  std::vector<MethodSummary> methods;
};

struct ExperimentOptions
{
  double alpha = 0.1;
  int workers = 1;
  double failure_budget = 0.02;
  PipelineConfig pipeline; // seed fields are overridden per replication
};

namespace detail {

//! Index-sharded parallel loop; results must be written to per-index slots
//! so that worker count cannot change the outcome.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body)
{
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int used = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  for (int t = 0; t < used; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        body(i);
    });
  }
  for (std::thread& th : pool)
    th.join();
}

inline RepMetrics evaluate_method(Method m, const SimData& data, double alpha,
                                  const PipelineConfig& cfg, std::uint64_t method_seed)
{
  RepMetrics out;
  const auto n_test = static_cast<std::size_t>(data.test_X.rows());
  const auto score_tests = [&](const auto& predict_one) {
    double covered = 0.0, length = 0.0;
    for (std::size_t i = 0; i < n_test; ++i) {
      const PredictionResult res = predict_one(data.test_X.row(static_cast<Eigen::Index>(i)));
      covered += res.covers(data.test_y[static_cast<Eigen::Index>(i)]) ? 1.0 : 0.0;
      length += res.total_length();
    }
    out.coverage = covered / static_cast<double>(n_test);
    out.avg_length = length / static_cast<double>(n_test);
    out.ok = true;
  };

  switch (m) {
    case Method::cputs: {
      PipelineConfig local = cfg;
      local.seed = method_seed;
      const ConformalPipeline pipe =
          data.labeled_X.rows() > 0
              ? ConformalPipeline::fit_labeled(data.source_X, data.source_y, data.labeled_X,
                                               data.labeled_y, data.unlabeled_X, local)
              : ConformalPipeline::fit_unlabeled(data.source_X, data.source_y,
                                                 data.unlabeled_X, local);
      score_tests([&](const Eigen::RowVectorXd& x) { return pipe.predict(x, alpha); });
      break;
    }
    case Method::cp_p: {
      const BaselineCp cp = BaselineCp::fit(data.source_X, data.source_y,
                                            cfg.train_fraction, method_seed);
      score_tests([&](const Eigen::RowVectorXd& x) { return cp.predict(x, alpha); });
      break;
    }
    case Method::cp_q: {
      if (data.labeled_X.rows() < 4)
        throw std::invalid_argument("cp-q requires labeled target rows");
      const BaselineCp cp = BaselineCp::fit(data.labeled_X, data.labeled_y,
                                            cfg.train_fraction, method_seed);
      score_tests([&](const Eigen::RowVectorXd& x) { return cp.predict(x, alpha); });
      break;
    }
  }
  return out;
}

} // namespace detail

//! Replicated benchmark: per-replication seeds are derived from the design
//! seed by counter, every replication regenerates its own dataset, and the
//! summary is aggregated in replication order regardless of worker count.
inline ExperimentResult run_experiment(const SimDesign& design,
                                       const std::vector<Method>& methods,
                                       std::size_t replications,
                                       const ExperimentOptions& opts = {})
{
  if (replications < 1)
    throw std::invalid_argument("run_experiment: need at least one replication");
  if (methods.empty())
    throw std::invalid_argument("run_experiment: no methods selected");

  const std::size_t m = methods.size();
  std::vector<std::vector<RepMetrics>> grid(replications,
                                            std::vector<RepMetrics>(m));
  std::vector<char> failed(replications, 0);

  detail::parallel_for(replications, opts.workers, [&](std::size_t rep) {
    const std::uint64_t rep_seed = derive_seed(design.seed, rep);
    try {
      SimDesign local = design;
      local.seed = derive_seed(rep_seed, 0);
      const SimData data = gen_design(local);
      for (std::size_t k = 0; k < m; ++k)
        grid[rep][k] = detail::evaluate_method(methods[k], data, opts.alpha, opts.pipeline,
                                               derive_seed(rep_seed, 1 + k));
    } catch (const std::exception&) {
      failed[rep] = 1;
    }
  });

  ExperimentResult result;
  result.design = design;
  result.alpha = opts.alpha;
  result.replications = replications;
  for (std::size_t rep = 0; rep < replications; ++rep)
    result.failures += failed[rep] ? 1u : 0u;
  if (static_cast<double>(result.failures) >
      opts.failure_budget * static_cast<double>(replications))
    throw std::runtime_error("run_experiment: replication failure rate above budget (" +
                             std::to_string(result.failures) + "/" +
                             std::to_string(replications) + ")");

  for (std::size_t k = 0; k < m; ++k) {
    MethodSummary s;
    s.method = methods[k];
    std::vector<double> lengths;
    lengths.reserve(replications);
    double cov = 0.0, len = 0.0;
    for (std::size_t rep = 0; rep < replications; ++rep) {
      if (failed[rep])
        continue;
      const RepMetrics& r = grid[rep][k];
      cov += r.coverage;
      len += r.avg_length;
      lengths.push_back(r.avg_length);
    }
    s.reps_used = lengths.size();
    if (s.reps_used == 0)
      throw std::runtime_error("run_experiment: no successful replications");
    const double n_used = static_cast<double>(s.reps_used);
    s.coverage = cov / n_used;
    s.avg_length = len / n_used;
    double ss = 0.0;
    for (const double l : lengths)
      ss += (l - s.avg_length) * (l - s.avg_length);
    s.se_length = s.reps_used > 1 ? std::sqrt(ss / (n_used - 1.0)) / std::sqrt(n_used) : 0.0;
    result.methods.push_back(s);
  }
  return result;
}

} // namespace cputs
