// Command-line front end: synthetic benchmarks, prediction on CSV datasets,
// and weight-curve diagnostics.
//
// Exit codes: 0 success, 1 input/validation error, 2 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cputs/cputs.hpp"

namespace {

using nlohmann::json;

struct TuningFlags
{
  int jn = 0;
  int kn = 0;
  int kappa = 0;
  double delta = 1e-5;
  double rho = 1e-5;
  double clip = 20.0;
  double split = 0.5;
  int grid = 400;
};

void add_tuning_flags(CLI::App* cmd, TuningFlags& t)
{
  cmd->add_option("--jn", t.jn, "Response spline basis size (0 = auto rule)");
  cmd->add_option("--kn", t.kn, "Covariate RBF basis size (0 = auto rule)");
  cmd->add_option("--kappa", t.kappa, "Quantile-level grid size (0 = auto rule)");
  cmd->add_option("--delta", t.delta, "Gram ridge regularizer");
  cmd->add_option("--rho", t.rho, "Coefficient ridge regularizer");
  cmd->add_option("--clip", t.clip, "Weight clip ceiling");
  cmd->add_option("--split", t.split, "Train fraction of the source split");
  cmd->add_option("--grid", t.grid, "Candidate grid size for prediction sets");
}

cputs::PipelineConfig to_pipeline(const TuningFlags& t, std::uint64_t seed)
{
  cputs::PipelineConfig cfg;
  cfg.spline_count = t.jn;
  cfg.rbf_count = t.kn;
  cfg.kappa = t.kappa;
  cfg.delta = t.delta;
  cfg.rho = t.rho;
  cfg.clip_max = t.clip;
  cfg.train_fraction = t.split;
  cfg.grid_size = t.grid;
  cfg.seed = seed;
  return cfg;
}

json tuning_json(const TuningFlags& t)
{
  return json{{"jn", t.jn},       {"kn", t.kn},   {"kappa", t.kappa},
              {"delta", t.delta}, {"rho", t.rho}, {"clip", t.clip},
              {"split", t.split}, {"grid", t.grid}};
}

void require_alpha(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must be in (0,1)");
}

std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string format_intervals(const std::vector<cputs::Interval>& set)
{
  std::string out;
  char buf[96];
  for (const cputs::Interval& iv : set) {
    if (!out.empty())
      out += ';';
    std::snprintf(buf, sizeof buf, "[%.6g,%.6g]", iv.lo, iv.hi);
    out += buf;
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::invalid_argument("cannot open output file '" + path + "'");
  out << content;
  if (!out)
    throw std::runtime_error("failed writing '" + path + "'");
}

bool ends_with(const std::string& s, const std::string& suffix)
{
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<cputs::Method> parse_methods(const std::string& list)
{
  std::vector<cputs::Method> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "cputs")
      out.push_back(cputs::Method::cputs);
    else if (tok == "cpp" || tok == "cp-p")
      out.push_back(cputs::Method::cp_p);
    else if (tok == "cpq" || tok == "cp-q")
      out.push_back(cputs::Method::cp_q);
    else if (!tok.empty())
      throw std::invalid_argument("unknown method '" + tok +
                                  "' (expected cputs, cpp/cp-p, cpq/cp-q)");
  }
  if (out.empty())
    throw std::invalid_argument("no methods selected");
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs
{
  std::string shift = "location";
  std::string model = "linear";
  std::size_t np = 2000;
  std::size_t nq = 1000;
  std::size_t nq_labeled = 0;
  std::size_t reps = 200;
  double alpha = 0.1;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string methods = "cputs,cpp";
  std::string out;
  TuningFlags tuning;
};

int run_simulate(const SimulateArgs& a)
{
  require_alpha(a.alpha);
  if (a.shift != "location" && a.shift != "location-scale")
    throw std::invalid_argument("--shift must be location or location-scale");
  if (a.model != "linear" && a.model != "nonlinear")
    throw std::invalid_argument("--model must be linear or nonlinear");
  const std::vector<cputs::Method> methods = parse_methods(a.methods);
  for (const cputs::Method m : methods)
    if (m == cputs::Method::cp_q && a.nq_labeled < 4)
      throw std::invalid_argument("cp-q needs --nq-labeled >= 4");

  cputs::SimDesign design;
  design.shift = a.shift == "location" ? cputs::Shift::location : cputs::Shift::location_scale;
  design.model = a.model == "linear" ? cputs::Model::linear : cputs::Model::nonlinear;
  design.n_source = a.np;
  design.n_target_unlabeled = a.nq;
  design.n_target_labeled = a.nq_labeled;
  design.seed = a.seed;

  cputs::ExperimentOptions opts;
  opts.alpha = a.alpha;
  opts.workers = a.workers;
  opts.pipeline = to_pipeline(a.tuning, a.seed);

  const cputs::ExperimentResult result = cputs::run_experiment(design, methods, a.reps, opts);

  std::printf("%-8s %-14s %-10s %6s %6s %8s %9s %9s\n", "method", "shift", "model", "n_p",
              "n0", "cov_p", "al", "se_al");
  for (const cputs::MethodSummary& s : result.methods)
    std::printf("%-8s %-14s %-10s %6zu %6zu %8.1f %9.3f %9.3f\n",
                cputs::to_string(s.method).c_str(), a.shift.c_str(), a.model.c_str(), a.np,
                a.nq_labeled, 100.0 * s.coverage, s.avg_length, s.se_length);
  if (result.failures > 0)
    std::printf("replications failed and excluded: %zu of %zu\n", result.failures, a.reps);

  if (a.out.empty())
    return 0;

  json config{{"shift", a.shift},
              {"model", a.model},
              {"n_p", a.np},
              {"nq_unlabeled", a.nq},
              {"nq_labeled", a.nq_labeled},
              {"replications", a.reps},
              {"alpha", a.alpha},
              {"seed", a.seed},
              {"workers", a.workers},
              {"methods", a.methods},
              {"tuning", tuning_json(a.tuning)}};
  if (ends_with(a.out, ".json")) {
    json rows = json::array();
    for (const cputs::MethodSummary& s : result.methods)
      rows.push_back({{"method", cputs::to_string(s.method)},
                      {"cov_p", 100.0 * s.coverage},
                      {"al", s.avg_length},
                      {"se_al", s.se_length},
                      {"reps_used", s.reps_used}});
    const json report{{"command", "simulate"},
                      {"config", config},
                      {"results", rows},
                      {"failures", result.failures}};
    write_text_file(a.out, report.dump(2) + "\n");
  } else {
    std::string csv = "# command=simulate\n# config=" + config.dump() + "\n";
    csv += "method,shift,model,n_p,n0,cov_p,al,se_al\n";
    for (const cputs::MethodSummary& s : result.methods) {
      csv += cputs::to_string(s.method) + "," + a.shift + "," + a.model + "," +
             std::to_string(a.np) + "," + std::to_string(a.nq_labeled) + "," +
             format_double(100.0 * s.coverage) + "," + format_double(s.avg_length) + "," +
             format_double(s.se_length) + "\n";
    }
    write_text_file(a.out, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs
{
  std::string source;
  std::string target;
  std::string test;
  std::string response = "y";
  double alpha = 0.1;
  std::uint64_t seed = 1;
  std::string out;
  TuningFlags tuning;
};

int run_predict(const PredictArgs& a)
{
  require_alpha(a.alpha);
  const cputs::Dataset source = cputs::load_csv(a.source, a.response, false);
  const cputs::Dataset target = cputs::load_csv_maybe_response(a.target, a.response);
  cputs::Dataset test = cputs::load_csv_maybe_response(a.test, a.response);

  if (source.covariate_names != target.covariate_names ||
      source.covariate_names != test.covariate_names)
    throw std::invalid_argument("column mismatch between source, target, and test files");
  if (test.X.rows() == 0)
    throw std::invalid_argument("empty test set");
  if (source.dropped_rows + target.dropped_rows + test.dropped_rows > 0)
    std::fprintf(stderr, "dropped malformed rows: source=%zu target=%zu test=%zu\n",
                 source.dropped_rows, target.dropped_rows, test.dropped_rows);

  const std::size_t n0 = target.has_response() ? target.labeled_count() : 0;
  const cputs::PipelineConfig cfg = to_pipeline(a.tuning, a.seed);

  cputs::ConformalPipeline pipe =
      n0 > 0 ? cputs::ConformalPipeline::fit_labeled(source.X, source.y, target.labeled_X(),
                                                     target.labeled_y(), target.unlabeled_X(),
                                                     cfg)
             : cputs::ConformalPipeline::fit_unlabeled(source.X, source.y, target.X, cfg);
  std::fprintf(stderr, "scenario %d: %s\n", n0 > 0 ? 2 : 1,
               n0 > 0 ? ("labeled target rows: " + std::to_string(n0)).c_str()
                      : "no labeled target rows");

  const bool emit_p = test.has_response();
  std::string csv = emit_p ? "row,intervals,p_value\n" : "row,intervals\n";
  for (Eigen::Index i = 0; i < test.X.rows(); ++i) {
    const cputs::PredictionResult res = pipe.predict(test.X.row(i), a.alpha);
    csv += std::to_string(i) + "," + format_intervals(res.set);
    if (emit_p) {
      csv += ",";
      if (test.labeled[static_cast<std::size_t>(i)])
        csv += format_double(pipe.p_value_at(test.X.row(i), test.y[i]));
    }
    csv += "\n";
  }

  if (a.out.empty())
    std::fputs(csv.c_str(), stdout);
  else
    write_text_file(a.out, csv);
  return 0;
}

// ---------------------------------------------------------------------------
// fit-weights

struct FitWeightsArgs
{
  std::string source;
  std::string target;
  std::string response = "y";
  std::uint64_t seed = 1;
  std::string out;
  TuningFlags tuning;
};

int run_fit_weights(const FitWeightsArgs& a)
{
  const cputs::Dataset source = cputs::load_csv(a.source, a.response, false);
  const cputs::Dataset target = cputs::load_csv_maybe_response(a.target, a.response);
  if (source.covariate_names != target.covariate_names)
    throw std::invalid_argument("column mismatch between source and target files");

  cputs::WeightFitConfig cfg;
  cfg.spline_count = a.tuning.jn;
  cfg.rbf_count = a.tuning.kn;
  cfg.delta = a.tuning.delta;
  cfg.rho = a.tuning.rho;
  cfg.clip_max = a.tuning.clip;
  const cputs::WeightModel model =
      cputs::fit_target_shift_weights(source.X, source.y, target.X, cfg);

  std::string csv = "y,weight\n";
  const std::vector<double> grid =
      cputs::linspace_vec(model.basis.span_min(), model.basis.span_max(), 200);
  for (const double y : grid)
    csv += format_double(y) + "," + format_double(model(y)) + "\n";

  double mean_w = 0.0;
  for (Eigen::Index i = 0; i < source.y.size(); ++i)
    mean_w += model(source.y[i]);
  mean_w /= static_cast<double>(source.y.size());

  if (a.out.empty())
    std::fputs(csv.c_str(), stdout);
  else
    write_text_file(a.out, csv);
  std::printf("# mean weight on source responses: %s (target 1)\n",
              format_double(mean_w).c_str());
  if (!model.converged)
    std::fprintf(stderr, "warning: weight solve hit the iteration cap\n");
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Conformal prediction sets for a shifted target population"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "Replicated synthetic benchmark");
  c_sim->add_option("--shift", sim.shift, "Response shift: location or location-scale");
  c_sim->add_option("--model", sim.model, "Covariate model: linear or nonlinear");
  c_sim->add_option("--np", sim.np, "Source sample size");
  c_sim->add_option("--nq", sim.nq, "Unlabeled target sample size");
  c_sim->add_option("--nq-labeled", sim.nq_labeled, "Labeled target sample size");
  c_sim->add_option("--reps", sim.reps, "Number of replications");
  c_sim->add_option("--alpha", sim.alpha, "Miscoverage level");
  c_sim->add_option("--seed", sim.seed, "Master seed");
  c_sim->add_option("--workers", sim.workers, "Worker threads for replications");
  c_sim->add_option("--methods", sim.methods, "Comma list: cputs,cpp,cpq");
  c_sim->add_option("--out", sim.out, "Report file (.json or .csv)");
  add_tuning_flags(c_sim, sim.tuning);

  PredictArgs pred;
  CLI::App* c_pred = app.add_subcommand("predict", "Prediction sets for a test CSV");
  c_pred->add_option("--source", pred.source, "Labeled source CSV")->required();
  c_pred->add_option("--target", pred.target, "Target CSV (response optional)")->required();
  c_pred->add_option("--test", pred.test, "Test covariate CSV")->required();
  c_pred->add_option("--response", pred.response, "Response column name");
  c_pred->add_option("--alpha", pred.alpha, "Miscoverage level");
  c_pred->add_option("--seed", pred.seed, "Split seed");
  c_pred->add_option("--out", pred.out, "Output CSV (default stdout)");
  add_tuning_flags(c_pred, pred.tuning);

  FitWeightsArgs fw;
  CLI::App* c_fw = app.add_subcommand("fit-weights", "Likelihood-ratio weight curve");
  c_fw->add_option("--source", fw.source, "Labeled source CSV")->required();
  c_fw->add_option("--target", fw.target, "Target covariate CSV")->required();
  c_fw->add_option("--response", fw.response, "Response column name");
  c_fw->add_option("--seed", fw.seed, "Unused; accepted for interface symmetry");
  c_fw->add_option("--out", fw.out, "Output CSV (default stdout)");
  add_tuning_flags(c_fw, fw.tuning);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_sim->parsed())
      return run_simulate(sim);
    if (c_pred->parsed())
      return run_predict(pred);
    return run_fit_weights(fw);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
