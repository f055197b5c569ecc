// Command-line front end: estimate / ci / simulate / quantiles / bands-input.
// All diagnostics go to stderr; data goes to the requested files. Every run
// writes a machine-readable manifest next to its outputs, also on failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfdens/data.hpp"
#include "cfdens/inference.hpp"
#include "cfdens/logconcave.hpp"
#include "cfdens/nuisance.hpp"
#include "cfdens/onestep.hpp"
#include "cfdens/sim.hpp"

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int env_threads() {
  if (const char* t = std::getenv("CFDENS_THREADS")) {
    const int v = std::atoi(t);
    if (v > 0) return v;
  }
  return 1;
}

std::string default_pivot_path() {
  if (const char* p = std::getenv("CFDENS_PIVOTS")) return p;
  return "data/pivots_k2_default.csv";
}

struct DataOptions {
  std::string path;
  std::vector<std::string> covariate_cols;
  std::string treatment_col = "A";
  std::string outcome_col = "Y";
  std::string delimiter = ",";
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.path, "input CSV file")->required();
  cmd->add_option("--covariate-cols", d.covariate_cols,
                  "covariate column names (comma separated)")
      ->required()
      ->delimiter(',');
  cmd->add_option("--treatment-col", d.treatment_col, "treatment column name");
  cmd->add_option("--outcome-col", d.outcome_col, "outcome column name");
  cmd->add_option("--delimiter", d.delimiter, "CSV delimiter (single character)");
}

cfdens::ObservedSample load_data(const DataOptions& d) {
  cfdens::CsvOptions opts;
  if (d.delimiter.size() != 1)
    throw CLI::ValidationError("--delimiter", "must be a single character");
  opts.delimiter = d.delimiter[0];
  return cfdens::load_csv(d.path, d.covariate_cols, d.treatment_col,
                          d.outcome_col, opts);
}

struct NuisanceSpec {
  std::string raw = "logistic+ls-uniform";
  bool external = false;
  std::string external_path;
  cfdens::BaseCdf base = cfdens::BaseCdf::uniform;
};

NuisanceSpec parse_nuisance(const std::string& s) {
  NuisanceSpec spec;
  spec.raw = s;
  if (s.rfind("external:", 0) == 0) {
    spec.external = true;
    spec.external_path = s.substr(9);
    if (spec.external_path.empty())
      throw CLI::ValidationError("--nuisance", "external: requires a file path");
    return spec;
  }
  if (s == "logistic+ls-uniform") {
    spec.base = cfdens::BaseCdf::uniform;
  } else if (s == "logistic+ls-normal") {
    spec.base = cfdens::BaseCdf::normal;
  } else {
    throw CLI::ValidationError(
        "--nuisance",
        "expected logistic+ls-uniform, logistic+ls-normal or external:FILE");
  }
  return spec;
}

cfdens::NuisancePair fit_model_nuisances(const cfdens::ObservedSample& sample,
                                         int arm, const NuisanceSpec& spec) {
  auto logistic = cfdens::fit_logistic_propensity(sample, arm);
  cfdens::LocationScaleOptions opts;
  opts.base = spec.base;
  auto ls = cfdens::fit_location_scale(sample, arm, opts);
  return cfdens::NuisancePair{std::move(logistic.model), ls.as_model()};
}

void write_manifest(const std::string& path, const json& options,
                    const std::string& status, const std::string& error) {
  json m;
  m["tool"] = "cfdens";
  m["version"] = kVersion;
  m["options"] = options;
  m["status"] = status;
  if (!error.empty()) m["error"] = error;
  std::ofstream out(path);
  out << m.dump(2) << "\n";
}

void write_density_csv(const std::string& path, const cfdens::DensityEstimate& est) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "'");
  out << "s,p_hat,log_p_hat,left_deriv,F_hat\n";
  const auto& pts = est.corrected.grid.points();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const double s = pts[j];
    const double p = est.fit.density(s);
    const auto lp = est.fit.log_density(s);
    out << fmt(s) << "," << fmt(p) << ",";
    out << (lp ? fmt(*lp) : std::string("-inf")) << ",";
    if (s <= est.fit.support_lower())
      out << "nan";
    else
      out << fmt(est.fit.left_derivative(s));
    out << "," << fmt(est.corrected.values[j]) << "\n";
  }
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  DataOptions data;
  int arm = 1;
  std::size_t grid_n = 0;
  std::string nuisance = "logistic+ls-uniform";
  std::size_t crossfit = 0;
  std::uint64_t seed = 1;
  int threads = env_threads();
  std::string out;
};

int run_estimate(const EstimateArgs& a, json& opts_echo) {
  const NuisanceSpec spec = parse_nuisance(a.nuisance);
  if (spec.external && a.crossfit >= 2)
    throw CLI::ValidationError("--crossfit",
                               "cannot cross-fit external per-row predictions");
  if (spec.external && a.grid_n > 0)
    throw CLI::ValidationError("--grid-n",
                               "grid is taken from the external predictions file");
  const auto sample = load_data(a.data);

  cfdens::DensityEstimate est = [&]() {
    if (spec.external) {
      const auto preds = cfdens::load_predictions_csv(spec.external_path);
      if (preds.pi.size() != sample.n())
        throw std::runtime_error("external predictions row count mismatch");
      cfdens::InfluenceEvaluator ev(a.arm, preds);
      return cfdens::estimate_density(sample, ev, preds.grid, a.threads);
    }
    std::optional<cfdens::IsoGrid> grid;
    if (a.grid_n > 0) grid = cfdens::default_grid(sample, a.arm, a.grid_n);
    if (a.crossfit >= 2) {
      const auto folds =
          cfdens::FoldAssignment::random(sample.n(), a.crossfit, a.seed);
      auto factory = [&spec, arm = a.arm](const cfdens::ObservedSample& train) {
        return fit_model_nuisances(train, arm, spec);
      };
      return cfdens::estimate_density_crossfit(sample, a.arm, factory, folds,
                                               grid, a.threads);
    }
    return cfdens::estimate_density(sample, a.arm,
                                    fit_model_nuisances(sample, a.arm, spec),
                                    grid, a.threads);
  }();

  std::ofstream fit_out(a.out);
  if (!fit_out) throw std::runtime_error("cannot open '" + a.out + "'");
  fit_out << cfdens::fit_to_json(est.fit) << "\n";
  write_density_csv(a.out + ".density.csv", est);
  opts_echo["outputs"] = {a.out, a.out + ".density.csv"};
  return 0;
}

struct CiArgs {
  DataOptions data;
  int arm = 1;
  double s0 = 0.0;
  double alpha = 0.05;
  std::string kind = "density";
  std::string pivots = default_pivot_path();
  std::string nuisance = "logistic+ls-uniform";
  std::size_t grid_n = 0;
  std::size_t crossfit = 0;
  double bandwidth = 0.0;  // 0 = default n^(-1/10)
  std::uint64_t seed = 1;
  int threads = env_threads();
  std::string out;
};

int run_ci(const CiArgs& a, json& opts_echo) {
  const NuisanceSpec spec = parse_nuisance(a.nuisance);
  if (spec.external && a.crossfit >= 2)
    throw CLI::ValidationError("--crossfit",
                               "cannot cross-fit external per-row predictions");
  const bool contrast = a.kind == "diff" || a.kind == "logratio";
  if (!contrast && a.kind != "density" && a.kind != "deriv")
    throw CLI::ValidationError("--kind",
                               "expected density, deriv, diff or logratio");
  const auto sample = load_data(a.data);
  if (contrast && (sample.arm_count(0) == 0 || sample.arm_count(1) == 0))
    throw CLI::ValidationError("--kind",
                               "difference/log-ratio CIs need both arms in the data");
  const auto pivots = cfdens::PivotTable::load_csv(a.pivots);
  const std::optional<double> h =
      a.bandwidth > 0.0 ? std::optional<double>(a.bandwidth) : std::nullopt;

  std::optional<cfdens::FoldAssignment> folds;
  if (a.crossfit >= 2)
    folds = cfdens::FoldAssignment::random(sample.n(), a.crossfit, a.seed);

  auto estimate_arm = [&](int arm) {
    if (spec.external) {
      const auto preds = cfdens::load_predictions_csv(spec.external_path);
      cfdens::InfluenceEvaluator ev(arm, preds);
      return cfdens::estimate_density(sample, ev, preds.grid, a.threads);
    }
    std::optional<cfdens::IsoGrid> grid;
    if (a.grid_n > 0) grid = cfdens::default_grid(sample, arm, a.grid_n);
    if (folds) {
      auto factory = [&spec, arm](const cfdens::ObservedSample& train) {
        return fit_model_nuisances(train, arm, spec);
      };
      return cfdens::estimate_density_crossfit(sample, arm, factory, *folds,
                                               grid, a.threads);
    }
    return cfdens::estimate_density(
        sample, arm, fit_model_nuisances(sample, arm, spec), grid, a.threads);
  };
  auto chi_arm = [&](int arm) {
    if (spec.external) {
      const auto preds = cfdens::load_predictions_csv(spec.external_path);
      const cfdens::InfluenceEvaluator ev(arm, preds);
      return cfdens::estimate_chi(sample, ev, a.s0, h);
    }
    if (folds) {
      auto factory = [&spec, arm](const cfdens::ObservedSample& train) {
        return fit_model_nuisances(train, arm, spec);
      };
      return cfdens::crossfit_chi(sample, arm, factory, *folds, a.s0, h);
    }
    const cfdens::InfluenceEvaluator ev(arm,
                                        fit_model_nuisances(sample, arm, spec));
    return cfdens::estimate_chi(sample, ev, a.s0, h);
  };

  cfdens::PointwiseCI ci;
  if (!contrast) {
    const auto est = estimate_arm(a.arm);
    const auto chi = chi_arm(a.arm);
    const auto kind = a.kind == "density" ? cfdens::CiKind::density
                                          : cfdens::CiKind::derivative;
    ci = cfdens::pointwise_ci(est.fit, chi, pivots, a.s0, a.alpha, kind,
                              sample.n());
  } else {
    const auto est1 = estimate_arm(1);
    const auto est0 = estimate_arm(0);
    const auto chi1 = chi_arm(1);
    const auto chi0 = chi_arm(0);
    ci = a.kind == "diff"
             ? cfdens::difference_ci(est1.fit, est0.fit, chi1, chi0, pivots,
                                     a.s0, a.alpha, sample.n())
             : cfdens::log_ratio_ci(est1.fit, est0.fit, chi1, chi0, pivots,
                                    a.s0, a.alpha, sample.n());
  }

  json out;
  out["kind"] = a.kind;
  out["s0"] = ci.s0;
  out["alpha"] = ci.alpha;
  out["center"] = ci.center;
  out["half_width"] = ci.half_width;
  out["lower"] = ci.lower();
  out["upper"] = ci.upper();
  out["degenerate"] = ci.degenerate;
  out["n"] = sample.n();
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot open '" + a.out + "'");
  f << out.dump(2) << "\n";
  if (ci.degenerate)
    std::cerr << "warning: chi-hat is zero, interval has zero width\n";
  opts_echo["outputs"] = {a.out};
  return 0;
}

struct SimulateArgs {
  std::string experiment = "l1";
  int case_id = 1;
  std::vector<std::size_t> n_list = {500, 1000, 2500};
  std::size_t reps = 200;
  int arm = 1;
  double alpha = 0.05;
  std::string kind = "diff";
  std::vector<double> points;
  std::size_t crossfit = 0;
  std::uint64_t seed = 1;
  int threads = env_threads();
  std::string pivots = default_pivot_path();
  bool paper_scale = false;
  std::string out_dir;
};

int run_simulate(const SimulateArgs& a, json& opts_echo) {
  namespace fs = std::filesystem;
  fs::create_directories(a.out_dir);
  if (a.experiment == "l1") {
    cfdens::L1Config cfg;
    cfg.n_values = a.n_list;
    cfg.replications = a.paper_scale ? 1000 : a.reps;
    if (a.paper_scale) cfg.n_values = {500, 1000, 2500, 4000, 6000, 8000};
    cfg.nuisance_case = a.case_id;
    cfg.arm = a.arm;
    cfg.crossfit_folds = a.crossfit;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    const auto rows = cfdens::run_l1_experiment(cfg);
    const std::string path = a.out_dir + "/l1.csv";
    std::ofstream out(path);
    out << "n,case,arm,reps_done,failures,mean_l1,mean_l1_naive,mean_d1_corrected\n";
    for (const auto& r : rows)
      out << r.n << "," << a.case_id << "," << a.arm << "," << r.replications_done
          << "," << r.failures << "," << fmt(r.mean_l1) << ","
          << fmt(r.mean_l1_naive) << "," << fmt(r.mean_d1_corrected) << "\n";
    opts_echo["outputs"] = {path};
    return 0;
  }
  if (a.experiment != "coverage" && a.experiment != "contrast-coverage")
    throw CLI::ValidationError("--experiment",
                               "expected l1, coverage or contrast-coverage");
  const auto pivots = cfdens::PivotTable::load_csv(a.pivots);
  cfdens::CoverageConfig cfg;
  cfg.n = a.n_list.front();
  cfg.replications = a.reps;
  cfg.nuisance_case = a.case_id;
  cfg.arm = a.arm;
  cfg.alpha = a.alpha;
  cfg.points = a.points;
  cfg.crossfit_folds = a.crossfit;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.pivots = &pivots;
  if (a.experiment == "coverage") {
    cfg.kind = cfdens::CiKind::density;
  } else {
    if (a.kind == "diff")
      cfg.kind = cfdens::CiKind::difference;
    else if (a.kind == "logratio")
      cfg.kind = cfdens::CiKind::log_ratio;
    else
      throw CLI::ValidationError("--kind", "expected diff or logratio");
  }
  const auto rows = cfdens::run_coverage_experiment(cfg);
  const std::string path = a.out_dir + "/coverage.csv";
  std::ofstream out(path);
  out << "s0,covered,defined,coverage,mean_width,failed_replications\n";
  for (const auto& r : rows) {
    const double cov = r.defined == 0
                           ? 0.0
                           : static_cast<double>(r.covered) /
                                 static_cast<double>(r.defined);
    out << fmt(r.s0) << "," << r.covered << "," << r.defined << "," << fmt(cov)
        << "," << fmt(r.mean_width) << "," << r.failed_replications << "\n";
  }
  opts_echo["outputs"] = {path};
  return 0;
}

struct QuantilesArgs {
  int k = 2;
  std::size_t nsim = 100000;
  std::size_t b = 10000;
  std::uint64_t seed = 20260810;
  int threads = env_threads();
  std::string out;
};

int run_quantiles(const QuantilesArgs& a, json& opts_echo) {
  const auto table = cfdens::simulate_pivots(a.k, a.nsim, a.b, a.seed, a.threads);
  table.save_csv(a.out);
  opts_echo["outputs"] = {a.out};
  return 0;
}

struct BandsArgs {
  std::string fit_path;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int run_bands_input(const BandsArgs& a, json& opts_echo) {
  std::ifstream in(a.fit_path);
  if (!in) throw std::runtime_error("cannot open '" + a.fit_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto fit = cfdens::fit_from_json(text);
  const auto values = cfdens::band_order_statistics(fit, a.n, a.seed);
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot open '" + a.out + "'");
  out << "order_statistic\n";
  for (double v : values) out << fmt(v) << "\n";
  opts_echo["outputs"] = {a.out};
  return 0;
}

std::string manifest_path_for(const std::string& out, const std::string& out_dir) {
  if (!out_dir.empty()) return out_dir + "/manifest.json";
  return out + ".manifest.json";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"doubly robust log-concave counterfactual density estimation"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "fit a counterfactual density");
  add_data_options(c_est, est.data);
  c_est->add_option("--arm", est.arm, "treatment level")->check(CLI::Range(0, 1))
      ->required();
  c_est->add_option("--grid-n", est.grid_n, "grid resolution override");
  c_est->add_option("--nuisance", est.nuisance, "nuisance model spec");
  c_est->add_option("--crossfit", est.crossfit, "number of cross-fitting folds");
  c_est->add_option("--seed", est.seed, "random seed");
  c_est->add_option("--threads", est.threads, "worker threads");
  c_est->add_option("--out", est.out, "output fit JSON path")->required();

  CiArgs ci;
  auto* c_ci = app.add_subcommand("ci", "pointwise confidence interval");
  add_data_options(c_ci, ci.data);
  c_ci->add_option("--arm", ci.arm, "treatment level (density/deriv kinds)")
      ->check(CLI::Range(0, 1));
  c_ci->add_option("--s0", ci.s0, "evaluation point")->required();
  c_ci->add_option("--alpha", ci.alpha, "1 - confidence level");
  c_ci->add_option("--kind", ci.kind, "density | deriv | diff | logratio");
  c_ci->add_option("--pivots", ci.pivots, "pivot table CSV");
  c_ci->add_option("--nuisance", ci.nuisance, "nuisance model spec");
  c_ci->add_option("--grid-n", ci.grid_n, "grid resolution override");
  c_ci->add_option("--crossfit", ci.crossfit, "number of cross-fitting folds");
  c_ci->add_option("--bandwidth", ci.bandwidth, "bandwidth h (default n^-1/10)");
  c_ci->add_option("--seed", ci.seed, "random seed");
  c_ci->add_option("--threads", ci.threads, "worker threads");
  c_ci->add_option("--out", ci.out, "output JSON path")->required();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "synthetic study experiments");
  c_sim->add_option("--experiment", sim.experiment,
                    "l1 | coverage | contrast-coverage");
  c_sim->add_option("--case", sim.case_id, "nuisance specification case")
      ->check(CLI::Range(1, 3));
  c_sim->add_option("--n-list", sim.n_list, "sample sizes")->delimiter(',');
  c_sim->add_option("--reps", sim.reps, "replications");
  c_sim->add_option("--arm", sim.arm, "treatment level")->check(CLI::Range(0, 1));
  c_sim->add_option("--alpha", sim.alpha, "1 - confidence level");
  c_sim->add_option("--kind", sim.kind, "contrast kind: diff | logratio");
  c_sim->add_option("--points", sim.points, "evaluation points")->delimiter(',');
  c_sim->add_option("--crossfit", sim.crossfit, "number of cross-fitting folds");
  c_sim->add_option("--seed", sim.seed, "random seed");
  c_sim->add_option("--threads", sim.threads, "worker threads");
  c_sim->add_option("--pivots", sim.pivots, "pivot table CSV");
  c_sim->add_flag("--paper-scale", sim.paper_scale,
                  "full-scale run (1000 reps, n up to 8000)");
  c_sim->add_option("--out-dir", sim.out_dir, "output directory")->required();

  QuantilesArgs qa;
  auto* c_q = app.add_subcommand("quantiles", "regenerate the pivot table");
  c_q->add_option("--k", qa.k, "curvature order (only 2 supported)");
  c_q->add_option("--nsim", qa.nsim, "design size per replication");
  c_q->add_option("--B", qa.b, "number of replications");
  c_q->add_option("--seed", qa.seed, "random seed");
  c_q->add_option("--threads", qa.threads, "worker threads");
  c_q->add_option("--out", qa.out, "output CSV path")->required();

  BandsArgs ba;
  auto* c_b = app.add_subcommand("bands-input", "order statistics from a fit");
  c_b->add_option("--fit", ba.fit_path, "fit JSON from estimate")->required();
  c_b->add_option("--n", ba.n, "pseudo-sample size")->required();
  c_b->add_option("--seed", ba.seed, "random seed");
  c_b->add_option("--out", ba.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  json opts_echo;
  std::string manifest;
  try {
    if (c_est->parsed()) {
      opts_echo = {{"command", "estimate"},     {"data", est.data.path},
                   {"arm", est.arm},            {"grid_n", est.grid_n},
                   {"nuisance", est.nuisance},  {"crossfit", est.crossfit},
                   {"seed", est.seed},          {"out", est.out}};
      manifest = manifest_path_for(est.out, "");
      run_estimate(est, opts_echo);
    } else if (c_ci->parsed()) {
      opts_echo = {{"command", "ci"},         {"data", ci.data.path},
                   {"arm", ci.arm},           {"s0", ci.s0},
                   {"alpha", ci.alpha},       {"kind", ci.kind},
                   {"pivots", ci.pivots},     {"nuisance", ci.nuisance},
                   {"crossfit", ci.crossfit}, {"bandwidth", ci.bandwidth},
                   {"seed", ci.seed},         {"out", ci.out}};
      manifest = manifest_path_for(ci.out, "");
      run_ci(ci, opts_echo);
    } else if (c_sim->parsed()) {
      opts_echo = {{"command", "simulate"},   {"experiment", sim.experiment},
                   {"case", sim.case_id},     {"n_list", sim.n_list},
                   {"reps", sim.reps},        {"arm", sim.arm},
                   {"alpha", sim.alpha},      {"kind", sim.kind},
                   {"points", sim.points},    {"crossfit", sim.crossfit},
                   {"seed", sim.seed},        {"paper_scale", sim.paper_scale},
                   {"out_dir", sim.out_dir}};
      manifest = manifest_path_for("", sim.out_dir);
      run_simulate(sim, opts_echo);
    } else if (c_q->parsed()) {
      opts_echo = {{"command", "quantiles"}, {"k", qa.k},       {"nsim", qa.nsim},
                   {"B", qa.b},              {"seed", qa.seed}, {"out", qa.out}};
      manifest = manifest_path_for(qa.out, "");
      run_quantiles(qa, opts_echo);
    } else if (c_b->parsed()) {
      opts_echo = {{"command", "bands-input"},
                   {"fit", ba.fit_path},
                   {"n", ba.n},
                   {"seed", ba.seed},
                   {"out", ba.out}};
      manifest = manifest_path_for(ba.out, "");
      run_bands_input(ba, opts_echo);
    }
    if (!manifest.empty()) write_manifest(manifest, opts_echo, "ok", "");
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    if (!manifest.empty()) write_manifest(manifest, opts_echo, "error", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!manifest.empty()) write_manifest(manifest, opts_echo, "error", e.what());
    return 2;
  }
}
