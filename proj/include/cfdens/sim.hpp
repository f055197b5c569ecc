#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cfdens/inference.hpp"
#include "cfdens/nuisance.hpp"
#include "cfdens/onestep.hpp"

namespace cfdens {

//! One synthetic dataset: four U[0,1] covariates, logistic treatment,
//! uniform conditional outcome laws.
struct DgpDraw {
  ObservedSample sample;
  std::uint64_t seed;
};

DgpDraw draw_dgp(std::size_t n, std::uint64_t seed, const DgpParams& params = {});

// Density of the sum of four i.i.d. standard uniforms (piecewise cubic).
double ir4(double x);

//! Closed-form counterfactual density of the synthetic study:
//! p1 on (4,12) and p0 on (0,8), both with mean 6 and variance 16/9.
class TrueDensity {
 public:
  explicit TrueDensity(int arm);

  int arm() const { return arm_; }
  double support_lower() const { return lower_; }
  double support_upper() const { return upper_; }

  double operator()(double y) const;
  double derivative(double y) const;  // one-sided at the kink points
  double cdf(double y) const;

 private:
  int arm_;
  double lower_;
  double upper_;
  std::vector<double> cdf_grid_;
  std::vector<double> cdf_values_;
};

// Nuisance models of the three simulation cases: 1 = both correct,
// 2 = only the propensity correct, 3 = only the conditional CDF correct.
NuisancePair case_nuisances(const ObservedSample& sample, int arm, int case_id);

// Log-concave MLE of the raw arm subsample, no covariate adjustment.
LogConcaveFit naive_logconcave(const ObservedSample& sample, int arm);

// Integral of |density(fit) - truth| over the union of supports, split at
// fit atoms and truth kink points.
double l1_distance(const LogConcaveFit& fit, const TrueDensity& truth);

struct L1Config {
  std::vector<std::size_t> n_values = {500, 1000, 2500};
  std::size_t replications = 200;
  int nuisance_case = 1;
  int arm = 1;
  std::size_t crossfit_folds = 0;  // 0 = pooled estimator
  std::uint64_t seed = 1;
  int threads = 1;
};

struct L1Row {
  std::size_t n = 0;
  double mean_l1 = 0.0;        // adjusted estimator vs truth
  double mean_l1_naive = 0.0;  // unadjusted log-concave MLE vs truth
  double mean_d1_corrected = 0.0;  // Wasserstein-1 of the corrected CDF
  std::size_t replications_done = 0;
  std::size_t failures = 0;
};

std::vector<L1Row> run_l1_experiment(const L1Config& config);

struct CoverageConfig {
  std::size_t n = 2500;
  std::size_t replications = 300;
  int nuisance_case = 1;
  int arm = 1;  // used by density/derivative kinds
  CiKind kind = CiKind::density;
  std::vector<double> points;
  double alpha = 0.05;
  std::size_t crossfit_folds = 0;
  std::uint64_t seed = 1;
  std::optional<double> bandwidth;
  int threads = 1;
  const PivotTable* pivots = nullptr;
};

struct CoveragePoint {
  double s0 = 0.0;
  std::size_t covered = 0;
  std::size_t defined = 0;  // replications where the CI existed at s0
  double mean_width = 0.0;  // over defined replications
  std::size_t failed_replications = 0;  // estimation failures (whole run)
};

std::vector<CoveragePoint> run_coverage_experiment(const CoverageConfig& config);

// Default contrast evaluation points: 41 equally spaced points on the
// interior of the common support (4, 8), trimmed by 0.1.
std::vector<double> default_contrast_points();

}  // namespace cfdens
