#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfdens/data.hpp"
#include "cfdens/isotonic.hpp"
#include "cfdens/logconcave.hpp"
#include "cfdens/nuisance.hpp"

namespace cfdens {

//! Externally computed nuisance predictions: one propensity value per row
//! and conditional-CDF values on a shared grid (linearly interpolated off
//! the grid, clamped beyond it).
struct ExternalPredictions {
  IsoGrid grid;
  std::vector<double> pi;   // per row
  std::vector<double> phi;  // row-major n x m

  ExternalPredictions(IsoGrid g, std::vector<double> pi_values,
                      std::vector<double> phi_values);
};

ExternalPredictions load_predictions_csv(const std::string& path);
void write_predictions_csv(const std::string& path,
                           const ExternalPredictions& preds);

//! Uncentered influence function D of the counterfactual CDF at treatment
//! level `arm`:  I(A=a)/pi(x) * [I(y <= s) - phi(s|x)] + phi(s|x).
class InfluenceEvaluator {
 public:
  InfluenceEvaluator(int arm, const NuisancePair& nuisances,
                     double propensity_floor = 1e-6);
  InfluenceEvaluator(int arm, const ExternalPredictions& preds,
                     double propensity_floor = 1e-6);

  int arm() const { return arm_; }
  double propensity(const ObservedSample& sample, std::size_t row) const;
  double cond_cdf(double s, const ObservedSample& sample, std::size_t row) const;
  double evaluate(double s, const ObservedSample& sample, std::size_t row) const;

 private:
  int arm_;
  double floor_;
  std::function<double(const ObservedSample&, std::size_t)> pi_;
  std::function<double(double, const ObservedSample&, std::size_t)> phi_;
};

//! K-fold partition of row indices with fold sizes differing by at most one.
struct FoldAssignment {
  std::size_t k0;
  std::vector<std::size_t> fold_of_row;

  FoldAssignment(std::size_t folds, std::vector<std::size_t> assignment);

  // Seeded shuffle, remainder distributed round-robin.
  static FoldAssignment random(std::size_t n, std::size_t folds,
                               std::uint64_t seed);

  std::vector<std::size_t> rows_in_fold(std::size_t k) const;
  std::vector<std::size_t> rows_not_in_fold(std::size_t k) const;
};

using NuisanceFactory =
    std::function<NuisancePair(const ObservedSample& training_data)>;

// One-step CDF estimate on the grid: mean of the influence function at each
// grid point. The raw result may leave [0,1] and need not be monotone.
SteppedCdf onestep_cdf(const ObservedSample& sample,
                       const InfluenceEvaluator& evaluator, const IsoGrid& grid,
                       int threads = 1);

// Cross-fitted variant: the influence function of row i uses nuisances
// trained on the complement of i's fold; rows are then averaged in row order
// through the same summation tree as onestep_cdf, so a fold-independent
// factory reproduces onestep_cdf bit for bit.
SteppedCdf crossfit_cdf(const ObservedSample& sample, int arm,
                        const NuisanceFactory& factory,
                        const FoldAssignment& folds, const IsoGrid& grid,
                        int threads = 1, double propensity_floor = 1e-6);

struct DensityEstimate {
  LogConcaveFit fit;
  SteppedCdf corrected;  // isotonized one-step CDF the fit was built from
};

// Full pipeline: one-step CDF on the grid (default grid when absent),
// clamp to [0,1], isotonize, difference into atoms, log-concave MLE.
DensityEstimate estimate_density(const ObservedSample& sample, int arm,
                                 const NuisancePair& nuisances,
                                 const std::optional<IsoGrid>& grid = std::nullopt,
                                 int threads = 1);

DensityEstimate estimate_density(const ObservedSample& sample,
                                 const InfluenceEvaluator& evaluator,
                                 const std::optional<IsoGrid>& grid = std::nullopt,
                                 int threads = 1);

DensityEstimate estimate_density_crossfit(const ObservedSample& sample, int arm,
                                          const NuisanceFactory& factory,
                                          const FoldAssignment& folds,
                                          const std::optional<IsoGrid>& grid = std::nullopt,
                                          int threads = 1);

}  // namespace cfdens
