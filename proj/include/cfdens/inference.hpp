#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfdens/logconcave.hpp"
#include "cfdens/onestep.hpp"

namespace cfdens {

//! Bandwidth-based estimate of the scaling factor chi at a point.
struct ChiEstimate {
  double value = 0.0;  // >= 0 by construction
  double bandwidth = 0.0;
  int arm = 0;
  double s0 = 0.0;
};

// chi-hat = [P_n {D(s0+h)-D(s0)}^2 + P_n {D(s0-h)-D(s0)}^2] / (2h).
// h defaults to n^(-1/10).
ChiEstimate estimate_chi(const ObservedSample& sample,
                         const InfluenceEvaluator& evaluator, double s0,
                         std::optional<double> h = std::nullopt);

// Cross-fitted variant: per-fold empirical means of the same squared
// differences, averaged over folds.
ChiEstimate crossfit_chi(const ObservedSample& sample, int arm,
                         const NuisanceFactory& factory,
                         const FoldAssignment& folds, double s0,
                         std::optional<double> h = std::nullopt,
                         double propensity_floor = 1e-6);

//! Monte-Carlo table of the pivot draws L_k^(0), L_k^(1) with quantile
//! lookups. Only curvature order k = 2 has a simulation recipe.
class PivotTable {
 public:
  PivotTable(int k, std::size_t n_sim, std::size_t draws_count, std::uint64_t seed,
             std::vector<double> draws0, std::vector<double> draws1);

  int k() const { return k_; }
  std::size_t n_sim() const { return n_sim_; }
  std::size_t size() const { return draws0_.size(); }
  std::uint64_t seed() const { return seed_; }

  const std::vector<double>& draws0() const { return draws0_; }
  const std::vector<double>& draws1() const { return draws1_; }

  // 1-alpha empirical quantiles of |L^(0)| and |L^(1)|.
  double quantile_abs0(double alpha) const;
  double quantile_abs1(double alpha) const;

  // Fixed disjoint halves of the L^(0) stream used by the contrast CIs:
  // the first half plays the arm-1 pivot, the second half the arm-0 pivot.
  std::span<const double> arm1_stream() const;
  std::span<const double> arm0_stream() const;

  void save_csv(const std::string& path) const;
  static PivotTable load_csv(const std::string& path);

 private:
  int k_;
  std::size_t n_sim_;
  std::uint64_t seed_;
  std::vector<double> draws0_;
  std::vector<double> draws1_;
  std::vector<double> abs0_sorted_;
  std::vector<double> abs1_sorted_;
};

// Convex-regression proxy simulation of the pivots: per replication draw
// y_i = 12(x_i - 1/2)^2 + N(0,1) on x_i = i/n_sim, fit the convex LSE,
// take the knots adjacent to 1/2 and record
//   L^(0) = sqrt(n_sim * dtau) * g(1/2),
//   L^(1) = sqrt(n_sim * dtau^3) * g'(1/2-).
PivotTable simulate_pivots(int k, std::size_t n_sim, std::size_t replications,
                           std::uint64_t seed, int threads = 1);

enum class CiKind { density, derivative, difference, log_ratio };

//! Symmetric pointwise confidence interval; `degenerate` flags a zero-width
//! interval caused by chi-hat = 0.
struct PointwiseCI {
  double center = 0.0;
  double half_width = 0.0;
  double alpha = 0.0;
  CiKind kind = CiKind::density;
  double s0 = 0.0;
  bool degenerate = false;

  double lower() const { return center - half_width; }
  double upper() const { return center + half_width; }
};

// CI for p(s0) or p'(s0): half-width sqrt(chi / (n * dtau^(1 or 3))) times
// the 1-alpha quantile of the matching absolute pivot.
PointwiseCI pointwise_ci(const LogConcaveFit& fit, const ChiEstimate& chi,
                         const PivotTable& pivots, double s0, double alpha,
                         CiKind kind, std::size_t n);

// CI for p1(s0) - p0(s0) via the split pivot streams.
PointwiseCI difference_ci(const LogConcaveFit& fit1, const LogConcaveFit& fit0,
                          const ChiEstimate& chi1, const ChiEstimate& chi0,
                          const PivotTable& pivots, double s0, double alpha,
                          std::size_t n);

// CI for log(p1(s0)/p0(s0)); exponentiate the endpoints for a ratio CI.
PointwiseCI log_ratio_ci(const LogConcaveFit& fit1, const LogConcaveFit& fit0,
                         const ChiEstimate& chi1, const ChiEstimate& chi0,
                         const PivotTable& pivots, double s0, double alpha,
                         std::size_t n);

// Sorted pseudo-sample F^{-1}(U_(i)) feeding confidence-band algorithms.
std::vector<double> band_order_statistics(const LogConcaveFit& fit, std::size_t n,
                                          std::uint64_t seed);

}  // namespace cfdens
