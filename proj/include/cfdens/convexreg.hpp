#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace cfdens {

//! Convex least-squares fit on a 1-d design: piecewise-linear with
//! non-decreasing slopes, the Euclidean projection of y onto the convex cone.
class ConvexFit {
 public:
  ConvexFit(std::vector<double> x, std::vector<double> fitted);

  const std::vector<double>& design() const { return x_; }
  const std::vector<double>& fitted() const { return fitted_; }

  // Slope-change points (tolerance 1e-8) plus both design endpoints.
  const std::vector<double>& knots() const { return knots_; }

  double value(double s) const;          // linear interpolation, clamped ends
  double left_derivative(double s) const;  // slope of the segment left of s

 private:
  std::vector<double> x_;
  std::vector<double> fitted_;
  std::vector<double> slopes_;
  std::vector<double> knots_;
};

struct ConvexLseOptions {
  double tol = 1e-8;        // KKT / insertion threshold
  int max_iterations = 2000;
};

// Exact projection of y onto the convex cone over the design x (strictly
// increasing, n >= 3) via an active-set method on the knot set.
ConvexFit convex_lse(std::span<const double> x, std::span<const double> y,
                     const ConvexLseOptions& options = {});

// Nearest knots strictly left/right of x0; x0 must lie strictly inside the
// design range.
std::pair<double, double> convex_knots_around(const ConvexFit& fit, double x0);

}  // namespace cfdens
