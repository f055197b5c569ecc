#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfdens/isotonic.hpp"

namespace cfdens {

//! Discrete probability measure on strictly increasing support points.
//! Point masses (m < 2) are rejected: the log-concave projection is not
//! defined for them.
struct WeightedAtoms {
  std::vector<double> locations;
  std::vector<double> weights;

  WeightedAtoms(std::vector<double> locs, std::vector<double> wts);
};

//! Log-concave maximum-likelihood fit: a piecewise-linear concave
//! log-density over the atom locations, normalized to integrate to one.
class LogConcaveFit {
 public:
  LogConcaveFit(std::vector<double> atoms, std::vector<double> weights,
                std::vector<double> phi);

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& phi() const { return phi_; }

  double support_lower() const { return atoms_.front(); }
  double support_upper() const { return atoms_.back(); }

  double density(double s) const;
  // nullopt outside [t_1, t_m]; the log-density is -infinity there.
  std::optional<double> log_density(double s) const;

  // Left derivative of the density: p(s) * (left slope of log p at s).
  // Undefined (throws) for s <= t_1.
  double left_derivative(double s) const;

  double cdf(double s) const;
  double quantile(double u) const;  // u in (0,1)

  // Slope-change points of the log-density (tolerance 1e-8) plus both
  // support endpoints; sorted, deduplicated.
  const std::vector<double>& knots() const { return knots_; }

  // Nearest knots strictly below/above s0; s0 must lie strictly inside the
  // support. If s0 coincides with a knot (1e-12), the flanking knots of that
  // knot are returned.
  std::pair<double, double> adjacent_knots(double s0) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> phi_;
  std::vector<double> slopes_;        // per atom segment
  std::vector<double> cdf_at_atoms_;  // unnormalized cumulative mass
  std::vector<double> knots_;
  double total_mass_;

  std::size_t segment_below(double s) const;
};

// Atom measure from an isotonized CDF: grid points s_2..s_m with weights
// F(s_k) - F(s_{k-1}); near-zero increments (< 1e-12) are dropped and the
// rest renormalized. Throws if fewer than two atoms remain (point mass).
WeightedAtoms atoms_from_cdf(const SteppedCdf& cdf);

struct LogConcaveOptions {
  double tol = 1e-8;       // directional-derivative certificate
  int max_active_steps = 1000;
};

// Weighted log-concave MLE: maximizes sum_i w_i phi(t_i) - integral exp(phi)
// over concave phi, via an active-set method on the knot set with Newton
// steps on the active knots. Throws on non-convergence.
LogConcaveFit logconcave_mle(const WeightedAtoms& atoms,
                             const LogConcaveOptions& options = {});

// JSON round-trip ({atoms, weights, phi, knots}) for caching and CLI dumps.
std::string fit_to_json(const LogConcaveFit& fit);
LogConcaveFit fit_from_json(const std::string& text);

}  // namespace cfdens
