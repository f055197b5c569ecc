#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfdens/data.hpp"

namespace cfdens {

//! Propensity-score model: predictions are clipped to [eps, 1-eps] so that
//! inverse weights stay bounded.
class PropensityModel {
 public:
  PropensityModel(std::function<double(std::span<const double>)> raw,
                  double epsilon = 0.01);

  double operator()(std::span<const double> x) const;
  double epsilon() const { return epsilon_; }

 private:
  std::function<double(std::span<const double>)> raw_;
  double epsilon_;
};

//! Conditional outcome CDF phi(s|x); monotone in s with limits 0 and 1.
class ConditionalCdfModel {
 public:
  ConditionalCdfModel(std::function<double(double, std::span<const double>)> eval,
                      std::string family = "custom");

  double operator()(double s, std::span<const double> x) const {
    return eval_(s, x);
  }
  const std::string& family() const { return family_; }

 private:
  std::function<double(double, std::span<const double>)> eval_;
  std::string family_;
};

struct NuisancePair {
  PropensityModel propensity;
  ConditionalCdfModel cond_cdf;
};

enum class BaseCdf { uniform, normal, gamma, exponential };

// CDF of the chosen base distribution standardized to mean 0, variance 1.
double standardized_base_cdf(BaseCdf base, double z, double gamma_shape = 2.0);

//! Location-scale conditional CDF H((s - mu(x)) / sigma(x)).
class LocationScaleCdf {
 public:
  LocationScaleCdf(BaseCdf base, std::function<double(std::span<const double>)> mu,
                   std::function<double(std::span<const double>)> sigma,
                   double gamma_shape = 2.0, double sigma_min = 1e-6);

  double operator()(double s, std::span<const double> x) const;
  double mu(std::span<const double> x) const { return mu_(x); }
  double sigma(std::span<const double> x) const;

  ConditionalCdfModel as_model() const;

 private:
  BaseCdf base_;
  std::function<double(std::span<const double>)> mu_;
  std::function<double(std::span<const double>)> sigma_;
  double gamma_shape_;
  double sigma_min_;
};

struct LogisticFit {
  std::vector<double> coefficients;  // intercept first, then selected columns
  std::vector<std::size_t> columns;
  PropensityModel model;
};

// Newton-IRLS logistic regression of I(A == arm) on the selected covariate
// columns (all columns when empty) plus an intercept. Throws on rank
// deficiency and on quasi-separation (|beta| growing past 50).
LogisticFit fit_logistic_propensity(const ObservedSample& sample, int arm,
                                    std::vector<std::size_t> feature_columns = {},
                                    double epsilon = 0.01);

struct LocationScaleOptions {
  BaseCdf base = BaseCdf::normal;
  double gamma_shape = 2.0;
  std::vector<std::size_t> feature_columns;  // empty = all columns
  // When set, exactly one endpoint must be finite. The finite endpoint
  // anchors the support: with base uniform this reproduces the construction
  // U[c, 2*mu - c] (finite lower end, mu floored at c) or U[2*mu - c, c]
  // (finite upper end, mu capped at c).
  std::optional<std::pair<double, double>> support_clip;
  // Second regression of squared residuals for sigma(x); when false, sigma
  // is the constant residual standard deviation. Ignored under support_clip.
  bool sigma_regression = true;
  double sigma_min = 1e-6;
};

// OLS of Y on X within the given arm for mu, with the scale model chosen by
// the options. Throws when the arm is empty or the regression is degenerate.
LocationScaleCdf fit_location_scale(const ObservedSample& sample, int arm,
                                    const LocationScaleOptions& options);

//! Parameters of the synthetic data-generating process used by the
//! simulation study: four U[0,1] covariates, logistic treatment assignment,
//! uniform conditional outcome laws.
struct DgpParams {
  double logit_intercept = -1.5;
  std::vector<double> logit_slopes = {0.25, 0.5, 0.75, 1.0};
};

// Closed-form true nuisance functions of the synthetic DGP.
NuisancePair oracle_nuisance(const DgpParams& params, int arm);

// Support interval of Y | X, A = arm in the synthetic DGP, as a function of
// the covariate sum.
std::pair<double, double> dgp_outcome_interval(int arm, double covariate_sum);

// Conditional outcome density eta_a(s|x) of the synthetic DGP (used by the
// quadrature oracle for the scaling factor chi).
double dgp_conditional_density(const DgpParams& params, int arm, double s,
                               std::span<const double> x);

}  // namespace cfdens
