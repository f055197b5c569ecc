#include "cfdens/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "cfdens/numeric.hpp"

namespace cfdens {

PropensityModel::PropensityModel(std::function<double(std::span<const double>)> raw,
                                 double epsilon)
    : raw_(std::move(raw)), epsilon_(epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("PropensityModel: epsilon must lie in (0, 0.5)");
}

double PropensityModel::operator()(std::span<const double> x) const {
  return std::clamp(raw_(x), epsilon_, 1.0 - epsilon_);
}

ConditionalCdfModel::ConditionalCdfModel(
    std::function<double(double, std::span<const double>)> eval, std::string family)
    : eval_(std::move(eval)), family_(std::move(family)) {}

double standardized_base_cdf(BaseCdf base, double z, double gamma_shape) {
  switch (base) {
    case BaseCdf::uniform: {
      // U[-sqrt(3), sqrt(3)]
      const double r = std::sqrt(3.0);
      return std::clamp((z + r) / (2.0 * r), 0.0, 1.0);
    }
    case BaseCdf::normal:
      return normal_cdf(z);
    case BaseCdf::exponential: {
      // Exp(1) shifted to mean 0
      if (z <= -1.0) return 0.0;
      return -std::expm1(-(z + 1.0));
    }
    case BaseCdf::gamma: {
      // Gamma(shape k, scale 1) standardized: (G - k)/sqrt(k)
      const double k = gamma_shape;
      const double g = z * std::sqrt(k) + k;
      if (g <= 0.0) return 0.0;
      return boost::math::gamma_p(k, g);
    }
  }
  throw std::invalid_argument("standardized_base_cdf: unknown base");
}

LocationScaleCdf::LocationScaleCdf(BaseCdf base,
                                   std::function<double(std::span<const double>)> mu,
                                   std::function<double(std::span<const double>)> sigma,
                                   double gamma_shape, double sigma_min)
    : base_(base),
      mu_(std::move(mu)),
      sigma_(std::move(sigma)),
      gamma_shape_(gamma_shape),
      sigma_min_(sigma_min) {
  if (!(sigma_min_ > 0.0))
    throw std::invalid_argument("LocationScaleCdf: sigma_min must be positive");
}

double LocationScaleCdf::sigma(std::span<const double> x) const {
  return std::max(sigma_(x), sigma_min_);
}

double LocationScaleCdf::operator()(double s, std::span<const double> x) const {
  return standardized_base_cdf(base_, (s - mu_(x)) / sigma(x), gamma_shape_);
}

ConditionalCdfModel LocationScaleCdf::as_model() const {
  LocationScaleCdf copy = *this;
  return ConditionalCdfModel(
      [copy](double s, std::span<const double> x) { return copy(s, x); },
      "location-scale-H");
}

namespace {

Eigen::MatrixXd design_matrix(const ObservedSample& sample,
                              std::span<const std::size_t> rows,
                              const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd x(rows.size(), columns.size() + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x(r, 0) = 1.0;
    const auto rv = sample.row(rows[r]);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] >= sample.d())
        throw std::invalid_argument("feature column index out of range");
      x(r, c + 1) = rv[columns[c]];
    }
  }
  return x;
}

std::vector<std::size_t> all_columns(const ObservedSample& sample) {
  std::vector<std::size_t> cols(sample.d());
  for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = i;
  return cols;
}

std::vector<std::size_t> all_rows(const ObservedSample& sample) {
  std::vector<std::size_t> rows(sample.n());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

// prediction closure over intercept-first coefficients and column subset
std::function<double(std::span<const double>)> linear_predictor(
    std::vector<double> beta, std::vector<std::size_t> columns) {
  return [beta = std::move(beta), columns = std::move(columns)](
             std::span<const double> x) {
    double v = beta[0];
    for (std::size_t c = 0; c < columns.size(); ++c) v += beta[c + 1] * x[columns[c]];
    return v;
  };
}

}  // namespace

LogisticFit fit_logistic_propensity(const ObservedSample& sample, int arm,
                                    std::vector<std::size_t> feature_columns,
                                    double epsilon) {
  if (arm != 0 && arm != 1)
    throw std::invalid_argument("fit_logistic_propensity: arm must be 0 or 1");
  if (sample.arm_count(0) == 0 || sample.arm_count(1) == 0)
    throw std::runtime_error("fit_logistic_propensity: both arms must be non-empty");
  if (feature_columns.empty()) feature_columns = all_columns(sample);

  const auto rows = all_rows(sample);
  const Eigen::MatrixXd x = design_matrix(sample, rows, feature_columns);
  const auto n = static_cast<Eigen::Index>(sample.n());
  const auto p = x.cols();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p)
    throw std::runtime_error("fit_logistic_propensity: rank-deficient design");

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i)
    y(i) = sample.treatment(static_cast<std::size_t>(i)) == arm ? 1.0 : 0.0;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = expit(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd score = x.transpose() * (y - mu);
    const Eigen::VectorXd delta = xtwx.ldlt().solve(score);
    beta += delta;
    if (beta.lpNorm<Eigen::Infinity>() > 50.0)
      throw std::runtime_error("fit_logistic_propensity: quasi-separation");
    if (delta.lpNorm<Eigen::Infinity>() < 1e-8) break;
  }

  std::vector<double> coef(beta.data(), beta.data() + beta.size());
  auto lin = linear_predictor(coef, feature_columns);
  PropensityModel model(
      [lin](std::span<const double> xr) { return expit(lin(xr)); }, epsilon);
  return LogisticFit{std::move(coef), std::move(feature_columns), std::move(model)};
}

LocationScaleCdf fit_location_scale(const ObservedSample& sample, int arm,
                                    const LocationScaleOptions& options) {
  const auto rows = sample.arm_rows(arm);
  if (rows.empty())
    throw std::runtime_error("fit_location_scale: empty treatment arm");
  auto columns = options.feature_columns;
  if (columns.empty()) columns = all_columns(sample);

  const Eigen::MatrixXd x = design_matrix(sample, rows, columns);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = sample.outcome(rows[i]);

  if ((y.array() - y(0)).abs().maxCoeff() == 0.0)
    throw std::runtime_error("fit_location_scale: degenerate regression (constant outcomes)");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw std::runtime_error("fit_location_scale: rank-deficient design");
  const Eigen::VectorXd beta = qr.solve(y);
  std::vector<double> coef(beta.data(), beta.data() + beta.size());
  auto mu_lin = linear_predictor(coef, columns);

  if (options.support_clip) {
    const auto [lo, hi] = *options.support_clip;
    const bool lower_finite = std::isfinite(lo);
    const bool upper_finite = std::isfinite(hi);
    if (lower_finite == upper_finite)
      throw std::invalid_argument(
          "fit_location_scale: support_clip needs exactly one finite endpoint");
    if (options.base != BaseCdf::uniform)
      throw std::invalid_argument(
          "fit_location_scale: support_clip is defined for the uniform base");
    const double c = lower_finite ? lo : hi;
    const double root12 = std::sqrt(12.0);
    auto mu = [mu_lin, c, lower_finite](std::span<const double> xr) {
      const double m = mu_lin(xr);
      return lower_finite ? std::max(m, c) : std::min(m, c);
    };
    auto sigma = [mu, c, root12](std::span<const double> xr) {
      return 2.0 * std::abs(mu(xr) - c) / root12;
    };
    return LocationScaleCdf(BaseCdf::uniform, mu, sigma, options.gamma_shape,
                            options.sigma_min);
  }

  const Eigen::VectorXd resid = y - x * beta;
  if (options.sigma_regression) {
    const Eigen::VectorXd r2 = resid.array().square();
    const Eigen::VectorXd gamma = qr.solve(r2);
    std::vector<double> gcoef(gamma.data(), gamma.data() + gamma.size());
    auto var_lin = linear_predictor(gcoef, columns);
    auto sigma = [var_lin](std::span<const double> xr) {
      return std::sqrt(std::max(var_lin(xr), 0.0));
    };
    return LocationScaleCdf(options.base, mu_lin, sigma, options.gamma_shape,
                            options.sigma_min);
  }
  const double sd = std::sqrt(resid.squaredNorm() /
                              std::max<double>(1.0, static_cast<double>(resid.size())));
  auto sigma = [sd](std::span<const double>) { return sd; };
  return LocationScaleCdf(options.base, mu_lin, sigma, options.gamma_shape,
                          options.sigma_min);
}

namespace {

double covariate_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double dgp_logit(const DgpParams& params, std::span<const double> x) {
  double v = params.logit_intercept;
  for (std::size_t j = 0; j < params.logit_slopes.size() && j < x.size(); ++j)
    v += params.logit_slopes[j] * x[j];
  return v;
}

}  // namespace

// Y | X=x, A=a is uniform on [(8-4a) + (2a-2)s, (8-4a) + 2as] with s = sum x.
std::pair<double, double> dgp_outcome_interval(int arm, double s) {
  const double base = 8.0 - 4.0 * arm;
  return {base + (2.0 * arm - 2.0) * s, base + 2.0 * arm * s};
}

NuisancePair oracle_nuisance(const DgpParams& params, int arm) {
  if (arm != 0 && arm != 1)
    throw std::invalid_argument("oracle_nuisance: arm must be 0 or 1");
  PropensityModel pi(
      [params, arm](std::span<const double> x) {
        const double p1 = expit(dgp_logit(params, x));
        return arm == 1 ? p1 : 1.0 - p1;
      },
      0.01);
  ConditionalCdfModel phi(
      [arm](double s, std::span<const double> x) {
        const auto [lo, hi] = dgp_outcome_interval(arm, covariate_sum(x));
        if (hi <= lo) return s >= lo ? 1.0 : 0.0;
        return std::clamp((s - lo) / (hi - lo), 0.0, 1.0);
      },
      "dgp-oracle");
  return NuisancePair{std::move(pi), std::move(phi)};
}

double dgp_conditional_density(const DgpParams&, int arm, double s,
                               std::span<const double> x) {
  const auto [lo, hi] = dgp_outcome_interval(arm, covariate_sum(x));
  if (hi <= lo) return 0.0;
  return (s > lo && s < hi) ? 1.0 / (hi - lo) : 0.0;
}

}  // namespace cfdens
