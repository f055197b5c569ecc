#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cfdens/numeric.hpp"
#include "cfdens/nuisance.hpp"
#include "cfdens/rng.hpp"
#include "cfdens/sim.hpp"

using namespace cfdens;

TEST_CASE("logistic fit on independent treatment recovers the null model") {
  Rng rng(61);
  const std::size_t n = 2000, d = 3;
  std::vector<double> x(n * d);
  std::vector<int> a(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = rng.uniform();
    a[i] = rng.bernoulli(0.4) ? 1 : 0;
    y[i] = rng.normal();
  }
  const ObservedSample s(x, d, a, y);
  const auto fit = fit_logistic_propensity(s, 1);

  // standard errors from the information matrix at the fitted coefficients
  Eigen::MatrixXd design(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < d; ++j) design(i, j + 1) = x[i * d + j];
  }
  Eigen::VectorXd beta(d + 1);
  for (std::size_t j = 0; j <= d; ++j) beta(j) = fit.coefficients[j];
  Eigen::VectorXd eta = design * beta;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = expit(eta(i));
    info += p * (1 - p) * design.row(i).transpose() * design.row(i);
  }
  const Eigen::MatrixXd cov = info.inverse();
  double frac = 0.0;
  for (int ai : a) frac += ai;
  frac /= static_cast<double>(n);
  const double logit_mean = std::log(frac / (1.0 - frac));
  CHECK(std::abs(fit.coefficients[0] - logit_mean) <
        3.0 * std::sqrt(cov(0, 0)) + 1e-9);
  for (std::size_t j = 1; j <= d; ++j)
    CHECK(std::abs(fit.coefficients[j]) < 3.0 * std::sqrt(cov(j, j)));
}

TEST_CASE("intercept-only fit returns the sample fraction") {
  // constant covariate is rank deficient with the intercept, so select none?
  // a constant design column must be rejected
  std::vector<double> x = {1, 1, 1, 1, 1, 1};
  const ObservedSample s(x, 1, {1, 0, 1, 0, 1, 1}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_WITH_AS(fit_logistic_propensity(s, 1),
                       doctest::Contains("rank"), std::runtime_error);
}

TEST_CASE("feature selection omits columns") {
  const auto draw = draw_dgp(600, 7);
  const auto full = fit_logistic_propensity(draw.sample, 1);
  const auto omitted = fit_logistic_propensity(draw.sample, 1, {1, 3});
  CHECK(full.coefficients.size() == 5);
  CHECK(omitted.coefficients.size() == 3);
  CHECK(omitted.columns == std::vector<std::size_t>{1, 3});
}

TEST_CASE("quasi-separation is detected") {
  std::vector<double> x;
  std::vector<int> a;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i < 20 ? -1.0 - i * 0.01 : 1.0 + i * 0.01);
    a.push_back(i < 20 ? 0 : 1);
    y.push_back(0.5 * i);
  }
  const ObservedSample s(x, 1, a, y);
  CHECK_THROWS_WITH_AS(fit_logistic_propensity(s, 1),
                       doctest::Contains("quasi-separation"), std::runtime_error);
}

TEST_CASE("propensity predictions are clipped to [eps, 1-eps]") {
  PropensityModel m([](std::span<const double>) { return 1e-9; }, 0.01);
  std::vector<double> x = {0.0};
  CHECK(m(x) == 0.01);
  PropensityModel hi([](std::span<const double>) { return 1.0; }, 0.01);
  CHECK(hi(x) == 0.99);
  CHECK_THROWS_AS(PropensityModel([](std::span<const double>) { return 0.5; }, 0.7),
                  std::invalid_argument);
}

TEST_CASE("location-scale with clip reproduces the bounded-uniform forms") {
  const auto draw = draw_dgp(1500, 11);
  LocationScaleOptions opts;
  opts.base = BaseCdf::uniform;
  opts.support_clip = {{4.0, std::numeric_limits<double>::infinity()}};
  const auto phi1 = fit_location_scale(draw.sample, 1, opts);
  // CDF of U[4, 2*mu-4]; check the parametric form at a few x
  for (std::size_t i = 0; i < 5; ++i) {
    const auto x = draw.sample.row(i);
    const double mu = phi1.mu(x);
    CHECK(mu >= 4.0);
    const double hi = 2.0 * mu - 4.0;
    CHECK(phi1(4.0 - 1e-9, x) == 0.0);
    CHECK(phi1(hi + 1e-9, x) == 1.0);
    if (hi > 4.0 + 1e-6) {
      const double mid = 0.5 * (4.0 + hi);
      CHECK(phi1(mid, x) == doctest::Approx(0.5).epsilon(1e-9));
      const double q1 = 4.0 + 0.25 * (hi - 4.0);
      CHECK(phi1(q1, x) == doctest::Approx(0.25).epsilon(1e-9));
    }
  }
  LocationScaleOptions opts0;
  opts0.base = BaseCdf::uniform;
  opts0.support_clip = {{-std::numeric_limits<double>::infinity(), 8.0}};
  const auto phi0 = fit_location_scale(draw.sample, 0, opts0);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto x = draw.sample.row(i);
    const double mu = phi0.mu(x);
    CHECK(mu <= 8.0);
    CHECK(phi0(8.0 + 1e-9, x) == 1.0);
    CHECK(phi0(2.0 * mu - 8.0 - 1e-9, x) == 0.0);
  }
}

TEST_CASE("standard normal base with mu=0 sigma=1 is the normal CDF") {
  LocationScaleCdf m(
      BaseCdf::normal, [](std::span<const double>) { return 0.0; },
      [](std::span<const double>) { return 1.0; });
  std::vector<double> x = {0.3};
  CHECK(m(0.0, x) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m(1.959963985, x) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(m(-1.0, x) == doctest::Approx(normal_cdf(-1.0)).epsilon(1e-12));
}

TEST_CASE("conditional CDF models are monotone with proper limits") {
  const auto draw = draw_dgp(400, 13);
  for (auto base : {BaseCdf::uniform, BaseCdf::normal, BaseCdf::gamma,
                    BaseCdf::exponential}) {
    LocationScaleOptions opts;
    opts.base = base;
    const auto m = fit_location_scale(draw.sample, 1, opts);
    Rng rng(71);
    for (int t = 0; t < 1000; ++t) {
      const auto x = draw.sample.row(rng.below(draw.sample.n()));
      double s1 = rng.uniform(-20, 20);
      double s2 = rng.uniform(-20, 20);
      if (s1 > s2) std::swap(s1, s2);
      CHECK(m(s1, x) <= m(s2, x) + 1e-12);
    }
    const auto x0 = draw.sample.row(0);
    CHECK(m(-1e6, x0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(m(1e6, x0) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("scale equivariance: doubling sigma halves the density scale") {
  auto mu = [](std::span<const double>) { return 1.0; };
  LocationScaleCdf narrow(BaseCdf::normal, mu,
                          [](std::span<const double>) { return 1.0; });
  LocationScaleCdf wide(BaseCdf::normal, mu,
                        [](std::span<const double>) { return 2.0; });
  std::vector<double> x = {0.0};
  const double h = 1e-5;
  const double d_narrow = (narrow(1.0 + h, x) - narrow(1.0 - h, x)) / (2 * h);
  const double d_wide = (wide(1.0 + h, x) - wide(1.0 - h, x)) / (2 * h);
  CHECK(d_wide == doctest::Approx(0.5 * d_narrow).epsilon(1e-6));
}

TEST_CASE("oracle nuisances evaluate the printed formulas") {
  const DgpParams params;
  const auto [pi1, phi1] = oracle_nuisance(params, 1);
  std::vector<double> zero = {0.0, 0.0, 0.0, 0.0};
  CHECK(pi1(zero) == doctest::Approx(expit(-1.5)).epsilon(1e-12));
  CHECK(expit(-1.5) == doctest::Approx(0.18242552).epsilon(1e-6));
  std::vector<double> x = {0.5, 0.25, 0.75, 0.5};  // sum = 2
  // arm 1: Y | x uniform on [4, 4 + 2*sum] = [4, 8]
  CHECK(phi1(4.0, x) == doctest::Approx(0.0));
  CHECK(phi1(6.0, x) == doctest::Approx(0.5));
  CHECK(phi1(8.0, x) == doctest::Approx(1.0));
  const auto [pi0, phi0] = oracle_nuisance(params, 0);
  CHECK(pi0(zero) == doctest::Approx(1.0 - expit(-1.5)).epsilon(1e-12));
  // arm 0: uniform on [8 - 2*sum, 8] = [4, 8]
  CHECK(phi0(6.0, x) == doctest::Approx(0.5));
}

TEST_CASE("degenerate outcome regression is rejected") {
  std::vector<double> x = {0.1, 0.9, 0.4, 0.6};
  const ObservedSample s(x, 1, {1, 1, 0, 0}, {2.0, 2.0, 1.0, 3.0});
  LocationScaleOptions opts;
  CHECK_THROWS_WITH_AS(fit_location_scale(s, 1, opts),
                       doctest::Contains("degenerate"), std::runtime_error);
}
