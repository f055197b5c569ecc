#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfdens/convexreg.hpp"
#include "cfdens/rng.hpp"
#include "oracles.hpp"

using namespace cfdens;

TEST_CASE("already convex data is a fixed point") {
  std::vector<double> x(9), y(9);
  for (int i = 0; i < 9; ++i) {
    x[i] = i * 0.5;
    y[i] = x[i] * x[i];
  }
  const auto fit = convex_lse(x, y);
  for (int i = 0; i < 9; ++i)
    CHECK(fit.fitted()[i] == doctest::Approx(y[i]).epsilon(1e-9));
}

TEST_CASE("single violated constraint pools to the mean") {
  const std::vector<double> x = {0, 1, 2};
  const std::vector<double> y = {0, 1, 0};
  const auto fit = convex_lse(x, y);
  for (int i = 0; i < 3; ++i)
    CHECK(fit.fitted()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  const auto ref = oracles::cone_projection(y, oracles::convex_constraints(x));
  for (int i = 0; i < 3; ++i)
    CHECK(fit.fitted()[i] == doctest::Approx(ref[i]).epsilon(1e-7));
}

TEST_CASE("affine data is a fixed point with endpoint knots only") {
  const std::vector<double> x = {0, 0.5, 1.5, 2, 3};
  std::vector<double> y(5);
  for (int i = 0; i < 5; ++i) y[i] = 2.0 - 0.7 * x[i];
  const auto fit = convex_lse(x, y);
  for (int i = 0; i < 5; ++i)
    CHECK(fit.fitted()[i] == doctest::Approx(y[i]).epsilon(1e-9));
  CHECK(fit.knots() == std::vector<double>{0.0, 3.0});
  const auto [lo, hi] = convex_knots_around(fit, 1.0);
  CHECK(lo == 0.0);
  CHECK(hi == 3.0);
}

TEST_CASE("knots around a single kink") {
  std::vector<double> x(11), y(11);
  for (int i = 0; i < 11; ++i) {
    x[i] = i * 0.1;
    y[i] = std::abs(x[i] - 0.5);
  }
  const auto fit = convex_lse(x, y);
  const auto [lo, hi] = convex_knots_around(fit, 0.5);
  CHECK(lo == doctest::Approx(0.4));
  CHECK(hi == doctest::Approx(0.6));
  CHECK_THROWS_AS(convex_knots_around(fit, 1.5), std::domain_error);
}

TEST_CASE("random problems match the dense QP oracle") {
  Rng rng(41);
  for (int t = 0; t < 80; ++t) {
    const std::size_t n = 3 + rng.below(8);
    std::vector<double> x(n), y(n);
    double run = rng.uniform(-2, 0);
    for (std::size_t i = 0; i < n; ++i) {
      run += 0.1 + rng.uniform();
      x[i] = run;
      y[i] = rng.uniform(-1, 1);
    }
    const auto fit = convex_lse(x, y);
    const auto ref = oracles::cone_projection(y, oracles::convex_constraints(x));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(fit.fitted()[i] == doctest::Approx(ref[i]).epsilon(1e-7));
  }
}

TEST_CASE("projection beats random convex candidates; residual orthogonality") {
  Rng rng(43);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + rng.below(7);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i);
      y[i] = rng.uniform(-1, 1);
    }
    const auto fit = convex_lse(x, y);
    double sse = 0.0, ortho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.fitted()[i];
      sse += r * r;
      ortho += r * fit.fitted()[i];
    }
    CHECK(std::abs(ortho) < 1e-7);
    for (int c = 0; c < 200; ++c) {
      // random convex candidate: increasing slopes
      std::vector<double> cand(n);
      double v = rng.uniform(-1, 1), slope = rng.uniform(-2, 0);
      for (std::size_t i = 0; i < n; ++i) {
        cand[i] = v;
        slope += rng.uniform(0, 0.7);
        v += slope;
      }
      double alt = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        alt += (y[i] - cand[i]) * (y[i] - cand[i]);
      CHECK(sse <= alt + 1e-10);
    }
  }
}

TEST_CASE("idempotence: fitting the fit returns itself") {
  Rng rng(47);
  std::vector<double> x(30), y(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = i / 29.0;
    y[i] = 3.0 * (x[i] - 0.4) * (x[i] - 0.4) + rng.normal();
  }
  const auto fit = convex_lse(x, y);
  const auto refit = convex_lse(x, fit.fitted());
  for (int i = 0; i < 30; ++i)
    CHECK(refit.fitted()[i] == doctest::Approx(fit.fitted()[i]).epsilon(1e-9));
}

TEST_CASE("exact reflection equivariance") {
  // reflecting the design and reversing the data mirrors the fit exactly
  Rng rng(53);
  const std::size_t n = 41;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    const double c = x[i] - 0.5;
    y[i] = 12.0 * c * c + rng.normal();
  }
  std::vector<double> xr(n), yr(n);
  for (std::size_t i = 0; i < n; ++i) {
    xr[i] = 1.0 - x[n - 1 - i];
    yr[i] = y[n - 1 - i];
  }
  const auto fit = convex_lse(x, y);
  const auto mirrored = convex_lse(xr, yr);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(mirrored.fitted()[i] ==
          doctest::Approx(fit.fitted()[n - 1 - i]).epsilon(1e-9));
}

TEST_CASE("knots agree with a brute-force slope scan") {
  Rng rng(59);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 5 + rng.below(6);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i);
      y[i] = rng.uniform(-1, 1);
    }
    const auto fit = convex_lse(x, y);
    std::vector<double> expect = {x.front()};
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double sl = (fit.fitted()[i] - fit.fitted()[i - 1]) / (x[i] - x[i - 1]);
      const double sr = (fit.fitted()[i + 1] - fit.fitted()[i]) / (x[i + 1] - x[i]);
      if (sr - sl > 1e-8) expect.push_back(x[i]);
    }
    expect.push_back(x.back());
    CHECK(fit.knots() == expect);
  }
}
