#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfdens/isotonic.hpp"
#include "cfdens/numeric.hpp"
#include "cfdens/rng.hpp"
#include "oracles.hpp"

using namespace cfdens;

namespace {

IsoGrid unit_grid(std::size_t m) {
  std::vector<double> pts(m);
  for (std::size_t j = 0; j < m; ++j) pts[j] = static_cast<double>(j);
  return IsoGrid(std::move(pts));
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("clamp01 projects elementwise and keeps order") {
  SteppedCdf raw(unit_grid(4), {-0.1, 0.5, 1.2, 0.9}, CdfState::raw);
  const auto c = clamp01(raw);
  CHECK(c.values == std::vector<double>{0.0, 0.5, 1.0, 0.9});
  SteppedCdf inside(unit_grid(4), {0.2, 0.4, 0.3, 0.6}, CdfState::raw);
  CHECK(clamp01(inside).values == inside.values);
  // clamp does not sort
  SteppedCdf rev(unit_grid(4), {1.0, 0.0, 1.0, 0.0}, CdfState::raw);
  CHECK(clamp01(rev).values == std::vector<double>{1.0, 0.0, 1.0, 0.0});
  CHECK_THROWS_AS(clamp01(c), std::invalid_argument);
}

TEST_CASE("pava basic examples") {
  CHECK(pava(std::vector<double>{0.1, 0.2, 0.3}) ==
        std::vector<double>{0.1, 0.2, 0.3});
  const auto two = pava(std::vector<double>{0.3, 0.1});
  CHECK(two[0] == doctest::Approx(0.2));
  CHECK(two[1] == doctest::Approx(0.2));
  const auto four = pava(std::vector<double>{0.2, 0.5, 0.3, 0.4});
  CHECK(four[0] == doctest::Approx(0.2));
  CHECK(four[1] == doctest::Approx(0.4));
  CHECK(four[2] == doctest::Approx(0.4));
  CHECK(four[3] == doctest::Approx(0.4));
}

TEST_CASE("pava is idempotent and mean preserving") {
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-2, 2);
    const auto once = pava(v);
    CHECK(pava(once) == once);
    const double m_in = pairwise_mean(v);
    const double m_out = pairwise_mean(once);
    CHECK(m_out == doctest::Approx(m_in).epsilon(1e-12));
  }
}

TEST_CASE("pava matches the dense QP projection oracle") {
  Rng rng(23);
  for (int t = 0; t < 120; ++t) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    const auto mine = pava(v);
    const auto ref = oracles::cone_projection(v, oracles::monotone_constraints(n));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(mine[i] == doctest::Approx(ref[i]).epsilon(1e-8));
  }
}

TEST_CASE("pava output beats random monotone candidates") {
  Rng rng(29);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    const auto proj = pava(v);
    const double best = sq_dist(v, proj);
    for (int c = 0; c < 100; ++c) {
      std::vector<double> cand(n);
      double run = rng.uniform(-1.5, 0.5);
      for (double& x : cand) {
        run += rng.uniform(0, 0.5);
        x = run;
      }
      CHECK(best <= sq_dist(v, cand) + 1e-12);
    }
  }
}

TEST_CASE("Marshall-type sup bound against monotone comparators") {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<double> v(n), m(n);
    for (double& x : v) x = rng.uniform(-1, 1);
    double run = rng.uniform(-1, 0);
    for (double& x : m) {
      run += rng.uniform(0, 0.4);
      x = run;
    }
    const auto iso = pava(v);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lhs = std::max(lhs, std::abs(iso[i] - m[i]));
      rhs = std::max(rhs, std::abs(v[i] - m[i]));
    }
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("isotonize pins endpoints and isotonizes the interior") {
  SteppedCdf c(unit_grid(5), {0.7, 0.2, 0.5, 0.3, 0.2}, CdfState::clamped);
  const auto iso = isotonize(c);
  CHECK(iso.values[0] == 0.0);
  CHECK(iso.values[4] == 1.0);
  CHECK(iso.values[1] == doctest::Approx(0.2));
  CHECK(iso.values[2] == doctest::Approx(0.4));
  CHECK(iso.values[3] == doctest::Approx(0.4));

  SteppedCdf mono(unit_grid(5), {0.9, 0.1, 0.2, 0.3, 0.0}, CdfState::clamped);
  const auto iso2 = isotonize(mono);
  CHECK(iso2.values == std::vector<double>{0.0, 0.1, 0.2, 0.3, 1.0});

  SteppedCdf mass(unit_grid(5), {0.5, 1.0, 1.0, 1.0, 0.2}, CdfState::clamped);
  const auto iso3 = isotonize(mass);
  CHECK(iso3.values == std::vector<double>{0.0, 1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("eval_step follows the step rule") {
  SteppedCdf iso(unit_grid(5), {0.0, 0.2, 0.4, 0.9, 1.0}, CdfState::isotonized);
  CHECK(eval_step(iso, 0.5) == 0.0);   // below s_2
  CHECK(eval_step(iso, -10) == 0.0);
  CHECK(eval_step(iso, 4.0) == 1.0);   // at the upper bound
  CHECK(eval_step(iso, 10.0) == 1.0);
  CHECK(eval_step(iso, 2.5) == 0.4);   // largest grid point below
  CHECK(eval_step(iso, 1.0) == 0.2);   // right continuous at nodes
}

TEST_CASE("eval_step is monotone and right-continuous on random queries") {
  Rng rng(37);
  SteppedCdf iso(unit_grid(8), {0.0, 0.1, 0.15, 0.4, 0.4, 0.8, 0.93, 1.0},
                 CdfState::isotonized);
  double prev_q = -3.0, prev_v = 0.0;
  std::vector<double> qs(300);
  for (double& q : qs) q = rng.uniform(-2, 9);
  std::sort(qs.begin(), qs.end());
  for (double q : qs) {
    const double v = eval_step(iso, q);
    CHECK(v >= prev_v);
    CHECK(eval_step(iso, q + 1e-12) == doctest::Approx(v).epsilon(1e-13));
    prev_q = q;
    prev_v = v;
  }
}

TEST_CASE("wasserstein1 on identical and translated unit steps") {
  SteppedCdf f(unit_grid(4), {0.0, 1.0, 1.0, 1.0}, CdfState::isotonized);
  // identical CDFs
  auto g_same = [&](double s) { return eval_step(f, s); };
  CHECK(wasserstein1(f, g_same, -1.0, 4.0) == doctest::Approx(0.0).epsilon(1e-9));
  // unit translation: point mass at 1 vs point mass at 2
  auto g_shift = [](double s) { return s >= 2.0 ? 1.0 : 0.0; };
  CHECK(wasserstein1(f, g_shift, -1.0, 4.0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("wasserstein1 against a fine Riemann oracle") {
  std::vector<double> pts(11), vals(11);
  for (std::size_t j = 0; j < 11; ++j) {
    pts[j] = static_cast<double>(j) / 10.0;
    vals[j] = std::min(1.0, static_cast<double>(j) / 9.0);
  }
  vals[0] = 0.0;
  SteppedCdf f(IsoGrid(pts), vals, CdfState::isotonized);
  auto g = [](double s) { return std::clamp(s, 0.0, 1.0); };  // uniform CDF
  const double mine = wasserstein1(f, g, -0.2, 1.2);
  const double ref = oracles::riemann_abs_diff(
      [&](double s) { return eval_step(f, s); }, g, -0.2, 1.2);
  CHECK(mine == doctest::Approx(ref).epsilon(2e-5));
}
