#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfdens/numeric.hpp"
#include "cfdens/onestep.hpp"
#include "cfdens/rng.hpp"
#include "cfdens/sim.hpp"

using namespace cfdens;

namespace {

NuisancePair constant_nuisances(double pi, std::function<double(double)> phi) {
  return NuisancePair{
      PropensityModel([pi](std::span<const double>) { return pi; }, 0.01),
      ConditionalCdfModel(
          [phi](double s, std::span<const double>) { return phi(s); })};
}

IsoGrid grid_of(std::vector<double> pts) { return IsoGrid(std::move(pts)); }

}  // namespace

TEST_CASE("one-step algebra: treated row with known propensity") {
  // all phi terms cancel when pi == 1 and every row is treated;
  // F-hat(s) reduces to the empirical indicator mean
  const ObservedSample s({0.0, 0.0}, 1, {1, 1}, {1.0, 1.0});
  const auto nuis = constant_nuisances(0.99, [](double v) {
    return std::clamp(0.5 + 0.1 * v, 0.0, 1.0);
  });
  InfluenceEvaluator ev(1, nuis);
  // pi clipped to 0.99: D = (ind - phi)/0.99 + phi
  const double d_lo = ev.evaluate(0.0, s, 0);
  const double phi0 = std::clamp(0.5, 0.0, 1.0);
  CHECK(d_lo == doctest::Approx((0.0 - phi0) / 0.99 + phi0));
  const double d_hi = ev.evaluate(1.5, s, 0);
  const double phi1 = 0.5 + 0.15;
  CHECK(d_hi == doctest::Approx((1.0 - phi1) / 0.99 + phi1));
}

TEST_CASE("one-step algebra: untreated rows contribute phi only") {
  const ObservedSample s({0.0, 0.0}, 1, {0, 0}, {7.0, 9.0});
  const auto nuis = constant_nuisances(0.5, [](double v) {
    return std::clamp(0.25 * v, 0.0, 1.0);
  });
  InfluenceEvaluator ev(1, nuis);
  for (double v : {0.5, 1.0, 3.0})
    CHECK(ev.evaluate(v, s, 0) == doctest::Approx(std::clamp(0.25 * v, 0.0, 1.0)));
}

TEST_CASE("one-step hand case: n=2, one treated, pi = 1/2") {
  // F-hat(s) = 0.5*[2*(I(Y1<=s) - G(s)) + G(s)] + 0.5*G(s) = I(Y1 <= s)
  auto g = [](double v) { return std::clamp(0.2 + 0.1 * v, 0.0, 1.0); };
  const ObservedSample s({0.0, 0.0}, 1, {1, 0}, {2.0, 100.0});
  const auto nuis = constant_nuisances(0.5, g);
  InfluenceEvaluator ev(1, nuis);
  const auto grid = grid_of({0.0, 1.5, 3.0, 4.5});
  const auto raw = onestep_cdf(s, ev, grid);
  CHECK(raw.state == CdfState::raw);
  CHECK(raw.values[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(raw.values[1] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(raw.values[2] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(raw.values[3] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("raw one-step values stay within the influence bound") {
  const auto draw = draw_dgp(400, 17);
  const auto nuis = case_nuisances(draw.sample, 1, 1);
  InfluenceEvaluator ev(1, nuis);
  const auto grid = default_grid(draw.sample, 1);
  const auto raw = onestep_cdf(draw.sample, ev, grid);
  const double eps = 0.01;
  for (double v : raw.values) {
    CHECK(v >= -1.0 / eps);
    CHECK(v <= 1.0 + 1.0 / eps);
  }
}

TEST_CASE("estimate_density composes the full pipeline") {
  const auto draw = draw_dgp(600, 19);
  const auto nuis = case_nuisances(draw.sample, 1, 1);
  const auto est = estimate_density(draw.sample, 1, nuis);
  double y_min = 1e300, y_max = -1e300;
  for (std::size_t i = 0; i < draw.sample.n(); ++i)
    if (draw.sample.treatment(i) == 1) {
      y_min = std::min(y_min, draw.sample.outcome(i));
      y_max = std::max(y_max, draw.sample.outcome(i));
    }
  const double delta = est.corrected.grid.delta();
  CHECK(est.fit.support_lower() >= y_min - delta - 1e-9);
  CHECK(est.fit.support_upper() <= y_max + 1e-9);
  const double mass = integrate_adaptive(
      [&](double s) { return est.fit.density(s); }, est.fit.support_lower(),
      est.fit.support_upper(), 1e-8);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(est.corrected.state == CdfState::isotonized);
}

TEST_CASE("a grid must have at least 4 points") {
  CHECK_THROWS_AS(grid_of({0.0, 1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("randomized-trial pipeline is close to the naive MLE") {
  // with a known constant propensity and the arm's marginal ECDF as the
  // conditional CDF, the adjusted estimate should track the naive one
  Rng rng(73);
  const std::size_t n = 800;
  std::vector<double> x(n), y(n);
  std::vector<int> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform();
    a[i] = rng.bernoulli(0.5) ? 1 : 0;
    y[i] = rng.normal() + 3.0 * rng.uniform();
  }
  const ObservedSample sample(x, 1, a, y);
  std::vector<double> arm_y;
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] == 1) arm_y.push_back(y[i]);
  std::sort(arm_y.begin(), arm_y.end());
  auto ecdf = [arm_y](double s) {
    const auto it = std::upper_bound(arm_y.begin(), arm_y.end(), s);
    return static_cast<double>(it - arm_y.begin()) /
           static_cast<double>(arm_y.size());
  };
  const auto nuis = constant_nuisances(0.5, ecdf);
  const auto est = estimate_density(sample, 1, nuis);
  const auto naive = naive_logconcave(sample, 1);
  // d1 between the two fitted CDFs
  const double lo = std::min(est.fit.support_lower(), naive.support_lower());
  const double hi = std::max(est.fit.support_upper(), naive.support_upper());
  double d1 = 0.0;
  const int cells = 4000;
  for (int c = 0; c < cells; ++c) {
    const double t = lo + (hi - lo) * (c + 0.5) / cells;
    d1 += std::abs(est.fit.cdf(t) - naive.cdf(t));
  }
  d1 *= (hi - lo) / cells;
  CHECK(d1 < 2.0 * est.corrected.grid.delta());
}

TEST_CASE("fold assignment: sizes within one, deterministic, errors") {
  const auto f = FoldAssignment::random(103, 5, 99);
  CHECK(f.k0 == 5);
  std::vector<std::size_t> sizes(5, 0);
  for (std::size_t k : f.fold_of_row) ++sizes[k];
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 1);
  const auto f2 = FoldAssignment::random(103, 5, 99);
  CHECK(f.fold_of_row == f2.fold_of_row);
  CHECK_THROWS_AS(FoldAssignment::random(10, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(FoldAssignment::random(3, 4, 1), std::invalid_argument);
}

TEST_CASE("cross-fitting with a fold-independent factory is bitwise pooled") {
  const auto draw = draw_dgp(150, 23);
  const auto oracle = oracle_nuisance(DgpParams{}, 1);
  auto factory = [&oracle](const ObservedSample&) { return oracle; };
  const auto grid = default_grid(draw.sample, 1);

  InfluenceEvaluator ev(1, oracle);
  const auto pooled = onestep_cdf(draw.sample, ev, grid);

  // leave-one-out style: many folds
  const auto loo = FoldAssignment::random(draw.sample.n(), 50, 7);
  const auto cf_loo = crossfit_cdf(draw.sample, 1, factory, loo, grid);
  CHECK(cf_loo.values == pooled.values);

  const auto two = FoldAssignment::random(draw.sample.n(), 2, 7);
  const auto cf2 = crossfit_cdf(draw.sample, 1, factory, two, grid);
  CHECK(cf2.values == pooled.values);
}

TEST_CASE("cross-fitting errors when a training complement loses an arm") {
  // 4 rows, 2 folds; fold 0 holds both treated rows -> complement has none
  const ObservedSample s({0., 0., 0., 0.}, 1, {1, 1, 0, 0}, {1., 2., 3., 4.});
  FoldAssignment bad(2, {1, 1, 0, 0});
  auto factory = [](const ObservedSample& train) {
    return case_nuisances(train, 1, 1);
  };
  const auto grid = grid_of({0.0, 2.0, 4.0, 6.0});
  CHECK_THROWS_WITH_AS(crossfit_cdf(s, 1, factory, bad, grid),
                       doctest::Contains("empty treatment arm"),
                       std::runtime_error);
}

TEST_CASE("cross-fitted estimate stays near the pooled one on DGP data") {
  const auto draw = draw_dgp(500, 29);
  auto factory = [](const ObservedSample& train) {
    return case_nuisances(train, 1, 1);
  };
  const auto folds = FoldAssignment::random(draw.sample.n(), 5, 3);
  const auto split = estimate_density_crossfit(draw.sample, 1, factory, folds);
  const auto pooled =
      estimate_density(draw.sample, 1, case_nuisances(draw.sample, 1, 1));
  double d1 = 0.0;
  const double lo = std::min(split.fit.support_lower(), pooled.fit.support_lower());
  const double hi = std::max(split.fit.support_upper(), pooled.fit.support_upper());
  const int cells = 2000;
  for (int c = 0; c < cells; ++c) {
    const double t = lo + (hi - lo) * (c + 0.5) / cells;
    d1 += std::abs(split.fit.cdf(t) - pooled.fit.cdf(t));
  }
  d1 *= (hi - lo) / cells;
  CHECK(d1 < 0.2);
}

TEST_CASE("external predictions roundtrip and drive the evaluator") {
  const auto draw = draw_dgp(60, 31);
  const auto grid = default_grid(draw.sample, 1);
  const auto oracle = oracle_nuisance(DgpParams{}, 1);
  std::vector<double> pi(draw.sample.n());
  std::vector<double> phi(draw.sample.n() * grid.size());
  for (std::size_t i = 0; i < draw.sample.n(); ++i) {
    pi[i] = oracle.propensity(draw.sample.row(i));
    for (std::size_t j = 0; j < grid.size(); ++j)
      phi[i * grid.size() + j] =
          oracle.cond_cdf(grid.points()[j], draw.sample.row(i));
  }
  const ExternalPredictions preds(grid, pi, phi);
  write_predictions_csv("/tmp/cfdens_test_preds.csv", preds);
  const auto loaded = load_predictions_csv("/tmp/cfdens_test_preds.csv");
  CHECK(loaded.pi == preds.pi);
  CHECK(loaded.phi == preds.phi);

  InfluenceEvaluator from_file(1, loaded);
  InfluenceEvaluator from_model(1, oracle);
  const auto a = onestep_cdf(draw.sample, from_file, grid);
  const auto b = onestep_cdf(draw.sample, from_model, grid);
  for (std::size_t j = 0; j < grid.size(); ++j)
    CHECK(a.values[j] == doctest::Approx(b.values[j]).epsilon(1e-12));
}

TEST_CASE("propensity below the floor is a contract breach") {
  const ObservedSample s({0.0, 0.0}, 1, {1, 0}, {1.0, 2.0});
  NuisancePair bad{
      PropensityModel([](std::span<const double>) { return 1e-9; }, 1e-10),
      ConditionalCdfModel([](double, std::span<const double>) { return 0.5; })};
  InfluenceEvaluator ev(1, bad, 1e-6);
  CHECK_THROWS_WITH_AS(ev.evaluate(1.0, s, 0), doctest::Contains("floor"),
                       std::runtime_error);
}
