#include "cfdens/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cfdens/numeric.hpp"
#include "cfdens/rng.hpp"

namespace cfdens {

namespace {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(master) ^ splitmix64(a * 0x9e3779b97f4a7c15ULL + b));
}

}  // namespace

DgpDraw draw_dgp(std::size_t n, std::uint64_t seed, const DgpParams& params) {
  if (n < 1) throw std::invalid_argument("draw_dgp: n must be positive");
  Rng rng(seed);
  const std::size_t d = params.logit_slopes.size();
  std::vector<double> x(n * d);
  std::vector<int> a(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = params.logit_intercept;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = rng.uniform();
      x[i * d + j] = xj;
      v += params.logit_slopes[j] * xj;
      s += xj;
    }
    a[i] = rng.bernoulli(expit(v)) ? 1 : 0;
    const auto [lo, hi] = dgp_outcome_interval(a[i], s);
    y[i] = rng.uniform(lo, hi);
  }
  return DgpDraw{ObservedSample(std::move(x), d, std::move(a), std::move(y)), seed};
}

double ir4(double x) {
  if (x < 0.0 || x >= 4.0) return 0.0;
  if (x < 1.0) return x * x * x / 6.0;
  if (x < 2.0) return (((-3.0 * x + 12.0) * x - 12.0) * x + 4.0) / 6.0;
  if (x < 3.0) return (((3.0 * x - 24.0) * x + 60.0) * x - 44.0) / 6.0;
  const double u = 4.0 - x;
  return u * u * u / 6.0;
}

namespace {

// ir4(x) / (2x), continuous at 0.
double ir4_over_2x(double x) {
  if (x <= 0.0 || x >= 4.0) return 0.0;
  if (x < 1e-8) return x * x / 12.0;
  return ir4(x) / (2.0 * x);
}

// integral of ir4(x)/(2x) over [a, 4], split at the cubic's branch points
double tail_integral(double a) {
  a = std::clamp(a, 0.0, 4.0);
  double total = 0.0;
  for (int b = 0; b < 4; ++b) {
    const double lo = std::max(a, static_cast<double>(b));
    const double hi = static_cast<double>(b + 1);
    if (lo >= hi) continue;
    total += integrate_gl(ir4_over_2x, lo, hi, 32, 1);
  }
  return total;
}

}  // namespace

TrueDensity::TrueDensity(int arm) : arm_(arm) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("TrueDensity: arm must be 0 or 1");
  lower_ = arm == 1 ? 4.0 : 0.0;
  upper_ = arm == 1 ? 12.0 : 8.0;
  const std::size_t cells = 4096;
  cdf_grid_.resize(cells + 1);
  cdf_values_.resize(cells + 1);
  const double step = (upper_ - lower_) / static_cast<double>(cells);
  cdf_grid_[0] = lower_;
  cdf_values_[0] = 0.0;
  for (std::size_t i = 1; i <= cells; ++i) {
    cdf_grid_[i] = lower_ + static_cast<double>(i) * step;
    cdf_values_[i] =
        cdf_values_[i - 1] +
        integrate_gl([this](double y) { return (*this)(y); }, cdf_grid_[i - 1],
                     cdf_grid_[i], 8, 1);
  }
}

double TrueDensity::operator()(double y) const {
  if (y <= lower_ || y >= upper_) return 0.0;
  const double a = arm_ == 1 ? (y - 4.0) / 2.0 : (8.0 - y) / 2.0;
  return tail_integral(a);
}

double TrueDensity::derivative(double y) const {
  if (y <= lower_ || y >= upper_) return 0.0;
  const double u = arm_ == 1 ? (y - 4.0) / 2.0 : (8.0 - y) / 2.0;
  const double h = ir4_over_2x(u) / 2.0;
  return arm_ == 1 ? -h : h;
}

double TrueDensity::cdf(double y) const {
  if (y <= lower_) return 0.0;
  if (y >= upper_) return cdf_values_.back();
  const double step = cdf_grid_[1] - cdf_grid_[0];
  auto idx = static_cast<std::size_t>((y - lower_) / step);
  if (idx >= cdf_grid_.size() - 1) idx = cdf_grid_.size() - 2;
  return cdf_values_[idx] +
         integrate_gl([this](double t) { return (*this)(t); }, cdf_grid_[idx], y, 8, 1);
}

NuisancePair case_nuisances(const ObservedSample& sample, int arm, int case_id) {
  if (case_id < 1 || case_id > 3)
    throw std::invalid_argument("case_nuisances: case must be 1, 2 or 3");
  // mis-specified propensity omits (X1, X3); mis-specified CDF omits (X1, X4)
  std::vector<std::size_t> pi_cols;
  if (case_id == 3) pi_cols = {1, 3};
  auto logistic = fit_logistic_propensity(sample, arm, pi_cols);

  LocationScaleOptions opts;
  opts.base = BaseCdf::uniform;
  if (case_id == 2) opts.feature_columns = {1, 2};
  if (arm == 1)
    opts.support_clip = {{4.0, std::numeric_limits<double>::infinity()}};
  else
    opts.support_clip = {{-std::numeric_limits<double>::infinity(), 8.0}};
  auto ls = fit_location_scale(sample, arm, opts);
  return NuisancePair{std::move(logistic.model), ls.as_model()};
}

LogConcaveFit naive_logconcave(const ObservedSample& sample, int arm) {
  std::vector<double> ys;
  for (std::size_t i = 0; i < sample.n(); ++i)
    if (sample.treatment(i) == arm) ys.push_back(sample.outcome(i));
  if (ys.size() < 2)
    throw std::runtime_error("naive_logconcave: fewer than 2 arm outcomes");
  std::sort(ys.begin(), ys.end());
  // merge near-coincident observations; difference quotients over gaps at
  // rounding scale are meaningless
  const double merge_gap = 1e-8 * (ys.back() - ys.front());
  std::vector<double> locs, wts;
  const double unit = 1.0 / static_cast<double>(ys.size());
  for (std::size_t i = 0; i < ys.size();) {
    std::size_t j = i;
    while (j < ys.size() && ys[j] - ys[i] <= merge_gap) ++j;
    locs.push_back(ys[i]);
    wts.push_back(unit * static_cast<double>(j - i));
    i = j;
  }
  if (locs.size() < 2)
    throw std::runtime_error("naive_logconcave: degenerate arm outcomes");
  return logconcave_mle(WeightedAtoms(std::move(locs), std::move(wts)));
}

double l1_distance(const LogConcaveFit& fit, const TrueDensity& truth) {
  std::vector<double> cuts;
  cuts.push_back(std::min(fit.support_lower(), truth.support_lower()));
  const double upper = std::max(fit.support_upper(), truth.support_upper());
  for (double t : fit.atoms())
    if (t > cuts.front() && t < upper) cuts.push_back(t);
  for (double k = truth.support_lower(); k <= truth.support_upper(); k += 2.0)
    if (k > cuts.front() && k < upper) cuts.push_back(k);
  cuts.push_back(upper);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i + 1] > cuts[i])) continue;
    total += integrate_gl(
        [&](double y) { return std::abs(fit.density(y) - truth(y)); }, cuts[i],
        cuts[i + 1], 8, 1);
  }
  return total;
}

namespace {

NuisanceFactory case_factory(int arm, int case_id) {
  return [arm, case_id](const ObservedSample& train) {
    return case_nuisances(train, arm, case_id);
  };
}

struct RepOutcome {
  bool ok = false;
  double l1 = 0.0;
  double l1_naive = 0.0;
  double d1 = 0.0;
};

}  // namespace

std::vector<L1Row> run_l1_experiment(const L1Config& config) {
  if (config.arm != 0 && config.arm != 1)
    throw std::invalid_argument("run_l1_experiment: arm must be 0 or 1");
  const TrueDensity truth(config.arm);
  auto truth_cdf = [&truth](double s) { return truth.cdf(s); };

  std::vector<L1Row> rows;
  for (const std::size_t n : config.n_values) {
    std::vector<RepOutcome> reps(config.replications);
    parallel_for(0, config.replications, config.threads, [&](std::size_t r) {
      RepOutcome& out = reps[r];
      try {
        const auto draw = draw_dgp(n, derive_seed(config.seed, n, r));
        DensityEstimate est = [&]() {
          if (config.crossfit_folds >= 2) {
            const auto folds = FoldAssignment::random(
                n, config.crossfit_folds, derive_seed(config.seed, n, r + 1000003));
            return estimate_density_crossfit(draw.sample, config.arm,
                                             case_factory(config.arm, config.nuisance_case),
                                             folds);
          }
          const auto nuis =
              case_nuisances(draw.sample, config.arm, config.nuisance_case);
          return estimate_density(draw.sample, config.arm, nuis);
        }();
        out.l1 = l1_distance(est.fit, truth);
        out.l1_naive = l1_distance(naive_logconcave(draw.sample, config.arm), truth);
        const double lo = std::min(est.corrected.grid.lower(), truth.support_lower());
        const double hi = std::max(est.corrected.grid.upper(), truth.support_upper());
        out.d1 = wasserstein1(est.corrected, truth_cdf, lo, hi);
        out.ok = true;
      } catch (const std::exception&) {
        out.ok = false;
      }
    });
    L1Row row;
    row.n = n;
    std::vector<double> l1s, naives, d1s;
    for (const auto& rep : reps) {
      if (!rep.ok) {
        ++row.failures;
        continue;
      }
      l1s.push_back(rep.l1);
      naives.push_back(rep.l1_naive);
      d1s.push_back(rep.d1);
    }
    row.replications_done = l1s.size();
    if (!l1s.empty()) {
      row.mean_l1 = pairwise_mean(l1s);
      row.mean_l1_naive = pairwise_mean(naives);
      row.mean_d1_corrected = pairwise_mean(d1s);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> default_contrast_points() {
  std::vector<double> pts(41);
  for (std::size_t i = 0; i < pts.size(); ++i)
    pts[i] = 4.1 + 0.095 * static_cast<double>(i);
  return pts;
}

std::vector<CoveragePoint> run_coverage_experiment(const CoverageConfig& config) {
  if (config.pivots == nullptr)
    throw std::invalid_argument("run_coverage_experiment: pivot table required");
  const bool contrast =
      config.kind == CiKind::difference || config.kind == CiKind::log_ratio;
  std::vector<double> points = config.points;
  if (points.empty())
    points = contrast ? default_contrast_points()
                      : std::vector<double>{5.5, 6.0, 6.5, 7.0};

  const TrueDensity truth1(1);
  const TrueDensity truth0(0);
  const TrueDensity& truth_arm = config.arm == 1 ? truth1 : truth0;

  struct RepRecord {
    bool failed = false;
    std::vector<double> width;    // NaN when undefined at the point
    std::vector<char> covered;
  };
  std::vector<RepRecord> reps(config.replications);

  parallel_for(0, config.replications, config.threads, [&](std::size_t r) {
    RepRecord& rec = reps[r];
    rec.width.assign(points.size(), std::numeric_limits<double>::quiet_NaN());
    rec.covered.assign(points.size(), 0);
    try {
      const std::size_t n = config.n;
      const auto draw = draw_dgp(n, derive_seed(config.seed, n, r));
      const bool split = config.crossfit_folds >= 2;
      std::optional<FoldAssignment> folds;
      if (split)
        folds = FoldAssignment::random(n, config.crossfit_folds,
                                       derive_seed(config.seed, n, r + 1000003));

      auto estimate_arm = [&](int arm) {
        if (split)
          return estimate_density_crossfit(
              draw.sample, arm, case_factory(arm, config.nuisance_case), *folds);
        return estimate_density(draw.sample, arm,
                                case_nuisances(draw.sample, arm, config.nuisance_case));
      };
      auto chi_at = [&](int arm, double s0) {
        if (split)
          return crossfit_chi(draw.sample, arm,
                              case_factory(arm, config.nuisance_case), *folds, s0,
                              config.bandwidth);
        const InfluenceEvaluator ev(
            arm, case_nuisances(draw.sample, arm, config.nuisance_case));
        return estimate_chi(draw.sample, ev, s0, config.bandwidth);
      };

      if (!contrast) {
        const auto est = estimate_arm(config.arm);
        for (std::size_t p = 0; p < points.size(); ++p) {
          const double s0 = points[p];
          try {
            const auto chi = chi_at(config.arm, s0);
            const auto ci = pointwise_ci(est.fit, chi, *config.pivots, s0,
                                         config.alpha, config.kind, n);
            const double target = config.kind == CiKind::density
                                      ? truth_arm(s0)
                                      : truth_arm.derivative(s0);
            rec.width[p] = 2.0 * ci.half_width;
            rec.covered[p] = (target >= ci.lower() && target <= ci.upper()) ? 1 : 0;
          } catch (const std::exception&) {
            // undefined at this point (outside support etc.); stays NaN
          }
        }
      } else {
        const auto est1 = estimate_arm(1);
        const auto est0 = estimate_arm(0);
        for (std::size_t p = 0; p < points.size(); ++p) {
          const double s0 = points[p];
          try {
            const auto chi1 = chi_at(1, s0);
            const auto chi0 = chi_at(0, s0);
            const auto ci =
                config.kind == CiKind::difference
                    ? difference_ci(est1.fit, est0.fit, chi1, chi0,
                                    *config.pivots, s0, config.alpha, n)
                    : log_ratio_ci(est1.fit, est0.fit, chi1, chi0,
                                   *config.pivots, s0, config.alpha, n);
            const double target = config.kind == CiKind::difference
                                      ? truth1(s0) - truth0(s0)
                                      : std::log(truth1(s0) / truth0(s0));
            rec.width[p] = 2.0 * ci.half_width;
            rec.covered[p] = (target >= ci.lower() && target <= ci.upper()) ? 1 : 0;
          } catch (const std::exception&) {
          }
        }
      }
    } catch (const std::exception&) {
      rec.failed = true;
    }
  });

  std::vector<CoveragePoint> out(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    out[p].s0 = points[p];
    std::vector<double> widths;
    for (const auto& rec : reps) {
      if (rec.failed) {
        ++out[p].failed_replications;
        continue;
      }
      if (std::isnan(rec.width[p])) continue;
      ++out[p].defined;
      out[p].covered += rec.covered[p];
      widths.push_back(rec.width[p]);
    }
    out[p].mean_width = widths.empty() ? 0.0 : pairwise_mean(widths);
  }
  return out;
}

}  // namespace cfdens
