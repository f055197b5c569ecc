#include "cfdens/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cfdens/convexreg.hpp"
#include "cfdens/numeric.hpp"
#include "cfdens/rng.hpp"

namespace cfdens {

namespace {

double default_bandwidth(std::size_t n) {
  return std::pow(static_cast<double>(n), -0.1);
}

double mean_squared_difference(const ObservedSample& sample,
                               const InfluenceEvaluator& ev, double s_shift,
                               double s0, std::span<const std::size_t> rows) {
  std::vector<double> sq(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double d = ev.evaluate(s_shift, sample, rows[r]) -
                     ev.evaluate(s0, sample, rows[r]);
    sq[r] = d * d;
  }
  return pairwise_mean(sq);
}

}  // namespace

ChiEstimate estimate_chi(const ObservedSample& sample,
                         const InfluenceEvaluator& evaluator, double s0,
                         std::optional<double> h) {
  const double hn = h.value_or(default_bandwidth(sample.n()));
  if (!(hn > 0.0)) throw std::invalid_argument("estimate_chi: bandwidth must be positive");
  std::vector<std::size_t> rows(sample.n());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const double up = mean_squared_difference(sample, evaluator, s0 + hn, s0, rows);
  const double dn = mean_squared_difference(sample, evaluator, s0 - hn, s0, rows);
  return ChiEstimate{(up + dn) / (2.0 * hn), hn, evaluator.arm(), s0};
}

ChiEstimate crossfit_chi(const ObservedSample& sample, int arm,
                         const NuisanceFactory& factory,
                         const FoldAssignment& folds, double s0,
                         std::optional<double> h, double propensity_floor) {
  if (folds.fold_of_row.size() != sample.n())
    throw std::invalid_argument("crossfit_chi: fold assignment size mismatch");
  const double hn = h.value_or(default_bandwidth(sample.n()));
  if (!(hn > 0.0)) throw std::invalid_argument("crossfit_chi: bandwidth must be positive");
  double acc = 0.0;
  for (std::size_t k = 0; k < folds.k0; ++k) {
    const auto train_rows = folds.rows_not_in_fold(k);
    const ObservedSample train = sample.subset(train_rows);
    if (train.arm_count(arm) == 0 || train.arm_count(1 - arm) == 0)
      throw std::runtime_error(
          "crossfit_chi: a fold's training complement has an empty treatment arm");
    const InfluenceEvaluator ev(arm, factory(train), propensity_floor);
    const auto fold_rows = folds.rows_in_fold(k);
    acc += mean_squared_difference(sample, ev, s0 + hn, s0, fold_rows);
    acc += mean_squared_difference(sample, ev, s0 - hn, s0, fold_rows);
  }
  return ChiEstimate{acc / (2.0 * hn * static_cast<double>(folds.k0)), hn, arm, s0};
}

PivotTable::PivotTable(int k, std::size_t n_sim, std::size_t draws_count,
                       std::uint64_t seed, std::vector<double> draws0,
                       std::vector<double> draws1)
    : k_(k),
      n_sim_(n_sim),
      seed_(seed),
      draws0_(std::move(draws0)),
      draws1_(std::move(draws1)) {
  if (draws0_.size() != draws_count || draws1_.size() != draws_count)
    throw std::invalid_argument("PivotTable: draw count mismatch");
  if (draws_count < 4) throw std::invalid_argument("PivotTable: too few draws");
  abs0_sorted_.resize(draws0_.size());
  abs1_sorted_.resize(draws1_.size());
  for (std::size_t i = 0; i < draws0_.size(); ++i) {
    abs0_sorted_[i] = std::abs(draws0_[i]);
    abs1_sorted_[i] = std::abs(draws1_[i]);
  }
  std::sort(abs0_sorted_.begin(), abs0_sorted_.end());
  std::sort(abs1_sorted_.begin(), abs1_sorted_.end());
}

double PivotTable::quantile_abs0(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("PivotTable: alpha must lie in (0,1)");
  return quantile_sorted(abs0_sorted_, 1.0 - alpha);
}

double PivotTable::quantile_abs1(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("PivotTable: alpha must lie in (0,1)");
  return quantile_sorted(abs1_sorted_, 1.0 - alpha);
}

std::span<const double> PivotTable::arm1_stream() const {
  return {draws0_.data(), draws0_.size() / 2};
}

std::span<const double> PivotTable::arm0_stream() const {
  return {draws0_.data() + draws0_.size() / 2, draws0_.size() / 2};
}

void PivotTable::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("PivotTable::save_csv: cannot open '" + path + "'");
  out << "k,n_sim,B,seed\n";
  out << k_ << "," << n_sim_ << "," << draws0_.size() << "," << seed_ << "\n";
  out << "L0,L1\n";
  char buf[64];
  for (std::size_t i = 0; i < draws0_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", draws0_[i], draws1_[i]);
    out << buf;
  }
}

PivotTable PivotTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("PivotTable::load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,n_sim,B,seed", 0) != 0)
    throw std::runtime_error("PivotTable::load_csv: bad metadata header");
  if (!std::getline(in, line))
    throw std::runtime_error("PivotTable::load_csv: missing metadata row");
  int k = 0;
  unsigned long long n_sim = 0, b = 0, seed = 0;
  if (std::sscanf(line.c_str(), "%d,%llu,%llu,%llu", &k, &n_sim, &b, &seed) != 4)
    throw std::runtime_error("PivotTable::load_csv: bad metadata row");
  if (!std::getline(in, line) || line.rfind("L0,L1", 0) != 0)
    throw std::runtime_error("PivotTable::load_csv: missing draw header");
  std::vector<double> l0, l1;
  l0.reserve(b);
  l1.reserve(b);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    double a = 0, c = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &a, &c) != 2)
      throw std::runtime_error("PivotTable::load_csv: bad draw row");
    l0.push_back(a);
    l1.push_back(c);
  }
  if (l0.size() != b)
    throw std::runtime_error("PivotTable::load_csv: draw count does not match header");
  return PivotTable(k, n_sim, b, seed, std::move(l0), std::move(l1));
}

PivotTable simulate_pivots(int k, std::size_t n_sim, std::size_t replications,
                           std::uint64_t seed, int threads) {
  if (k != 2) throw std::runtime_error("simulate_pivots: unsupported curvature order");
  if (n_sim < 100) throw std::invalid_argument("simulate_pivots: n_sim must be >= 100");
  if (replications < 100)
    throw std::invalid_argument("simulate_pivots: need at least 100 replications");

  std::vector<double> design(n_sim);
  const double inv_n = 1.0 / static_cast<double>(n_sim);
  for (std::size_t i = 0; i < n_sim; ++i)
    design[i] = static_cast<double>(i + 1) * inv_n;
  const double x0 = 0.5;

  std::vector<double> l0(replications), l1(replications);
  parallel_for(0, replications, threads, [&](std::size_t r) {
    Rng rng(seed, r);
    std::vector<double> y(n_sim);
    for (std::size_t i = 0; i < n_sim; ++i) {
      const double c = design[i] - 0.5;
      y[i] = 12.0 * c * c + rng.normal();
    }
    try {
      const ConvexFit fit = convex_lse(design, y);
      const auto [lo, hi] = convex_knots_around(fit, x0);
      const double dtau = hi - lo;
      l0[r] = std::sqrt(static_cast<double>(n_sim) * dtau) * fit.value(x0);
      l1[r] = std::sqrt(static_cast<double>(n_sim) * dtau * dtau * dtau) *
              fit.left_derivative(x0);
    } catch (const std::exception& e) {
      throw std::runtime_error("simulate_pivots: replication " + std::to_string(r) +
                               " failed: " + e.what());
    }
  });
  return PivotTable(k, n_sim, replications, seed, std::move(l0), std::move(l1));
}

PointwiseCI pointwise_ci(const LogConcaveFit& fit, const ChiEstimate& chi,
                         const PivotTable& pivots, double s0, double alpha,
                         CiKind kind, std::size_t n) {
  if (kind != CiKind::density && kind != CiKind::derivative)
    throw std::invalid_argument("pointwise_ci: kind must be density or derivative");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("pointwise_ci: alpha must lie in (0,1)");
  const auto [lo, hi] = fit.adjacent_knots(s0);  // throws off/on-boundary
  const double dtau = hi - lo;
  PointwiseCI ci;
  ci.alpha = alpha;
  ci.kind = kind;
  ci.s0 = s0;
  const double nn = static_cast<double>(n);
  if (kind == CiKind::density) {
    ci.center = fit.density(s0);
    ci.half_width = std::sqrt(chi.value / (nn * dtau)) * pivots.quantile_abs0(alpha);
  } else {
    ci.center = fit.left_derivative(s0);
    ci.half_width =
        std::sqrt(chi.value / (nn * dtau * dtau * dtau)) * pivots.quantile_abs1(alpha);
  }
  ci.degenerate = (chi.value == 0.0);
  return ci;
}

namespace {

double contrast_quantile(std::span<const double> stream1,
                         std::span<const double> stream0, double coef1,
                         double coef0, double alpha) {
  const std::size_t b = std::min(stream1.size(), stream0.size());
  if (b == 0) throw std::invalid_argument("contrast CI: empty pivot stream");
  std::vector<double> v(b);
  for (std::size_t i = 0; i < b; ++i)
    v[i] = std::abs(coef0 * stream0[i] - coef1 * stream1[i]);
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 1.0 - alpha);
}

}  // namespace

PointwiseCI difference_ci(const LogConcaveFit& fit1, const LogConcaveFit& fit0,
                          const ChiEstimate& chi1, const ChiEstimate& chi0,
                          const PivotTable& pivots, double s0, double alpha,
                          std::size_t n) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("difference_ci: alpha must lie in (0,1)");
  const auto [lo1, hi1] = fit1.adjacent_knots(s0);
  const auto [lo0, hi0] = fit0.adjacent_knots(s0);
  const double nn = static_cast<double>(n);
  const double a1 = std::sqrt(chi1.value / (nn * (hi1 - lo1)));
  const double a0 = std::sqrt(chi0.value / (nn * (hi0 - lo0)));
  PointwiseCI ci;
  ci.alpha = alpha;
  ci.kind = CiKind::difference;
  ci.s0 = s0;
  ci.center = fit1.density(s0) - fit0.density(s0);
  ci.half_width =
      contrast_quantile(pivots.arm1_stream(), pivots.arm0_stream(), a1, a0, alpha);
  ci.degenerate = (a1 == 0.0 && a0 == 0.0);
  return ci;
}

PointwiseCI log_ratio_ci(const LogConcaveFit& fit1, const LogConcaveFit& fit0,
                         const ChiEstimate& chi1, const ChiEstimate& chi0,
                         const PivotTable& pivots, double s0, double alpha,
                         std::size_t n) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("log_ratio_ci: alpha must lie in (0,1)");
  const auto [lo1, hi1] = fit1.adjacent_knots(s0);
  const auto [lo0, hi0] = fit0.adjacent_knots(s0);
  const double p1 = fit1.density(s0);
  const double p0 = fit0.density(s0);
  if (!(p1 > 0.0) || !(p0 > 0.0))
    throw std::runtime_error("log_ratio_ci: zero density at s0");
  const double nn = static_cast<double>(n);
  const double c1 = std::sqrt(chi1.value) / p1 / std::sqrt(nn * (hi1 - lo1));
  const double c0 = std::sqrt(chi0.value) / p0 / std::sqrt(nn * (hi0 - lo0));
  PointwiseCI ci;
  ci.alpha = alpha;
  ci.kind = CiKind::log_ratio;
  ci.s0 = s0;
  ci.center = std::log(p1 / p0);
  ci.half_width =
      contrast_quantile(pivots.arm1_stream(), pivots.arm0_stream(), c1, c0, alpha);
  ci.degenerate = (c1 == 0.0 && c0 == 0.0);
  return ci;
}

std::vector<double> band_order_statistics(const LogConcaveFit& fit, std::size_t n,
                                          std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("band_order_statistics: n must be positive");
  Rng rng(seed);
  std::vector<double> u(n);
  for (double& v : u) v = rng.uniform();
  std::sort(u.begin(), u.end());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fit.quantile(u[i]);
  return out;
}

}  // namespace cfdens
