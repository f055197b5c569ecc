#include "cfdens/onestep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cfdens/numeric.hpp"
#include "cfdens/rng.hpp"

namespace cfdens {

ExternalPredictions::ExternalPredictions(IsoGrid g, std::vector<double> pi_values,
                                         std::vector<double> phi_values)
    : grid(std::move(g)), pi(std::move(pi_values)), phi(std::move(phi_values)) {
  if (pi.empty() || phi.size() != pi.size() * grid.size())
    throw std::invalid_argument("ExternalPredictions: shape mismatch");
  for (double p : pi)
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("ExternalPredictions: propensity outside (0,1)");
}

ExternalPredictions load_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_predictions_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error("load_predictions_csv: empty file");
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      if (!f.empty() && f.back() == '\r') f.pop_back();
      header.push_back(f);
    }
  }
  if (header.size() < 5 || header[0] != "pi")
    throw std::runtime_error(
        "load_predictions_csv: expected header 'pi,phi:<s1>,...' with at least 4 grid columns");
  std::vector<double> grid_points;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].rfind("phi:", 0) != 0)
      throw std::runtime_error("load_predictions_csv: bad column '" + header[c] + "'");
    grid_points.push_back(std::stod(header[c].substr(4)));
  }
  std::vector<double> pi, phi;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string f;
    std::size_t c = 0;
    while (std::getline(ss, f, ',')) {
      const double v = std::stod(f);
      if (c == 0)
        pi.push_back(v);
      else
        phi.push_back(v);
      ++c;
    }
    if (c != header.size())
      throw std::runtime_error("load_predictions_csv: wrong field count");
  }
  return ExternalPredictions(IsoGrid(std::move(grid_points)), std::move(pi),
                             std::move(phi));
}

void write_predictions_csv(const std::string& path, const ExternalPredictions& preds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_predictions_csv: cannot open '" + path + "'");
  out << "pi";
  char buf[40];
  for (double s : preds.grid.points()) {
    std::snprintf(buf, sizeof(buf), "%.17g", s);
    out << ",phi:" << buf;
  }
  out << "\n";
  const std::size_t m = preds.grid.size();
  for (std::size_t i = 0; i < preds.pi.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", preds.pi[i]);
    out << buf;
    for (std::size_t j = 0; j < m; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", preds.phi[i * m + j]);
      out << "," << buf;
    }
    out << "\n";
  }
}

InfluenceEvaluator::InfluenceEvaluator(int arm, const NuisancePair& nuisances,
                                       double propensity_floor)
    : arm_(arm), floor_(propensity_floor) {
  if (arm != 0 && arm != 1)
    throw std::invalid_argument("InfluenceEvaluator: arm must be 0 or 1");
  auto pi_model = nuisances.propensity;
  auto phi_model = nuisances.cond_cdf;
  pi_ = [pi_model](const ObservedSample& s, std::size_t i) {
    return pi_model(s.row(i));
  };
  phi_ = [phi_model](double v, const ObservedSample& s, std::size_t i) {
    return phi_model(v, s.row(i));
  };
}

InfluenceEvaluator::InfluenceEvaluator(int arm, const ExternalPredictions& preds,
                                       double propensity_floor)
    : arm_(arm), floor_(propensity_floor) {
  if (arm != 0 && arm != 1)
    throw std::invalid_argument("InfluenceEvaluator: arm must be 0 or 1");
  const auto pi = preds.pi;
  const auto phi = preds.phi;
  const auto pts = preds.grid.points();
  pi_ = [pi](const ObservedSample&, std::size_t i) {
    if (i >= pi.size())
      throw std::runtime_error("external predictions: row index out of range");
    return pi[i];
  };
  const std::size_t m = pts.size();
  phi_ = [phi, pts, m](double s, const ObservedSample&, std::size_t i) {
    const double* row = phi.data() + i * m;
    if (s <= pts.front()) return row[0];
    if (s >= pts.back()) return row[m - 1];
    const auto it = std::upper_bound(pts.begin(), pts.end(), s);
    const std::size_t k = static_cast<std::size_t>(it - pts.begin()) - 1;
    const double lam = (s - pts[k]) / (pts[k + 1] - pts[k]);
    return (1.0 - lam) * row[k] + lam * row[k + 1];
  };
}

double InfluenceEvaluator::propensity(const ObservedSample& sample,
                                      std::size_t row) const {
  const double p = pi_(sample, row);
  if (!(p >= floor_))
    throw std::runtime_error(
        "InfluenceEvaluator: propensity below floor (nuisance contract breach)");
  return p;
}

double InfluenceEvaluator::cond_cdf(double s, const ObservedSample& sample,
                                    std::size_t row) const {
  return phi_(s, sample, row);
}

double InfluenceEvaluator::evaluate(double s, const ObservedSample& sample,
                                    std::size_t row) const {
  const double phi = phi_(s, sample, row);
  if (sample.treatment(row) != arm_) return phi;
  const double p = propensity(sample, row);
  const double ind = sample.outcome(row) <= s ? 1.0 : 0.0;
  return (ind - phi) / p + phi;
}

FoldAssignment::FoldAssignment(std::size_t folds, std::vector<std::size_t> assignment)
    : k0(folds), fold_of_row(std::move(assignment)) {
  if (k0 < 2) throw std::invalid_argument("FoldAssignment: need at least 2 folds");
  if (fold_of_row.size() < k0)
    throw std::invalid_argument("FoldAssignment: more folds than rows");
  std::vector<std::size_t> sizes(k0, 0);
  for (std::size_t f : fold_of_row) {
    if (f >= k0) throw std::invalid_argument("FoldAssignment: fold index out of range");
    ++sizes[f];
  }
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  if (*lo == 0 || *hi - *lo > 1)
    throw std::invalid_argument("FoldAssignment: fold sizes must differ by at most 1");
}

FoldAssignment FoldAssignment::random(std::size_t n, std::size_t folds,
                                      std::uint64_t seed) {
  if (folds < 2 || folds > n)
    throw std::invalid_argument("FoldAssignment: need 2 <= folds <= n");
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> assignment(n);
  for (std::size_t pos = 0; pos < n; ++pos) assignment[perm[pos]] = pos % folds;
  return FoldAssignment(folds, std::move(assignment));
}

std::vector<std::size_t> FoldAssignment::rows_in_fold(std::size_t k) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of_row.size(); ++i)
    if (fold_of_row[i] == k) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> FoldAssignment::rows_not_in_fold(std::size_t k) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of_row.size(); ++i)
    if (fold_of_row[i] != k) rows.push_back(i);
  return rows;
}

namespace {

// Shared column evaluation: one pairwise mean per grid point, rows in order.
SteppedCdf column_means(
    const ObservedSample& sample, const IsoGrid& grid,
    const std::function<double(double s, std::size_t row)>& influence,
    int threads) {
  const std::size_t n = sample.n();
  const auto& pts = grid.points();
  std::vector<double> values(pts.size());
  parallel_for(0, pts.size(), threads, [&](std::size_t j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = influence(pts[j], i);
    values[j] = pairwise_mean(col);
  });
  return SteppedCdf(grid, std::move(values), CdfState::raw);
}

}  // namespace

SteppedCdf onestep_cdf(const ObservedSample& sample,
                       const InfluenceEvaluator& evaluator, const IsoGrid& grid,
                       int threads) {
  return column_means(
      sample, grid,
      [&](double s, std::size_t i) { return evaluator.evaluate(s, sample, i); },
      threads);
}

SteppedCdf crossfit_cdf(const ObservedSample& sample, int arm,
                        const NuisanceFactory& factory, const FoldAssignment& folds,
                        const IsoGrid& grid, int threads, double propensity_floor) {
  if (folds.fold_of_row.size() != sample.n())
    throw std::invalid_argument("crossfit_cdf: fold assignment size mismatch");
  std::vector<InfluenceEvaluator> evaluators;
  evaluators.reserve(folds.k0);
  for (std::size_t k = 0; k < folds.k0; ++k) {
    const auto train_rows = folds.rows_not_in_fold(k);
    const ObservedSample train = sample.subset(train_rows);
    if (train.arm_count(arm) == 0 || train.arm_count(1 - arm) == 0)
      throw std::runtime_error(
          "crossfit_cdf: a fold's training complement has an empty treatment arm");
    evaluators.emplace_back(arm, factory(train), propensity_floor);
  }
  return column_means(
      sample, grid,
      [&](double s, std::size_t i) {
        return evaluators[folds.fold_of_row[i]].evaluate(s, sample, i);
      },
      threads);
}

namespace {

DensityEstimate finish_pipeline(SteppedCdf raw) {
  SteppedCdf corrected = isotonize(clamp01(raw));
  const auto atoms = atoms_from_cdf(corrected);
  LogConcaveFit fit = logconcave_mle(atoms);
  return DensityEstimate{std::move(fit), std::move(corrected)};
}

}  // namespace

DensityEstimate estimate_density(const ObservedSample& sample,
                                 const InfluenceEvaluator& evaluator,
                                 const std::optional<IsoGrid>& grid, int threads) {
  const IsoGrid g = grid ? *grid : default_grid(sample, evaluator.arm());
  return finish_pipeline(onestep_cdf(sample, evaluator, g, threads));
}

DensityEstimate estimate_density(const ObservedSample& sample, int arm,
                                 const NuisancePair& nuisances,
                                 const std::optional<IsoGrid>& grid, int threads) {
  return estimate_density(sample, InfluenceEvaluator(arm, nuisances), grid, threads);
}

DensityEstimate estimate_density_crossfit(const ObservedSample& sample, int arm,
                                          const NuisanceFactory& factory,
                                          const FoldAssignment& folds,
                                          const std::optional<IsoGrid>& grid,
                                          int threads) {
  const IsoGrid g = grid ? *grid : default_grid(sample, arm);
  return finish_pipeline(crossfit_cdf(sample, arm, factory, folds, g, threads));
}

}  // namespace cfdens
