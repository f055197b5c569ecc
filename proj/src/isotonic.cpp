#include "cfdens/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfdens/numeric.hpp"

namespace cfdens {

SteppedCdf::SteppedCdf(IsoGrid g, std::vector<double> v, CdfState s)
    : grid(std::move(g)), values(std::move(v)), state(s) {
  if (values.size() != grid.size())
    throw std::invalid_argument("SteppedCdf: value/grid length mismatch");
  for (double x : values)
    if (!std::isfinite(x))
      throw std::invalid_argument("SteppedCdf: non-finite value");
}

SteppedCdf clamp01(const SteppedCdf& cdf) {
  if (cdf.state != CdfState::raw)
    throw std::invalid_argument("clamp01: expected raw state");
  std::vector<double> v = cdf.values;
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
  return SteppedCdf(cdf.grid, std::move(v), CdfState::clamped);
}

std::vector<double> pava(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("pava: empty input");
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument("pava: non-finite input");

  // stack of blocks (mean, count)
  std::vector<double> mean;
  std::vector<std::size_t> count;
  mean.reserve(v.size());
  count.reserve(v.size());
  for (double x : v) {
    double m = x;
    std::size_t c = 1;
    while (!mean.empty() && mean.back() >= m) {
      m = (mean.back() * static_cast<double>(count.back()) +
           m * static_cast<double>(c)) /
          static_cast<double>(count.back() + c);
      c += count.back();
      mean.pop_back();
      count.pop_back();
    }
    mean.push_back(m);
    count.push_back(c);
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t b = 0; b < mean.size(); ++b)
    out.insert(out.end(), count[b], mean[b]);
  return out;
}

SteppedCdf isotonize(const SteppedCdf& cdf) {
  if (cdf.state != CdfState::clamped)
    throw std::invalid_argument("isotonize: expected clamped state");
  const std::size_t m = cdf.values.size();
  std::vector<double> v = cdf.values;
  const auto interior =
      pava(std::span<const double>(v.data() + 1, m - 2));
  std::copy(interior.begin(), interior.end(), v.begin() + 1);
  v.front() = 0.0;
  v.back() = 1.0;
  return SteppedCdf(cdf.grid, std::move(v), CdfState::isotonized);
}

double eval_step(const SteppedCdf& cdf, double s) {
  if (cdf.state != CdfState::isotonized)
    throw std::invalid_argument("eval_step: expected isotonized state");
  const auto& pts = cdf.grid.points();
  if (s >= pts.back()) return 1.0;
  if (s < pts[1]) return 0.0;
  // largest grid point <= s
  const auto it = std::upper_bound(pts.begin(), pts.end(), s);
  const auto k = static_cast<std::size_t>(it - pts.begin()) - 1;
  return cdf.values[k];
}

double wasserstein1(const SteppedCdf& f, const std::function<double(double)>& g,
                    double lower, double upper, double abs_tol) {
  if (f.state != CdfState::isotonized)
    throw std::invalid_argument("wasserstein1: expected isotonized F");
  if (!(upper > lower))
    throw std::invalid_argument("wasserstein1: empty bounds");
  // split points: bounds plus grid points inside them
  std::vector<double> cuts;
  cuts.push_back(lower);
  for (double p : f.grid.points())
    if (p > lower && p < upper) cuts.push_back(p);
  cuts.push_back(upper);

  double total = 0.0;
  const double piece_tol = abs_tol / static_cast<double>(cuts.size());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (!(b > a)) continue;
    // F is constant on [a, b); the integrand's only kink is where G crosses it
    const double fv = eval_step(f, 0.5 * (a + b));
    total += integrate_adaptive(
        [&](double s) { return std::abs(fv - g(s)); }, a, b, piece_tol);
  }
  if (!std::isfinite(total))
    throw std::runtime_error("wasserstein1: non-finite integral");
  return total;
}

}  // namespace cfdens
