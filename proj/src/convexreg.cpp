#include "cfdens/convexreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfdens {

ConvexFit::ConvexFit(std::vector<double> x, std::vector<double> fitted)
    : x_(std::move(x)), fitted_(std::move(fitted)) {
  const std::size_t n = x_.size();
  if (n < 2 || fitted_.size() != n)
    throw std::invalid_argument("ConvexFit: size mismatch");
  slopes_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dx = x_[i + 1] - x_[i];
    if (!(dx > 0.0))
      throw std::invalid_argument("ConvexFit: design must strictly increase");
    slopes_[i] = (fitted_[i + 1] - fitted_[i]) / dx;
  }
  knots_.push_back(x_.front());
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (slopes_[i] - slopes_[i - 1] > 1e-8) knots_.push_back(x_[i]);
  knots_.push_back(x_.back());
}

double ConvexFit::value(double s) const {
  if (s <= x_.front()) return fitted_.front();
  if (s >= x_.back()) return fitted_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  return fitted_[i] + slopes_[i] * (s - x_[i]);
}

double ConvexFit::left_derivative(double s) const {
  if (s <= x_.front())
    throw std::domain_error("left_derivative: undefined at or left of the design start");
  const auto it = std::lower_bound(x_.begin(), x_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - x_.begin());
  if (i >= x_.size()) i = x_.size() - 1;
  return slopes_[i - 1];
}

namespace {

// Restricted least squares: piecewise-linear with kinks only at the given
// knot indices. Normal equations are tridiagonal in the knot values.
std::vector<double> restricted_ls(std::span<const double> x,
                                  std::span<const double> y,
                                  const std::vector<std::size_t>& knots) {
  const std::size_t k = knots.size();
  std::vector<double> diag(k, 0.0), off(k - 1, 0.0), rhs(k, 0.0);
  for (std::size_t seg = 0; seg + 1 < k; ++seg) {
    const std::size_t a = knots[seg];
    const std::size_t b = knots[seg + 1];
    const double ua = x[a];
    const double ub = x[b];
    const double width = ub - ua;
    for (std::size_t i = a; i < b; ++i) {
      const double lam = (x[i] - ua) / width;
      const double om = 1.0 - lam;
      diag[seg] += om * om;
      diag[seg + 1] += lam * lam;
      off[seg] += lam * om;
      rhs[seg] += om * y[i];
      rhs[seg + 1] += lam * y[i];
    }
  }
  diag[k - 1] += 1.0;  // the last design point sits exactly on the last knot
  rhs[k - 1] += y[y.size() - 1];

  // Thomas algorithm
  for (std::size_t i = 1; i < k; ++i) {
    const double m = off[i - 1] / diag[i - 1];
    diag[i] -= m * off[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  std::vector<double> v(k);
  v[k - 1] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;)
    v[i] = (rhs[i] - off[i] * v[i + 1]) / diag[i];
  return v;
}

std::vector<double> knot_kinks(std::span<const double> x,
                               const std::vector<std::size_t>& knots,
                               const std::vector<double>& v) {
  const std::size_t k = knots.size();
  std::vector<double> kk(k, 0.0);
  for (std::size_t j = 1; j + 1 < k; ++j) {
    const double sl = (v[j] - v[j - 1]) / (x[knots[j]] - x[knots[j - 1]]);
    const double sr = (v[j + 1] - v[j]) / (x[knots[j + 1]] - x[knots[j]]);
    kk[j] = sr - sl;  // >= 0 when convex
  }
  return kk;
}

void interpolate_fitted(std::span<const double> x,
                        const std::vector<std::size_t>& knots,
                        const std::vector<double>& v, std::vector<double>& out) {
  for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
    const std::size_t a = knots[seg];
    const std::size_t b = knots[seg + 1];
    const double ua = x[a];
    const double width = x[b] - ua;
    out[a] = v[seg];
    out[b] = v[seg + 1];
    for (std::size_t i = a + 1; i < b; ++i) {
      const double lam = (x[i] - ua) / width;
      out[i] = (1.0 - lam) * v[seg] + lam * v[seg + 1];
    }
  }
}

}  // namespace

ConvexFit convex_lse(std::span<const double> x, std::span<const double> y,
                     const ConvexLseOptions& options) {
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("convex_lse: need at least 3 points");
  if (y.size() != n) throw std::invalid_argument("convex_lse: size mismatch");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x[i + 1] > x[i]))
      throw std::invalid_argument("convex_lse: design must strictly increase");

  std::vector<std::size_t> knots = {0, n - 1};
  std::vector<double> v = restricted_ls(x, y, knots);  // affine fit, feasible

  std::vector<double> fitted(n), resid(n);
  std::vector<double> s1(n + 1), s2(n + 1);  // residual suffix sums

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    interpolate_fitted(x, knots, v, fitted);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - fitted[i];
    s1[n] = 0.0;
    s2[n] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      s1[i] = s1[i + 1] + resid[i];
      s2[i] = s2[i + 1] + resid[i] * x[i];
    }
    // insertion score: inner product of the residual with a hinge at x_j
    std::size_t best = n;
    double best_t = options.tol;
    std::size_t kpos = 0;
    for (std::size_t j = 1; j + 1 < n; ++j) {
      while (knots[kpos + 1] < j) ++kpos;
      if (j == knots[kpos] || j == knots[kpos + 1]) continue;
      const double tj = s2[j + 1] - x[j] * s1[j + 1];
      if (tj > best_t) {
        best_t = tj;
        best = j;
      }
    }
    if (best == n) return ConvexFit(std::vector<double>(x.begin(), x.end()), fitted);

    // add the hinge with an exact improving step, then re-solve and walk
    // back to feasibility, dropping knots whose kink reaches zero
    const auto pos = std::lower_bound(knots.begin(), knots.end(), best);
    const std::size_t jn = static_cast<std::size_t>(pos - knots.begin());
    knots.insert(pos, best);
    double interp;
    {
      const std::size_t a = knots[jn - 1];
      const std::size_t b = knots[jn + 1];
      const double lam = (x[best] - x[a]) / (x[b] - x[a]);
      interp = (1.0 - lam) * v[jn - 1] + lam * v[jn];
    }
    v.insert(v.begin() + static_cast<std::ptrdiff_t>(jn), interp);
    double hnorm2 = 0.0;
    for (std::size_t i = best + 1; i < n; ++i) {
      const double h = x[i] - x[best];
      hnorm2 += h * h;
    }
    const double eps = best_t / hnorm2;
    for (std::size_t q = jn + 1; q < knots.size(); ++q)
      v[q] += eps * (x[knots[q]] - x[best]);

    // inner loop: exact restricted solve + feasibility line search
    for (int inner = 0; inner < options.max_iterations; ++inner) {
      const auto target = restricted_ls(x, y, knots);
      const auto kink_cur = knot_kinks(x, knots, v);
      const auto kink_new = knot_kinks(x, knots, target);
      double alpha = 1.0;
      for (std::size_t j = 1; j + 1 < knots.size(); ++j) {
        if (kink_new[j] < 0.0 && kink_cur[j] > kink_new[j])
          alpha = std::min(alpha, kink_cur[j] / (kink_cur[j] - kink_new[j]));
      }
      alpha = std::clamp(alpha, 0.0, 1.0);
      if (alpha >= 1.0) {
        v = target;
        break;
      }
      for (std::size_t j = 0; j < v.size(); ++j)
        v[j] = (1.0 - alpha) * v[j] + alpha * target[j];
      const auto kk = knot_kinks(x, knots, v);
      bool removed = false;
      for (std::size_t j = knots.size() - 2; j >= 1; --j) {
        if (kk[j] <= 1e-13) {
          knots.erase(knots.begin() + static_cast<std::ptrdiff_t>(j));
          v.erase(v.begin() + static_cast<std::ptrdiff_t>(j));
          removed = true;
        }
      }
      if (!removed) {
        // numerical tie: accept the blended point as feasible optimum
        break;
      }
      if (knots.size() == 2) {
        v = restricted_ls(x, y, knots);
        break;
      }
    }
  }
  throw std::runtime_error("convex_lse: iteration cap exceeded");
}

std::pair<double, double> convex_knots_around(const ConvexFit& fit, double x0) {
  const auto& x = fit.design();
  if (!(x0 > x.front() && x0 < x.back()))
    throw std::domain_error("convex_knots_around: x0 outside the design range");
  const double eps = 1e-12 * std::max(1.0, std::abs(x0));
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  for (double k : fit.knots()) {
    if (k < x0 - eps) lo = k;
    if (k > x0 + eps) {
      hi = k;
      break;
    }
  }
  if (std::isnan(lo) || std::isnan(hi))
    throw std::domain_error("convex_knots_around: x0 coincides with a boundary knot");
  return {lo, hi};
}

}  // namespace cfdens
