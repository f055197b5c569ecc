#include "cfdens/logconcave.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "cfdens/numeric.hpp"

namespace cfdens {

namespace {

// Segment integrals of exp(linear) and their derivatives, written through
// f(d) = (e^d - 1)/d and its derivatives with series fallbacks near d = 0:
//   integral over [0,1] of exp(a + d*u) du = e^a * f(d).
double f0(double d) {
  if (d == 0.0) return 1.0;
  return std::expm1(d) / d;
}

double f1(double d) {
  if (std::abs(d) < 1e-3)
    return 0.5 + d * (1.0 / 3.0 + d * (0.125 + d * (1.0 / 30.0 + d / 144.0)));
  return (std::exp(d) * (d - 1.0) + 1.0) / (d * d);
}

double f2(double d) {
  if (std::abs(d) < 1e-2)
    return 1.0 / 3.0 +
           d * (0.25 + d * (0.1 + d * (1.0 / 36.0 + d / 168.0)));
  return (std::exp(d) * (d * d - 2.0 * d + 2.0) - 2.0) / (d * d * d);
}

// (f(d) - 1)/d: double integral kernel for the running integral of the CDF.
double g0(double d) {
  if (std::abs(d) < 1e-4)
    return 0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d / 120.0));
  return (std::expm1(d) - d) / (d * d);
}

double j00(double a, double b) { return std::exp(a) * f0(b - a); }
// d/da and d/db of j00
double j10(double a, double b) {
  const double d = b - a;
  return std::exp(a) * (f0(d) - f1(d));
}
double j01(double a, double b) { return std::exp(a) * f1(b - a); }
// second derivatives
double j20(double a, double b) {
  const double d = b - a;
  return std::exp(a) * (f0(d) - 2.0 * f1(d) + f2(d));
}
double j11(double a, double b) {
  const double d = b - a;
  return std::exp(a) * (f1(d) - f2(d));
}
double j02(double a, double b) { return std::exp(a) * f2(b - a); }

// SPD tridiagonal solve (Thomas algorithm).
std::vector<double> solve_tridiag(std::vector<double> diag,
                                  std::vector<double> off,
                                  std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = off[i - 1] / diag[i - 1];
    diag[i] -= m * off[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;)
    x[i] = (rhs[i] - off[i] * x[i + 1]) / diag[i];
  return x;
}

}  // namespace

WeightedAtoms::WeightedAtoms(std::vector<double> locs, std::vector<double> wts)
    : locations(std::move(locs)), weights(std::move(wts)) {
  if (locations.size() < 2)
    throw std::runtime_error("WeightedAtoms: point mass (need at least 2 atoms)");
  if (weights.size() != locations.size())
    throw std::invalid_argument("WeightedAtoms: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (!std::isfinite(locations[i]))
      throw std::invalid_argument("WeightedAtoms: non-finite location");
    if (i > 0 && !(locations[i] > locations[i - 1]))
      throw std::invalid_argument("WeightedAtoms: locations must strictly increase");
    if (!(weights[i] > 0.0))
      throw std::invalid_argument("WeightedAtoms: weights must be positive");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-10)
    throw std::invalid_argument("WeightedAtoms: weights must sum to 1");
}

WeightedAtoms atoms_from_cdf(const SteppedCdf& cdf) {
  if (cdf.state != CdfState::isotonized)
    throw std::invalid_argument("atoms_from_cdf: expected isotonized CDF");
  const auto& pts = cdf.grid.points();
  std::vector<double> locs;
  std::vector<double> wts;
  double sum = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double inc = cdf.values[k] - cdf.values[k - 1];
    if (inc < 1e-12) continue;  // drop numerically empty atoms
    locs.push_back(pts[k]);
    wts.push_back(inc);
    sum += inc;
  }
  if (locs.size() < 2)
    throw std::runtime_error("atoms_from_cdf: point mass (fewer than 2 atoms)");
  for (double& w : wts) w /= sum;
  return WeightedAtoms(std::move(locs), std::move(wts));
}

LogConcaveFit::LogConcaveFit(std::vector<double> atoms,
                             std::vector<double> weights,
                             std::vector<double> phi)
    : atoms_(std::move(atoms)), weights_(std::move(weights)), phi_(std::move(phi)) {
  const std::size_t m = atoms_.size();
  if (m < 2 || phi_.size() != m || weights_.size() != m)
    throw std::invalid_argument("LogConcaveFit: size mismatch");
  slopes_.resize(m - 1);
  std::vector<double> slope_err(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double dt = atoms_[i + 1] - atoms_[i];
    if (!(dt > 0.0))
      throw std::invalid_argument("LogConcaveFit: atoms must strictly increase");
    slopes_[i] = (phi_[i + 1] - phi_[i]) / dt;
    // rounding amplification of the difference quotient over tiny gaps
    slope_err[i] =
        8.0 * 2.2e-16 * (std::abs(phi_[i]) + std::abs(phi_[i + 1])) / dt;
  }
  for (std::size_t i = 0; i + 1 < slopes_.size(); ++i)
    if (slopes_[i + 1] - slopes_[i] > 1e-8 + slope_err[i] + slope_err[i + 1])
      throw std::invalid_argument("LogConcaveFit: log-density not concave");

  cdf_at_atoms_.resize(m);
  cdf_at_atoms_[0] = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i)
    cdf_at_atoms_[i + 1] =
        cdf_at_atoms_[i] + (atoms_[i + 1] - atoms_[i]) * j00(phi_[i], phi_[i + 1]);
  total_mass_ = cdf_at_atoms_.back();
  if (std::abs(total_mass_ - 1.0) > 1e-6)
    throw std::invalid_argument("LogConcaveFit: density does not integrate to 1");

  knots_.push_back(atoms_.front());
  for (std::size_t i = 1; i + 1 < m; ++i)
    if (slopes_[i - 1] - slopes_[i] > 1e-8 + slope_err[i - 1] + slope_err[i])
      knots_.push_back(atoms_[i]);
  knots_.push_back(atoms_.back());
}

std::size_t LogConcaveFit::segment_below(double s) const {
  // index i of the segment [t_i, t_{i+1}) containing s; s within support
  const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - atoms_.begin());
  if (i == 0) return 0;
  if (i >= atoms_.size()) return atoms_.size() - 2;
  return i - 1;
}

double LogConcaveFit::density(double s) const {
  if (s < atoms_.front() || s > atoms_.back()) return 0.0;
  const std::size_t i = segment_below(s);
  return std::exp(phi_[i] + slopes_[i] * (s - atoms_[i]));
}

std::optional<double> LogConcaveFit::log_density(double s) const {
  if (s < atoms_.front() || s > atoms_.back()) return std::nullopt;
  const std::size_t i = segment_below(s);
  return phi_[i] + slopes_[i] * (s - atoms_[i]);
}

double LogConcaveFit::left_derivative(double s) const {
  if (s <= atoms_.front())
    throw std::domain_error("left_derivative: undefined at or below the support lower end");
  if (s > atoms_.back()) return 0.0;
  // slope of the segment immediately to the left of s
  const auto it = std::lower_bound(atoms_.begin(), atoms_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - atoms_.begin());
  const std::size_t seg = (i >= atoms_.size() ? atoms_.size() - 1 : i) - 1;
  const double p = std::exp(phi_[seg] + slopes_[seg] * (s - atoms_[seg]));
  return p * slopes_[seg];
}

double LogConcaveFit::cdf(double s) const {
  if (s <= atoms_.front()) return 0.0;
  if (s >= atoms_.back()) return 1.0;
  const std::size_t i = segment_below(s);
  const double d = slopes_[i] * (s - atoms_[i]);
  double part;
  if (slopes_[i] == 0.0) {
    part = std::exp(phi_[i]) * (s - atoms_[i]);
  } else {
    part = std::exp(phi_[i]) * std::expm1(d) / slopes_[i];
  }
  return std::clamp((cdf_at_atoms_[i] + part) / total_mass_, 0.0, 1.0);
}

double LogConcaveFit::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("quantile: u must lie in (0,1)");
  const double target = u * total_mass_;
  // first atom with cumulative mass >= target
  const auto it =
      std::lower_bound(cdf_at_atoms_.begin(), cdf_at_atoms_.end(), target);
  std::size_t i = static_cast<std::size_t>(it - cdf_at_atoms_.begin());
  if (i == 0) return atoms_.front();
  --i;  // invert within segment [t_i, t_{i+1}]
  const double rest = target - cdf_at_atoms_[i];
  const double sigma = slopes_[i];
  double delta;
  if (sigma == 0.0) {
    delta = rest * std::exp(-phi_[i]);
  } else {
    delta = std::log1p(rest * sigma * std::exp(-phi_[i])) / sigma;
  }
  delta = std::clamp(delta, 0.0, atoms_[i + 1] - atoms_[i]);
  return atoms_[i] + delta;
}

std::pair<double, double> LogConcaveFit::adjacent_knots(double s0) const {
  if (!(s0 > atoms_.front() && s0 < atoms_.back()))
    throw std::domain_error("adjacent_knots: s0 outside the open support");
  const double eps = 1e-12 * std::max(1.0, std::abs(s0));
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  for (double k : knots_) {
    if (k < s0 - eps) lo = k;
    if (k > s0 + eps) {
      hi = k;
      break;
    }
  }
  if (std::isnan(lo) || std::isnan(hi))
    throw std::domain_error("adjacent_knots: s0 coincides with a support endpoint");
  return {lo, hi};
}

namespace {

// Active-set state for the weighted MLE. Knots are indices into the atom
// vector; phi is linear between consecutive knots. Collapsed atom weights
// are cached and refreshed whenever the knot set changes.
struct ActiveProblem {
  const std::vector<double>& t;
  const std::vector<double>& w;
  std::vector<std::size_t> knots;  // sorted, includes 0 and m-1
  std::vector<double> psi;         // log-density at knots
  std::vector<double> c;           // atom weights collapsed onto knots

  void refresh_collapsed() {
    c.assign(knots.size(), 0.0);
    std::size_t seg = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      while (knots[seg + 1] < i) ++seg;
      if (i == knots[seg]) {
        c[seg] += w[i];
      } else if (i == knots[seg + 1]) {
        c[seg + 1] += w[i];
      } else {
        const double lo = t[knots[seg]];
        const double hi = t[knots[seg + 1]];
        const double lam = (t[i] - lo) / (hi - lo);
        c[seg] += w[i] * (1.0 - lam);
        c[seg + 1] += w[i] * lam;
      }
    }
  }

  void drop_knot(std::size_t j) {
    knots.erase(knots.begin() + static_cast<std::ptrdiff_t>(j));
    psi.erase(psi.begin() + static_cast<std::ptrdiff_t>(j));
    refresh_collapsed();
  }

  double objective(const std::vector<double>& values) const {
    double lin = 0.0;
    double integral = 0.0;
    for (std::size_t j = 0; j < knots.size(); ++j) lin += c[j] * values[j];
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
      const double dt = t[knots[j + 1]] - t[knots[j]];
      const double arg = std::max(values[j], values[j + 1]);
      if (arg > 700.0) return -std::numeric_limits<double>::infinity();
      integral += dt * j00(values[j], values[j + 1]);
    }
    return lin - integral;
  }

  void gradient(std::vector<double>& grad) const {
    const std::size_t k = knots.size();
    grad.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) grad[j] = c[j];
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double dt = t[knots[j + 1]] - t[knots[j]];
      grad[j] -= dt * j10(psi[j], psi[j + 1]);
      grad[j + 1] -= dt * j01(psi[j], psi[j + 1]);
    }
  }

  std::vector<double> interpolate_full() const {
    std::vector<double> phi(t.size());
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
      const std::size_t a = knots[j];
      const std::size_t b = knots[j + 1];
      phi[a] = psi[j];
      phi[b] = psi[j + 1];
      for (std::size_t i = a + 1; i < b; ++i) {
        const double lam = (t[i] - t[a]) / (t[b] - t[a]);
        phi[i] = (1.0 - lam) * psi[j] + lam * psi[j + 1];
      }
    }
    return phi;
  }

  // kinks at interior knots: right slope minus left slope (<= 0 if concave)
  std::vector<double> kinks(const std::vector<double>& values) const {
    const std::size_t k = knots.size();
    std::vector<double> out(k, 0.0);
    for (std::size_t j = 1; j + 1 < k; ++j) {
      const double sl =
          (values[j] - values[j - 1]) / (t[knots[j]] - t[knots[j - 1]]);
      const double sr =
          (values[j + 1] - values[j]) / (t[knots[j + 1]] - t[knots[j]]);
      out[j] = sr - sl;
    }
    return out;
  }
};

}  // namespace

LogConcaveFit logconcave_mle(const WeightedAtoms& atoms,
                             const LogConcaveOptions& options) {
  const auto& t = atoms.locations;
  const auto& w = atoms.weights;
  const std::size_t m = t.size();
  const double range = t.back() - t.front();
  const double cert_tol = options.tol * std::max(1.0, range);
  const double grad_tol = std::max(1e-12, 1e-2 * options.tol);

  ActiveProblem prob{t, w, {0, m - 1}, {}, {}};
  prob.psi.assign(2, -std::log(range));
  prob.refresh_collapsed();

  // Newton iterations on the current knot set with a feasibility-capped line
  // search; knots whose kink reaches zero are dropped on the fly. Near the
  // optimum the objective comparison drowns in rounding, so a step is also
  // accepted when it shrinks the gradient norm.
  auto newton_phase = [&](bool& stalled) {
    stalled = false;
    std::vector<double> grad, trial, trial_grad;
    for (int iter = 0; iter < 500; ++iter) {
      const std::size_t k = prob.knots.size();
      prob.gradient(grad);
      std::vector<double> diag(k, 0.0), off(k > 1 ? k - 1 : 0, 0.0);
      for (std::size_t j = 0; j + 1 < k; ++j) {
        const double dt = t[prob.knots[j + 1]] - t[prob.knots[j]];
        diag[j] += dt * j20(prob.psi[j], prob.psi[j + 1]);
        diag[j + 1] += dt * j02(prob.psi[j], prob.psi[j + 1]);
        off[j] = dt * j11(prob.psi[j], prob.psi[j + 1]);
      }
      double gmax = 0.0;
      for (double g : grad) gmax = std::max(gmax, std::abs(g));
      if (gmax <= grad_tol) return;

      const auto dir = solve_tridiag(diag, off, grad);

      // largest feasible step along dir and the knot that blocks it
      const auto kink_now = prob.kinks(prob.psi);
      std::vector<double> probe(k);
      for (std::size_t j = 0; j < k; ++j) probe[j] = prob.psi[j] + dir[j];
      const auto kink_probe = prob.kinks(probe);
      double alpha_max = std::numeric_limits<double>::infinity();
      std::size_t blocking = 0;
      for (std::size_t j = 1; j + 1 < k; ++j) {
        const double dk = kink_probe[j] - kink_now[j];
        if (dk > 0.0) {
          const double aj = std::max(0.0, -kink_now[j]) / dk;
          if (aj < alpha_max) {
            alpha_max = aj;
            blocking = j;
          }
        }
      }
      if (alpha_max < 1e-12) {
        prob.drop_knot(blocking);  // kink pinned at zero in this direction
        continue;
      }

      double gd = 0.0;
      for (std::size_t j = 0; j < k; ++j) gd += grad[j] * dir[j];
      const double l0 = prob.objective(prob.psi);
      double alpha = std::min(1.0, alpha_max);
      bool accepted = false;
      trial.resize(k);
      for (int back = 0; back < 60; ++back) {
        for (std::size_t j = 0; j < k; ++j) trial[j] = prob.psi[j] + alpha * dir[j];
        if (prob.objective(trial) >= l0 + 1e-4 * alpha * gd) {
          accepted = true;
          break;
        }
        if (back == 0) {
          // gradient-norm acceptance for the full feasible step
          std::swap(prob.psi, trial);
          prob.gradient(trial_grad);
          std::swap(prob.psi, trial);
          double tg = 0.0;
          for (double g : trial_grad) tg = std::max(tg, std::abs(g));
          if (tg <= 0.9 * gmax) {
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        stalled = true;
        return;
      }
      const bool hit_boundary = alpha >= alpha_max * (1.0 - 1e-12);
      prob.psi = trial;
      if (hit_boundary) {
        prob.drop_knot(blocking);
        const auto kk = prob.kinks(prob.psi);
        for (std::size_t j = prob.knots.size() - 2; j >= 1; --j) {
          if (kk[j] >= -1e-13) prob.drop_knot(j);
        }
      }
    }
    stalled = true;
  };

  // directional derivative of the objective toward a hinge at each atom:
  // v_i = integral from t_1 to t_i of (fitted CDF - atom CDF)
  std::vector<double> phi_full, cert(m);
  auto certificate = [&]() {
    phi_full = prob.interpolate_full();
    double fhat = 0.0, int_fhat = 0.0, wcum = 0.0, int_fq = 0.0;
    cert[0] = 0.0;
    wcum = w[0];
    for (std::size_t i = 0; i + 1 < m; ++i) {
      const double dt = t[i + 1] - t[i];
      const double d = phi_full[i + 1] - phi_full[i];
      int_fhat += fhat * dt + dt * dt * std::exp(phi_full[i]) * g0(d);
      int_fq += wcum * dt;
      fhat += dt * j00(phi_full[i], phi_full[i + 1]);
      wcum += w[i + 1];
      cert[i + 1] = int_fhat - int_fq;
    }
  };

  int no_progress = 0;
  double prev_violation = std::numeric_limits<double>::infinity();
  for (int step = 0; step < options.max_active_steps; ++step) {
    bool stalled = false;
    newton_phase(stalled);
    certificate();

    std::size_t best = m;
    double best_v = cert_tol;
    std::size_t kpos = 0;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      while (prob.knots[kpos + 1] < i) ++kpos;
      if (i == prob.knots[kpos] || i == prob.knots[kpos + 1]) continue;
      if (cert[i] > best_v) {
        best_v = cert[i];
        best = i;
      }
    }
    if (best == m) return LogConcaveFit(t, w, phi_full);

    if (best_v < 0.9 * prev_violation) {
      no_progress = 0;
    } else if (++no_progress > 25) {
      throw std::runtime_error(
          "logconcave_mle: stalled before reaching the optimality certificate");
    }
    prev_violation = best_v;

    // insert the most violating hinge and push strictly inside the cone
    const auto pos = std::lower_bound(prob.knots.begin(), prob.knots.end(), best);
    const std::size_t j = static_cast<std::size_t>(pos - prob.knots.begin());
    prob.knots.insert(pos, best);
    prob.psi.insert(prob.psi.begin() + static_cast<std::ptrdiff_t>(j),
                    phi_full[best]);
    prob.refresh_collapsed();

    std::vector<double> dir(prob.knots.size(), 0.0);
    for (std::size_t q = 0; q < prob.knots.size(); ++q) {
      const double dt = t[prob.knots[q]] - t[best];
      dir[q] = std::min(dt, 0.0) / range;  // normalized hinge direction
    }
    const double l0 = prob.objective(prob.psi);
    double eps = 1.0;
    std::vector<double> trial(prob.psi.size());
    for (int back = 0; back < 80; ++back) {
      for (std::size_t q = 0; q < trial.size(); ++q)
        trial[q] = prob.psi[q] + eps * dir[q];
      if (prob.objective(trial) > l0) {
        prob.psi = trial;
        break;
      }
      eps *= 0.5;
    }
  }
  throw std::runtime_error("logconcave_mle: active-set iteration cap exceeded");
}

std::string fit_to_json(const LogConcaveFit& fit) {
  nlohmann::json j;
  j["atoms"] = fit.atoms();
  j["weights"] = fit.weights();
  j["phi"] = fit.phi();
  j["knots"] = fit.knots();
  return j.dump(2);
}

LogConcaveFit fit_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return LogConcaveFit(j.at("atoms").get<std::vector<double>>(),
                       j.at("weights").get<std::vector<double>>(),
                       j.at("phi").get<std::vector<double>>());
}

}  // namespace cfdens
