#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cfdens/data.hpp"

namespace cfdens {

enum class CdfState { raw, clamped, isotonized };

//! CDF values on an IsoGrid. `raw` is the uncorrected one-step output and
//! may leave [0,1] or be non-monotone; `clamped` is within [0,1];
//! `isotonized` is a proper step CDF with endpoints pinned to 0 and 1.
struct SteppedCdf {
  IsoGrid grid;
  std::vector<double> values;
  CdfState state = CdfState::raw;

  SteppedCdf(IsoGrid g, std::vector<double> v, CdfState s);
};

// Elementwise projection onto [0,1].
SteppedCdf clamp01(const SteppedCdf& cdf);

// Least-squares isotonic regression (unit weights) via the pool-adjacent-
// violators algorithm; linear time, exact block averages.
std::vector<double> pava(std::span<const double> v);

// Isotonizes the interior values s_2..s_{m-1} and pins the endpoints to
// 0 and 1.
SteppedCdf isotonize(const SteppedCdf& cdf);

// Right-continuous step evaluation: 0 below s_2, 1 at and above the upper
// bound, otherwise the value at the largest grid point <= s.
double eval_step(const SteppedCdf& cdf, double s);

// d1(F, G) = integral of |F - G| over `bounds`, split at F's grid points.
double wasserstein1(const SteppedCdf& f, const std::function<double(double)>& g,
                    double lower, double upper, double abs_tol = 1e-6);

}  // namespace cfdens
