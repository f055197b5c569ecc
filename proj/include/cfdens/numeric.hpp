#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace cfdens {

// Deterministic pairwise summation. The reduction tree depends only on the
// length, so results are bit-identical across runs and thread counts as long
// as the input order is fixed.
double pairwise_sum(std::span<const double> v);

// mean via pairwise_sum; empty input is an error.
double pairwise_mean(std::span<const double> v);

double expit(double t);

// Standard normal CDF.
double normal_cdf(double z);

// Adaptive Simpson quadrature with absolute tolerance.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol, int max_depth = 40);

// Composite Gauss-Legendre quadrature with fixed node count per panel.
// Exact for smooth integrands at modest panel counts; used where the
// integrand is piecewise smooth with known break points.
double integrate_gl(const std::function<double(double)>& f, double a, double b,
                    int points_per_panel = 32, int panels = 1);

// Nodes/weights on [-1,1], cached per order.
const std::vector<double>& gl_nodes(int order);
const std::vector<double>& gl_weights(int order);

// Lower empirical quantile (order statistic): smallest x such that at least
// ceil(p * n) observations are <= x. `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double p);

// Index-chunked parallel loop. Work is partitioned by index only, so any
// thread count yields the same per-index results. threads <= 1 runs inline.
void parallel_for(std::size_t begin, std::size_t end, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace cfdens
