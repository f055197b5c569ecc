#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfdens {

//! Observational dataset (X, A, Y): covariate matrix, binary treatment,
//! real outcome. Validated on construction and immutable afterwards.
class ObservedSample {
 public:
  // x is row-major n*d. Throws std::invalid_argument on any invariant
  // violation: mismatched sizes, n < 2, non-binary treatment, NaN/Inf.
  ObservedSample(std::vector<double> x, std::size_t d, std::vector<int> a,
                 std::vector<double> y);

  std::size_t n() const { return y_.size(); }
  std::size_t d() const { return d_; }

  std::span<const double> row(std::size_t i) const {
    return {x_.data() + i * d_, d_};
  }
  int treatment(std::size_t i) const { return a_[i]; }
  double outcome(std::size_t i) const { return y_[i]; }

  const std::vector<int>& treatments() const { return a_; }
  const std::vector<double>& outcomes() const { return y_; }

  std::size_t arm_count(int arm) const;

  // Rows with A_i == arm, order preserved.
  std::vector<std::size_t> arm_rows(int arm) const;

  // Sub-sample restricted to the given rows (copying), order preserved.
  ObservedSample subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<double> x_;
  std::size_t d_;
  std::vector<int> a_;
  std::vector<double> y_;
};

//! Equally spaced grid s_1 < ... < s_m used by the monotone correction.
class IsoGrid {
 public:
  // Validates strict increase, m >= 4 and equal spacing (1e-12 relative).
  explicit IsoGrid(std::vector<double> points);

  // Builds points by index arithmetic lower + j*delta, j = 0..count-1,
  // so spacing is bit-stable.
  static IsoGrid regular(double lower, double delta, std::size_t count);

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double delta() const { return delta_; }
  double lower() const { return points_.front(); }
  double upper() const { return points_.back(); }

 private:
  std::vector<double> points_;
  double delta_;
};

struct CsvOptions {
  char delimiter = ',';
};

// Reads a CSV with a header row into a validated sample. Rejects missing
// columns, non-numeric cells, non-binary treatment values and empty files.
ObservedSample load_csv(const std::string& path,
                        const std::vector<std::string>& covariate_columns,
                        const std::string& treatment_column,
                        const std::string& outcome_column,
                        const CsvOptions& options = {});

// Grid rule: delta = (max - min)/n over arm-a outcomes with n the TOTAL
// sample size, lower = min - delta, upper = max. `resolution` substitutes
// for n when provided (finer or coarser grids on user request).
IsoGrid default_grid(const ObservedSample& sample, int arm,
                     std::optional<std::size_t> resolution = std::nullopt);

}  // namespace cfdens
