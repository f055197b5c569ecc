#include "cfdens/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cfdens {

ObservedSample::ObservedSample(std::vector<double> x, std::size_t d,
                               std::vector<int> a, std::vector<double> y)
    : x_(std::move(x)), d_(d), a_(std::move(a)), y_(std::move(y)) {
  const std::size_t n = y_.size();
  if (n < 2) throw std::invalid_argument("ObservedSample: need at least 2 rows");
  if (a_.size() != n)
    throw std::invalid_argument("ObservedSample: treatment/outcome length mismatch");
  if (d_ == 0 || x_.size() != n * d_)
    throw std::invalid_argument("ObservedSample: covariate matrix shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (a_[i] != 0 && a_[i] != 1)
      throw std::invalid_argument("ObservedSample: non-binary treatment");
    if (!std::isfinite(y_[i]))
      throw std::invalid_argument("ObservedSample: non-finite outcome");
  }
  for (double v : x_)
    if (!std::isfinite(v))
      throw std::invalid_argument("ObservedSample: non-finite covariate");
}

std::size_t ObservedSample::arm_count(int arm) const {
  std::size_t c = 0;
  for (int a : a_) c += (a == arm);
  return c;
}

std::vector<std::size_t> ObservedSample::arm_rows(int arm) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < a_.size(); ++i)
    if (a_[i] == arm) rows.push_back(i);
  return rows;
}

ObservedSample ObservedSample::subset(std::span<const std::size_t> rows) const {
  std::vector<double> x;
  std::vector<int> a;
  std::vector<double> y;
  x.reserve(rows.size() * d_);
  a.reserve(rows.size());
  y.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= n()) throw std::invalid_argument("subset: row index out of range");
    const auto rv = row(r);
    x.insert(x.end(), rv.begin(), rv.end());
    a.push_back(a_[r]);
    y.push_back(y_[r]);
  }
  return ObservedSample(std::move(x), d_, std::move(a), std::move(y));
}

IsoGrid::IsoGrid(std::vector<double> points) : points_(std::move(points)) {
  const std::size_t m = points_.size();
  if (m < 4) throw std::invalid_argument("IsoGrid: need at least 4 points");
  delta_ = (points_.back() - points_.front()) / static_cast<double>(m - 1);
  if (!(delta_ > 0.0) || !std::isfinite(delta_))
    throw std::invalid_argument("IsoGrid: points must be strictly increasing");
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double gap = points_[j + 1] - points_[j];
    if (!(gap > 0.0))
      throw std::invalid_argument("IsoGrid: points must be strictly increasing");
    if (std::abs(gap - delta_) > 1e-12 * std::max(1.0, std::abs(delta_)) &&
        std::abs(gap - delta_) > 1e-12 * std::abs(gap))
      throw std::invalid_argument("IsoGrid: unequal spacing");
  }
}

IsoGrid IsoGrid::regular(double lower, double delta, std::size_t count) {
  if (count < 4) throw std::invalid_argument("IsoGrid: need at least 4 points");
  if (!(delta > 0.0)) throw std::invalid_argument("IsoGrid: delta must be positive");
  std::vector<double> pts(count);
  for (std::size_t j = 0; j < count; ++j)
    pts[j] = lower + static_cast<double>(j) * delta;
  return IsoGrid(std::move(pts));
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) {
    // strip surrounding whitespace and a trailing CR from CRLF files
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string()
                                         : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

double parse_cell(const std::string& s, std::size_t line_no,
                  const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("load_csv: non-numeric cell '" + s +
                             "' in column '" + col + "' at line " +
                             std::to_string(line_no));
  }
}

}  // namespace

ObservedSample load_csv(const std::string& path,
                        const std::vector<std::string>& covariate_columns,
                        const std::string& treatment_column,
                        const std::string& outcome_column,
                        const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error("load_csv: empty file '" + path + "'");
  const auto header = split_line(line, options.delimiter);

  auto find_col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("load_csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> xcols;
  xcols.reserve(covariate_columns.size());
  for (const auto& c : covariate_columns) xcols.push_back(find_col(c));
  const std::size_t acol = find_col(treatment_column);
  const std::size_t ycol = find_col(outcome_column);

  std::vector<double> x;
  std::vector<int> a;
  std::vector<double> y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line, options.delimiter);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: wrong field count at line " +
                               std::to_string(line_no));
    for (std::size_t k = 0; k < xcols.size(); ++k)
      x.push_back(parse_cell(cells[xcols[k]], line_no, covariate_columns[k]));
    const double av = parse_cell(cells[acol], line_no, treatment_column);
    if (av != 0.0 && av != 1.0)
      throw std::runtime_error("load_csv: non-binary treatment value at line " +
                               std::to_string(line_no));
    a.push_back(static_cast<int>(av));
    y.push_back(parse_cell(cells[ycol], line_no, outcome_column));
  }
  if (y.empty())
    throw std::runtime_error("load_csv: no data rows in '" + path + "'");
  return ObservedSample(std::move(x), covariate_columns.size(), std::move(a),
                        std::move(y));
}

IsoGrid default_grid(const ObservedSample& sample, int arm,
                     std::optional<std::size_t> resolution) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t in_arm = 0;
  for (std::size_t i = 0; i < sample.n(); ++i) {
    if (sample.treatment(i) != arm) continue;
    ++in_arm;
    lo = std::min(lo, sample.outcome(i));
    hi = std::max(hi, sample.outcome(i));
  }
  if (in_arm == 0) throw std::runtime_error("default_grid: empty treatment arm");
  if (!(hi > lo))
    throw std::runtime_error("default_grid: degenerate grid (all arm outcomes equal)");
  const std::size_t denom = resolution.value_or(sample.n());
  if (denom < 2) throw std::invalid_argument("default_grid: resolution too small");
  const double delta = (hi - lo) / static_cast<double>(denom);
  const double lower = lo - delta;
  if (!(lower < lo))
    throw std::runtime_error("default_grid: degenerate grid (range below precision)");
  std::vector<double> pts(denom + 2);
  for (std::size_t j = 0; j < pts.size(); ++j)
    pts[j] = lower + static_cast<double>(j) * delta;
  pts.back() = hi;  // pin the top node to the arm maximum exactly
  return IsoGrid(std::move(pts));
}

}  // namespace cfdens
