#include "semicomp/step_function.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace semicomp {

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> values,
                           double value_at_zero)
    : knots_(std::move(knots)), values_(std::move(values)), value_at_zero_(value_at_zero) {
  if (knots_.size() != values_.size())
    throw std::invalid_argument("StepFunction: knots and values differ in length");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (!(knots_[i - 1] < knots_[i]))
      throw std::invalid_argument("StepFunction: knots must be strictly increasing");
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return value_at_zero_;
  return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

double StepFunction::left_limit(double t) const {
  auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return value_at_zero_;
  return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

double StepFunction::last_knot() const {
  return knots_.empty() ? 0.0 : knots_.back();
}

double StepFunction::integral(double upper) const {
  if (upper <= 0.0) return 0.0;
  double area = 0.0;
  double prev_t = 0.0;
  double prev_v = value_at_zero_;
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    const double t = knots_[i];
    if (t >= upper) break;
    if (t > prev_t) area += (t - prev_t) * prev_v;
    prev_t = std::max(prev_t, t);
    prev_v = values_[i];
  }
  area += (upper - prev_t) * prev_v;
  return area;
}

bool StepFunction::non_increasing() const {
  double prev = value_at_zero_;
  for (double v : values_) {
    if (v > prev) return false;
    prev = v;
  }
  return true;
}

}  // namespace semicomp
