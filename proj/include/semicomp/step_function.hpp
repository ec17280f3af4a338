#pragma once

#include <cstddef>
#include <vector>

namespace semicomp {

// Right-continuous piecewise-constant function. Before the first knot the
// function equals value_at_zero; at and after knot k it equals values[k].
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> knots, std::vector<double> values, double value_at_zero);

  // Constant function.
  static StepFunction constant(double value) { return StepFunction({}, {}, value); }

  double operator()(double t) const;
  double left_limit(double t) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  double value_at_zero() const { return value_at_zero_; }
  std::size_t size() const { return knots_.size(); }
  bool empty() const { return knots_.empty(); }
  double last_knot() const;

  // Integral over [0, upper]; the last value is extended to the right.
  double integral(double upper) const;

  // True when values never increase (survival-flavoured curves).
  bool non_increasing() const;

  friend bool operator==(const StepFunction&, const StepFunction&) = default;

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
  double value_at_zero_ = 0.0;
};

}  // namespace semicomp
