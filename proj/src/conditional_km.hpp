#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "semicomp/data.hpp"
#include "semicomp/survival.hpp"

namespace semicomp::detail {

// Evaluates the kernel-weighted product limit
//
//   S_{1|A=a,T2=s}(v) = prod_{u <= v} [1 - sum_{t1_i = u, d1_i = 1} K_i / sum_j Y_j(u) K_j]
//
// over the deaths of one arm, where K_i = K((x(s) - x(t2_i))/h) and Y_j is the
// delayed-entry risk indicator for the first gap time. Tied disease times
// are grouped, as in the ordinary product limit. The kernel axis x is the
// time itself or the empirical CDF of the arm's death times.
//
// For increasing s the kernel window slides along the deaths sorted by t2,
// and its members are kept sorted by a total key, so each evaluation costs
// O(window) and its result depends only on s, never on the visiting order.
class ConditionalKmEngine {
 public:
  ConditionalKmEngine(const Dataset& data, int a, KernelFamily family, double bandwidth,
                      KernelScale scale = KernelScale::time);

  // Curve at s restricted to v <= s: knots are diseased t1 <= s carrying
  // positive weight, values are the running product (1 before the first knot).
  struct Curve {
    std::span<const double> knots;
    std::span<const double> values;
    double at(double v) const;
    double final_value() const { return values.empty() ? 1.0 : values.back(); }
  };

  using Visitor = std::function<void(std::size_t, double, const Curve&)>;

  // Visits points[k] for every k (points must be non-decreasing). Throws
  // DegenerateWeights when no death has positive weight at a point. Safe to
  // call concurrently.
  void for_each(std::span<const double> points, const Visitor& visit) const;

  std::size_t deaths() const { return members_.size(); }

 private:
  struct Member {
    double t1;
    double t2;
    double entry;
    double key;  // position on the kernel axis
    int d1;
    std::size_t order;  // tie breaker making the window order total
  };
  struct State;
  void evaluate(double s, State& st) const;
  double key_of(double s) const;

  KernelFamily family_;
  KernelScale scale_;
  double h_;
  double reach_;
  bool truncated_;
  std::vector<Member> members_;  // sorted by t2
};

}  // namespace semicomp::detail
