#pragma once

#include <optional>
#include <span>
#include <vector>

#include "semicomp/data.hpp"
#include "semicomp/step_function.hpp"
#include "semicomp/survival.hpp"

namespace semicomp {

// Identified distributional components of one arm. Every curve is a step
// function whose knots are the evaluation grid, so values are exact at grid
// points. "ad" below means the sub-population with T1 <= T2 (disease first)
// and "nd" the one with T1 > T2 (death first).
struct ComponentSet {
  int arm = 0;
  KernelFamily family = KernelFamily::epanechnikov;
  KernelScale scale = KernelScale::rank;
  double bandwidth = 0.0;
  std::vector<double> grid;
  double support_end = 0.0;  // last observed death time

  double eta = 0.0;    // Pr(T1 <= T2)
  StepFunction s2;     // S_2 (Kaplan-Meier, own knots)
  StepFunction f2;     // Pr(T2 <= t), with the tail mass put at the last death
  StepFunction h;      // Pr(T1 <= T2, T2 <= t) = eta_{T2<=t} * F_2(t)
  StepFunction g;      // Pr(T1 > T2, T2 <= t) = (1 - eta_{T2<=t}) * F_2(t)
  StepFunction eta_t2; // Pr(T1 <= T2 | T2 <= t), 0 where nobody has died yet
  StepFunction s1;     // Pr(T1 > t), T1 = infinity when death comes first
  StepFunction f1;     // Pr(T1 <= t) = eta * F_{1|T1<=T2}(t)

  // Curves conditional on the disease-first / death-first events. Empty when
  // the conditioning event has (numerically) zero probability.
  std::optional<StepFunction> s1_ad_curve;
  std::optional<StepFunction> s2_ad_curve;
  std::optional<StepFunction> s2_nd_curve;

  // Accessors throw DegenerateEta when the conditioning event is empty.
  const StepFunction& s1_ad() const;
  const StepFunction& s2_ad() const;
  const StepFunction& s2_nd() const;
};

// Probabilities below this are treated as an empty conditioning event.
inline constexpr double kEtaDegenerate = 1e-12;

// Sorted distinct observed event times (t1 with d1 = 1, t2 with d2 = 1) of
// both arms, merged with `extra`.
std::vector<double> default_grid(const Dataset& data, std::span<const double> extra = {});

// Nonparametric components of arm a from the Kaplan-Meier estimate of T2 and
// the kernel-smoothed conditional KM of T1 given T2. Integrals against dS_2
// are sums over the KM jumps; the KM mass left after the last death (when
// the largest time is censored) is placed at that death.
ComponentSet estimate_components(const Dataset& data, int a, const KernelSpec& kernel,
                                 std::span<const double> t_grid);

// Builds a ComponentSet from component values at the grid points (used for
// population-level plug-in calculations).
struct ComponentValues {
  double eta = 0.0;
  StepFunction s2;
  std::vector<double> h, g, s1;  // one value per grid point
};
ComponentSet components_from_values(int arm, std::vector<double> grid, ComponentValues v,
                                    double support_end);

}  // namespace semicomp
