#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semicomp/components.hpp"
#include "semicomp/data.hpp"
#include "semicomp/step_function.hpp"
#include "semicomp/survival.hpp"

namespace semicomp {

struct StrataProportions {
  double pi_ad = 0.0;
  double pi_nd = 0.0;
  double pi_dh = 0.0;
  bool order_violation = false;  // eta_1 < eta_0, pi_dh clipped to 0
};

StrataProportions strata_proportions(double eta0, double eta1);
StrataProportions strata_proportions(const ComponentSet& c0, const ComponentSet& c1);

// The three probability-difference effects:
//   t2_ad: Pr(T2(1) <= t | ad) - Pr(T2(0) <= t | ad)
//   t2_nd: Pr(T2(1) <= t | nd) - Pr(T2(0) <= t | nd)
//   t1_ad: Pr(T1(1) <= t | ad) - Pr(T1(0) <= t | ad)
enum class BoundEffect { t2_ad = 0, t2_nd = 1, t1_ad = 2 };
inline constexpr std::array<BoundEffect, 3> kBoundEffects{BoundEffect::t2_ad, BoundEffect::t2_nd,
                                                          BoundEffect::t1_ad};
const char* bound_effect_name(BoundEffect e);

// Per-grid-point flags.
namespace bound_flags {
inline constexpr std::uint32_t beyond_support = 1;   // t past the last death of an arm
inline constexpr std::uint32_t clipped = 2;          // lower > upper collapsed to midpoint
inline constexpr std::uint32_t empty_condition = 4;  // no death yet in the conditioning arm
inline constexpr std::uint32_t extension = 8;        // covariate-adjusted nd / T1 analogue
inline constexpr std::uint32_t rank_assumption = 16; // needs rank preservation of T1
}  // namespace bound_flags

std::string describe_flags(std::uint32_t flags);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct EffectBounds {
  StepFunction lower;  // knots = grid, value 0 before the first grid point
  StepFunction upper;
  std::vector<std::uint32_t> flags;  // one per grid point
};

struct BoundsResult {
  std::string variant;  // unadj, adj, ranked, combined
  std::vector<double> grid;
  std::array<EffectBounds, 3> effects;
  StrataProportions strata;
  double support_end = 0.0;  // min over arms of the last death time

  const EffectBounds& operator[](BoundEffect e) const {
    return effects[static_cast<std::size_t>(e)];
  }
  EffectBounds& operator[](BoundEffect e) { return effects[static_cast<std::size_t>(e)]; }
};

// Point-level bound formulas. Arguments are values at one time t.
//   s2_1 = S_{2|A=1}, h_1 = F_{2|A=1} * eta_{A=1,T2<=t}, f2_ad0 = F_{2|A=0,T1<=T2}
Interval bound_t2_ad(double s2_1, double h_1, double eta0, double f2_ad0);
//   f2_nd1 = F_{2|A=1,T1>T2}, g_0 = F_{2|A=0} * (1 - eta_{A=0,T2<=t}), s2_0 = S_{2|A=0}
Interval bound_t2_nd(double f2_nd1, double g_0, double s2_0, double eta1);
//   s1_1 = S_{1|A=1}, f1_1 = F_{1|A=1}, f1_ad0 = F_{1|A=0,T1<=T2}
Interval bound_t1_ad(double s1_1, double f1_1, double eta0, double f1_ad0);

// Bounds under randomization, order preservation and the exclusion of the
// disease-protected stratum. Throws DegenerateEta when eta_0 = 0 or eta_1 = 1.
BoundsResult bounds_unadjusted(const ComponentSet& c0, const ComponentSet& c1,
                               std::span<const double> t_grid);

// Sharper lower bound for the T1 effect under rank preservation:
// F_{1|A=1,T1<=T2}(t) - F_{1|A=0,T1<=T2}(t).
StepFunction bounds_ranked_lower(const ComponentSet& c0, const ComponentSet& c1,
                                 std::span<const double> t_grid);

// One level of a discrete covariate: arm-specific level probabilities and the
// components estimated within the level.
struct ZCell {
  std::string level;
  double p_z_arm0 = 0.0;  // Pr(Z = z | A = 0)
  double p_z_arm1 = 0.0;  // Pr(Z = z | A = 1)
  ComponentSet c0, c1;
};

// Covariate-adjusted bounds: per-level bounds averaged with the stratum's
// level distribution, nu_ad(z) ~ Pr(Z=z|A=0) eta_{0,z} for the ad effects and
// nu_nd(z) ~ Pr(Z=z|A=1) (1 - eta_{1,z}) for the nd effect.
BoundsResult bounds_adjusted(std::span<const ZCell> cells, std::span<const double> t_grid);
BoundsResult bounds_adjusted(const Dataset& data, const KernelSpec& kernel,
                             std::span<const double> t_grid);

// Pointwise max of lowers and min of uppers; crossings collapse to the
// midpoint and are flagged.
BoundsResult combine_bounds(const BoundsResult& unadj, const BoundsResult& adj);

// Intervals for the restricted-mean effects at t_star:
//   t2_ad  E[min(T2,t*)(1) - min(T2,t*)(0) | ad]
//   t1_ad  same for T1
//   gap_ad difference of the two (interval subtraction)
//   t2_nd  E[min(T2,t*)(1) - min(T2,t*)(0) | nd]
struct RmstBounds {
  double t_star = 0.0;
  Interval t2_ad, t1_ad, gap_ad, t2_nd;
};

// Throws BeyondSupport when t_star exceeds bounds.support_end.
RmstBounds rmst_bounds(const BoundsResult& bounds, double t_star);

}  // namespace semicomp
