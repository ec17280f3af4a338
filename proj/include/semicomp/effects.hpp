#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semicomp/frailty.hpp"
#include "semicomp/idm.hpp"
#include "semicomp/step_function.hpp"

namespace semicomp {

// Frailty-conditional distribution of one arm's illness-death path given
// (gamma, x), with the fitted Breslow baselines taken as hazards that act
// within each jump as a constant competing-risk intensity.
//   eta     Pr(T1 <= T2)
//   d1(t)   Pr(T1 <= t, T1 <= T2)
//   n2(t)   Pr(T1 <= T2 <= t)
//   m2(t)   Pr(T2 <= t, T1 > T2)
// Conditional CDFs: F1|ad = d1/eta, F2|ad = n2/eta, F2|nd = m2/(1-eta).
struct ConditionalFunctionals {
  double eta = 0.0;
  std::vector<double> grid;
  std::vector<double> d1, n2, m2;

  std::vector<double> f1_ad() const;
  std::vector<double> f2_ad() const;
  std::vector<double> f2_nd() const;
};

ConditionalFunctionals conditional_functionals(const IdmFit& fit, double gamma,
                                               std::span<const double> x,
                                               std::span<const double> t_grid);

// Same quantities estimated from m simulated paths of the discretized
// process; an independent check of the exact sweep.
ConditionalFunctionals conditional_functionals_microsim(const IdmFit& fit, double gamma,
                                                        std::span<const double> x,
                                                        std::span<const double> t_grid,
                                                        std::size_t m, std::uint64_t seed);

// The seven effects. Curves are differences of CDFs at each t; restricted
// means are E[min(T, t*)] differences; medians use min(median, t*).
enum class EffectId {
  t2_ad_curve,   // Pr(T2(1)<=t|ad) - Pr(T2(0)<=t|ad)
  t2_nd_curve,   // Pr(T2(1)<=t|nd) - Pr(T2(0)<=t|nd)
  t1_ad_curve,   // Pr(T1(1)<=t|ad) - Pr(T1(0)<=t|ad)
  t2_ad_rmst,    // E[min(T2,t*)(1) - min(T2,t*)(0) | ad]
  t1_ad_rmst,    // same for T1
  gap_ad_rmst,   // t2_ad_rmst - t1_ad_rmst
  t2_nd_rmst,    // E[min(T2,t*)(1) - min(T2,t*)(0) | nd]
  t2_ad_median,  // difference of min(median, t*) of the stratum's mixed CDFs
  t1_ad_median,
  t2_nd_median,
};
const char* effect_name(EffectId e);
inline constexpr std::array<EffectId, 7> kScalarEffects{
    EffectId::t2_ad_rmst,   EffectId::t1_ad_rmst,   EffectId::gap_ad_rmst, EffectId::t2_nd_rmst,
    EffectId::t2_ad_median, EffectId::t1_ad_median, EffectId::t2_nd_median};
inline constexpr std::array<EffectId, 3> kCurveEffects{EffectId::t2_ad_curve, EffectId::t2_nd_curve,
                                                       EffectId::t1_ad_curve};

struct EffectRequest {
  std::vector<double> t_grid;  // times for the curve effects
  double t_star = 0.0;
  FrailtySpec frailty;         // variances and cross-world correlation
  std::size_t draws = 10000;   // Monte Carlo size B
  // Covariate profiles: rows resampled with replacement for each draw; a
  // single row gives a fixed profile. Empty when the fits have no covariates.
  std::vector<std::vector<double>> x_pool;
};

struct ScalarEffect {
  double estimate = 0.0;
  double mc_se = 0.0;
};

struct EffectResult {
  double rho = 0.0;
  std::size_t draws = 0;
  double t_star = 0.0;
  std::vector<double> grid;
  std::array<std::vector<double>, 3> curve;  // indexed like kCurveEffects
  std::array<std::vector<double>, 3> curve_se;
  std::array<ScalarEffect, 7> scalar;        // indexed like kScalarEffects
  // model-implied stratum proportions averaged over draws
  double pi_ad = 0.0, pi_nd = 0.0, pi_dh = 0.0, pi_dp = 0.0;
  bool beyond_support = false;  // t* beyond the last baseline knot of a fit
  std::string frailty_construction;

  const ScalarEffect& operator[](EffectId e) const;
};

// Monte Carlo evaluation of the frailty-identified effects. Throws
// VanishingStratum when a stratum's total weight is below 1e-8 * B.
EffectResult frailty_effects(const IdmFit& fit0, const IdmFit& fit1, const EffectRequest& request,
                           std::uint64_t seed);

// Cross-check for independent gamma frailties: expectations over each
// frailty by generalized Gauss-Laguerre quadrature, averaging exactly over
// the covariate pool. Monte Carlo SEs are reported as 0.
EffectResult effects_independent_quadrature(const IdmFit& fit0, const IdmFit& fit1,
                                            const EffectRequest& request,
                                            std::size_t nodes = 40);

// frailty_effects for each rho with common random numbers.
std::vector<EffectResult> rho_sweep(const IdmFit& fit0, const IdmFit& fit1,
                                    const EffectRequest& request, std::span<const double> rhos,
                                    std::uint64_t seed);

}  // namespace semicomp
