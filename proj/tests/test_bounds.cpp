#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "semicomp/bounds.hpp"
#include "semicomp/components.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/simulation.hpp"

using namespace semicomp;
using testing::rec;

namespace {

BoundsResult constant_bounds(const std::string& variant, double lo, double hi, double end) {
  BoundsResult b;
  b.variant = variant;
  b.grid = {0.0, end / 2};
  b.support_end = end;
  for (auto& e : b.effects) {
    e.lower = StepFunction(b.grid, {lo, lo}, lo);
    e.upper = StepFunction(b.grid, {hi, hi}, hi);
    e.flags = {0, 0};
  }
  return b;
}

Dataset with_z(const Dataset& d, const std::vector<std::string>& levels) {
  std::vector<ObservedRecord> rs = d.records();
  for (std::size_t i = 0; i < rs.size(); ++i) rs[i].z = levels[i % levels.size()];
  return Dataset(rs);
}

}  // namespace

TEST_SUITE("bounds") {
  TEST_CASE("stratum proportions") {
    const auto p = strata_proportions(0.491, 0.848);
    CHECK(std::abs(p.pi_ad - 0.491) < 1e-12);
    CHECK(std::abs(p.pi_nd - 0.152) < 1e-12);
    CHECK(std::abs(p.pi_dh - 0.357) < 1e-12);
    CHECK(p.pi_ad + p.pi_nd + p.pi_dh == 1.0);
    const auto all = strata_proportions(1.0, 1.0);
    CHECK(all.pi_ad == 1.0);
    CHECK(all.pi_nd == 0.0);
    CHECK(all.pi_dh == 0.0);
    const auto v = strata_proportions(0.6, 0.5);
    CHECK(v.order_violation);
    CHECK(v.pi_ad == 0.5);
    CHECK(v.pi_nd == 0.5);
    CHECK(v.pi_dh == 0.0);
  }

  TEST_CASE("pointwise bound formulas") {
    // lower: max{0, 1 - 0.6/0.5} - 0.3
    CHECK(bound_t2_ad(0.6, 0.0, 0.5, 0.3).lower == doctest::Approx(-0.3));
    // upper: min{1, 0.4 * 1 / 0.5} - 0.5
    CHECK(bound_t2_ad(0.6, 0.4, 0.5, 0.5).upper == doctest::Approx(0.3));
    // nd: lower max{0, 1 - S2|0/(1-eta1)} ... symmetric roles
    const Interval nd = bound_t2_nd(0.2, 0.1, 0.9, 0.5);
    CHECK(nd.lower <= nd.upper);
    const Interval t1 = bound_t1_ad(0.7, 0.3, 0.5, 0.2);
    CHECK(t1.lower <= t1.upper);
    CHECK(t1.lower >= -1.0);
    CHECK(t1.upper <= 1.0);
  }

  TEST_CASE("all diseased arm: eta is one and the ad curve is the marginal curve") {
    std::vector<ObservedRecord> rs;
    for (int i = 1; i <= 20; ++i) rs.push_back(rec(0, 0.5 * i, 1, 0.5 * i + 0.3, 1));
    rs.push_back(rec(1, 1, 0, 1, 1));
    const Dataset d(rs);
    // bandwidth below the spacing of deaths: each death only sees itself
    const ComponentSet c = estimate_components(d, 0, KernelSpec{KernelFamily::epanechnikov, 0.2, KernelScale::time}, {});
    CHECK(c.eta == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 0; k < c.grid.size(); ++k)
      CHECK(c.s2_ad()(c.grid[k]) == doctest::Approx(c.s2(c.grid[k])).epsilon(1e-12));
    CHECK_THROWS_AS(c.s2_nd(), DegenerateEta);
  }

  TEST_CASE("never diseased arm: eta is zero and the nd curve is the marginal curve") {
    std::vector<ObservedRecord> rs;
    for (int i = 1; i <= 20; ++i) rs.push_back(rec(0, 0.5 * i, 0, 0.5 * i, i % 4 ? 1 : 0));
    rs.push_back(rec(1, 1, 0, 1, 1));
    const Dataset d(rs);
    const ComponentSet c = estimate_components(d, 0, KernelSpec{KernelFamily::epanechnikov, 1.0, KernelScale::time}, {});
    CHECK(c.eta == 0.0);
    // before the last death; afterwards the KM tail mass sits at that death
    for (double t : c.grid)
      if (t < c.support_end) CHECK(c.s2_nd()(t) == doctest::Approx(c.s2(t)).epsilon(1e-12));
    CHECK_THROWS_AS(c.s2_ad(), DegenerateEta);
  }

  TEST_CASE("eta on complete data matches the empirical fraction") {
    const Dataset d = testing::exp_idm_data(10000, {1.0, 0.6, 1.5}, {0.5, 1.0, 1.0}, 0.0, 17);
    for (int a : {0, 1}) {
      double frac = 0, n = 0;
      for (const auto& r : d.records())
        if (r.a == a) {
          frac += r.delta1;
          ++n;
        }
      const ComponentSet c = estimate_components(d, a, KernelSpec{}, {});
      CHECK(std::abs(c.eta - frac / n) < 0.02);
      // the T1 distribution plateaus at eta
      CHECK(c.f1(c.grid.back()) == doctest::Approx(c.eta).epsilon(1e-9));
      CHECK(c.s1.non_increasing());
    }
  }

  TEST_CASE("null world: bounds contain zero") {
    const Dataset d = testing::exp_idm_data(3000, {1, 1, 1}, {1, 1, 1}, 0.3, 23);
    const std::vector<double> grid{0.2, 0.5, 1.0, 1.5};
    const auto c0 = estimate_components(d, 0, KernelSpec{}, grid);
    const auto c1 = estimate_components(d, 1, KernelSpec{}, grid);
    const BoundsResult b = bounds_unadjusted(c0, c1, grid);
    for (BoundEffect e : kBoundEffects)
      for (std::size_t k = 0; k < grid.size(); ++k) {
        CHECK(b[e].lower.values()[k] <= 0.03);
        CHECK(b[e].upper.values()[k] >= -0.03);
      }
    // identical arms give a zero ranked lower bound
    const auto same = bounds_ranked_lower(c0, c0, grid);
    for (double v : same.values()) CHECK(v == 0.0);
  }

  TEST_CASE("ranked lower bound dominates the plain lower bound on simulated data") {
    ScenarioConfig sc = load_scenario(testing::scenario_path("scn1.toml"));
    sc.n = 4000;
    const Dataset d = simulate(sc).data;
    std::vector<double> grid;
    for (double t = 1; t <= 12; t += 1) grid.push_back(t);
    const auto c0 = estimate_components(d, 0, KernelSpec{}, grid);
    const auto c1 = estimate_components(d, 1, KernelSpec{}, grid);
    const auto b = bounds_unadjusted(c0, c1, grid);
    const auto r = bounds_ranked_lower(c0, c1, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (grid[k] <= b.support_end) CHECK(r.values()[k] >= b[BoundEffect::t1_ad].lower.values()[k] - 1e-12);
  }

  TEST_CASE("single-level z gives exactly the unadjusted bounds") {
    const Dataset d = with_z(testing::exp_idm_data(400, {1, 1, 1}, {1.5, 0.8, 1}, 0.3, 29), {"only"});
    const std::vector<double> grid{0.2, 0.4, 0.8};
    const KernelSpec k{KernelFamily::epanechnikov, 0.3, KernelScale::time};
    const auto u = bounds_unadjusted(estimate_components(d, 0, k, grid), estimate_components(d, 1, k, grid), grid);
    const auto a = bounds_adjusted(d, k, grid);
    for (BoundEffect e : kBoundEffects) {
      CHECK(a[e].lower.values() == u[e].lower.values());
      CHECK(a[e].upper.values() == u[e].upper.values());
    }
  }

  TEST_CASE("levels with identical data give the unadjusted bounds") {
    const Dataset base = testing::exp_idm_data(300, {1, 1, 1}, {1.5, 0.8, 1}, 0.3, 31);
    std::vector<ObservedRecord> rs;
    for (const char* level : {"p", "q"})
      for (auto r : base.records()) {
        r.z = level;
        rs.push_back(r);
      }
    const Dataset d(rs);
    const std::vector<double> grid{0.2, 0.4, 0.8};
    const KernelSpec k{KernelFamily::epanechnikov, 0.3, KernelScale::time};
    const auto u = bounds_unadjusted(estimate_components(d, 0, k, grid), estimate_components(d, 1, k, grid), grid);
    const auto a = bounds_adjusted(d, k, grid);
    for (BoundEffect e : kBoundEffects)
      for (std::size_t g = 0; g < grid.size(); ++g) {
        CHECK(a[e].lower.values()[g] == doctest::Approx(u[e].lower.values()[g]).epsilon(1e-12));
        CHECK(a[e].upper.values()[g] == doctest::Approx(u[e].upper.values()[g]).epsilon(1e-12));
      }
  }

  TEST_CASE("empty z cell is reported") {
    std::vector<ObservedRecord> rs = testing::exp_idm_data(50, {}, {}, 0.0, 3).records();
    for (auto& r : rs) r.z = r.a == 0 ? "x" : "y";
    CHECK_THROWS_AS(bounds_adjusted(Dataset(rs), KernelSpec{}, std::vector<double>{0.5}), EmptyCell);
  }

  TEST_CASE("combining bounds") {
    BoundsResult u = constant_bounds("unadj", 0.1, 0.5, 10), a = constant_bounds("adj", 0.2, 0.4, 10);
    const auto c = combine_bounds(u, a);
    CHECK(c.variant == "combined");
    CHECK(c[BoundEffect::t2_ad].lower.values()[0] == 0.2);
    CHECK(c[BoundEffect::t2_ad].upper.values()[0] == 0.4);
    const auto same = combine_bounds(u, u);
    CHECK(same[BoundEffect::t1_ad].lower.values() == u[BoundEffect::t1_ad].lower.values());
    // crossing envelopes collapse to the midpoint and are flagged
    const auto x = combine_bounds(constant_bounds("unadj", 0.1, 0.3, 10), constant_bounds("adj", 0.35, 0.6, 10));
    CHECK(x[BoundEffect::t2_nd].lower.values()[0] == doctest::Approx(0.325));
    CHECK(x[BoundEffect::t2_nd].upper.values()[0] == doctest::Approx(0.325));
    CHECK((x[BoundEffect::t2_nd].flags[0] & bound_flags::clipped) != 0);
  }

  TEST_CASE("restricted-mean bounds") {
    const auto zero = rmst_bounds(constant_bounds("unadj", 0, 0, 20), 10);
    CHECK(zero.t2_ad.lower == 0.0);
    CHECK(zero.t2_ad.upper == 0.0);
    const auto r = rmst_bounds(constant_bounds("unadj", -0.1, 0.2, 20), 10);
    CHECK(r.t2_ad.lower == doctest::Approx(-2.0));
    CHECK(r.t2_ad.upper == doctest::Approx(1.0));
    CHECK(r.gap_ad.lower == doctest::Approx(-2.0 - 1.0));
    CHECK(r.gap_ad.upper == doctest::Approx(1.0 + 2.0));
    CHECK_THROWS_AS(rmst_bounds(constant_bounds("unadj", 0, 0, 5), 10), BeyondSupport);
  }

  TEST_CASE("true restricted-mean effects fall inside the bound intervals") {
    ScenarioConfig sc = load_scenario(testing::scenario_path("scn1.toml"));
    std::vector<double> grid;
    for (double t = 0.25; t <= 10; t += 0.25) grid.push_back(t);
    const PopulationTruth truth = population_functionals(sc, grid, 10.0, 200000);
    ComponentSet c[2];
    for (int a : {0, 1}) c[a] = components_from_values(a, grid, truth.components[a], 1e9);
    const auto b = bounds_unadjusted(c[0], c[1], grid);
    const auto r = rmst_bounds(b, 10.0);
    // step-function integration of the envelopes on a 0.25 grid is coarse
    const double slack = 0.3;
    CHECK(truth[EffectId::t2_ad_rmst].estimate >= r.t2_ad.lower - slack);
    CHECK(truth[EffectId::t2_ad_rmst].estimate <= r.t2_ad.upper + slack);
    CHECK(truth[EffectId::t1_ad_rmst].estimate >= r.t1_ad.lower - slack);
    CHECK(truth[EffectId::t1_ad_rmst].estimate <= r.t1_ad.upper + slack);
    CHECK(truth[EffectId::t2_nd_rmst].estimate >= r.t2_nd.lower - slack);
    CHECK(truth[EffectId::t2_nd_rmst].estimate <= r.t2_nd.upper + slack);
  }
}
