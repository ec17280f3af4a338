#include <doctest.h>

#include <cmath>

#include "semicomp/effects.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"

using namespace semicomp;

namespace {

// Cumulative hazard rate * t on an equally spaced grid of knots.
StepFunction linear_cumhaz(double rate, double dt, double t_max) {
  std::vector<double> t, v;
  for (std::size_t k = 1; k * dt <= t_max + 1e-12; ++k) {
    t.push_back(k * dt);
    v.push_back(rate * k * dt);
  }
  return StepFunction(t, v, 0.0);
}

// Exponential illness-death fit with knots every dt on (0, t_max].
IdmFit exp_fit(double l01, double l02, double l12, double dt, double t_max, std::vector<double> beta = {}) {
  IdmFit f;
  f.transitions[0].cumhaz = linear_cumhaz(l01, dt, t_max);
  f.transitions[1].cumhaz = linear_cumhaz(l02, dt, t_max);
  f.transitions[2].cumhaz = linear_cumhaz(l12, dt, t_max);
  for (auto& tr : f.transitions) tr.beta = beta;
  return f;
}

EffectRequest request(double theta, double rho, std::size_t draws, double t_star = 2.0) {
  EffectRequest r;
  r.t_grid = {0.25, 0.5, 1.0, 1.5, 2.0, 3.0};
  r.t_star = t_star;
  r.frailty = {FrailtyFamily::gamma_corr, theta, theta, rho};
  r.draws = draws;
  return r;
}

// Integral of a right-continuous step (knots t, values v, 0 before t[0]) to s.
double step_integral(const std::vector<double>& t, const std::vector<double>& v, double s) {
  double area = 0.0;
  for (std::size_t k = 0; k < t.size() && t[k] < s; ++k) {
    const double next = k + 1 < t.size() ? std::min(t[k + 1], s) : s;
    area += v[k] * (next - t[k]);
  }
  return area;
}

double capped_median(const std::vector<double>& t, const std::vector<double>& f, double t_star) {
  // crossing of 1/2 on the piecewise-linear interpolant through (0, 0) and the knots
  for (std::size_t k = 0; k < t.size(); ++k)
    if (f[k] >= 0.5) {
      const double t0 = k ? t[k - 1] : 0.0, f0 = k ? f[k - 1] : 0.0;
      const double m = f[k] > f0 ? t0 + (0.5 - f0) * (t[k] - t0) / (f[k] - f0) : t[k];
      return std::min(m, t_star);
    }
  return t_star;
}

}  // namespace

TEST_SUITE("effects") {
  TEST_CASE("conditional functionals match the exponential closed forms") {
    // rates (1, 1, 2) scaled by gamma: eta = 1/2, d1 = (1 - e^{-2u})/2,
    // n2 = (1 - e^{-2u})/2 - u e^{-2u}, m2 = (1 - e^{-2u})/2 with u = gamma t
    const IdmFit f = exp_fit(1.0, 1.0, 2.0, 1e-5, 2.5);
    const std::vector<double> grid{0.5, 1.0, 2.0};
    for (double gamma : {1.0, 1.7}) {
      const auto c = conditional_functionals(f, gamma, {}, grid);
      CHECK(c.eta == doctest::Approx(0.5 * (1 - std::exp(-2 * gamma * 2.5))).epsilon(1e-9));
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double u = gamma * grid[g], e = std::exp(-2 * u);
        CHECK(std::abs(c.d1[g] - 0.5 * (1 - e)) < 1e-4);
        CHECK(std::abs(c.m2[g] - 0.5 * (1 - e)) < 1e-4);
        CHECK(std::abs(c.n2[g] - (0.5 * (1 - e) - u * e)) < 1e-4);
      }
    }
  }

  TEST_CASE("equal competing hazards split the path evenly") {
    IdmFit f = exp_fit(1.0, 1.0, 0.5, 0.01, 40.0);
    // irregular but identical 0->1 and 0->2 baselines
    const StepFunction irregular({0.3, 0.9, 2.0, 7.0}, {0.2, 0.25, 1.4, 30.0}, 0.0);
    f.transitions[0].cumhaz = irregular;
    f.transitions[1].cumhaz = irregular;
    for (double gamma : {0.4, 1.0, 3.0})
      CHECK(conditional_functionals(f, gamma, {}, std::vector<double>{1.0}).eta ==
            doctest::Approx(0.5 * (1 - std::exp(-2 * gamma * 30.0))).epsilon(1e-12));
  }

  TEST_CASE("no onset hazard means no disease-first paths") {
    IdmFit f = exp_fit(1.0, 1.0, 1.0, 0.01, 5.0);
    f.transitions[0].cumhaz = StepFunction::constant(0.0);
    const auto c = conditional_functionals(f, 1.0, {}, std::vector<double>{1.0, 2.0});
    CHECK(c.eta == 0.0);
    CHECK(c.d1 == std::vector<double>{0.0, 0.0});
    CHECK(c.n2 == std::vector<double>{0.0, 0.0});
    // and the principal stratum of always-diseased subjects is empty
    const IdmFit g = exp_fit(1.0, 1.0, 1.0, 0.01, 5.0);
    CHECK_THROWS_AS(frailty_effects(f, g, request(1.0, 0.5, 500), 1), VanishingStratum);
  }

  TEST_CASE("simulated paths agree with the exact sweep") {
    const IdmFit f = exp_fit(0.7, 0.4, 1.1, 0.05, 4.0, {0.5});
    const std::vector<double> x{0.6}, grid{0.5, 1.0, 2.0, 3.5};
    const std::size_t m = 200000;
    const auto c = conditional_functionals(f, 1.3, x, grid);
    const auto s = conditional_functionals_microsim(f, 1.3, x, grid, m, 9);
    auto close = [&](double a, double b) {
      const double se = std::sqrt(std::max(a * (1 - a), 1e-6) / m);
      CHECK(std::abs(a - b) < 5 * se);
    };
    close(c.eta, s.eta);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      close(c.d1[g], s.d1[g]);
      close(c.n2[g], s.n2[g]);
      close(c.m2[g], s.m2[g]);
    }
  }

  TEST_CASE("a covariate acts as a multiplier of the baseline") {
    const IdmFit with_x = exp_fit(0.7, 0.4, 1.1, 0.05, 4.0, {std::log(2.0)});
    const IdmFit doubled = exp_fit(1.4, 0.8, 2.2, 0.05, 4.0);
    const std::vector<double> x{1.0}, grid{0.5, 2.0};
    const auto a = conditional_functionals(with_x, 1.0, x, grid);
    const auto b = conditional_functionals(doubled, 1.0, {}, grid);
    CHECK(a.eta == doctest::Approx(b.eta).epsilon(1e-13));
    for (std::size_t g = 0; g < 2; ++g) CHECK(a.n2[g] == doctest::Approx(b.n2[g]).epsilon(1e-13));
    CHECK_THROWS_AS(conditional_functionals(with_x, 1.0, {}, grid), InvalidSpec);
  }

  TEST_CASE("identical arms have no effect") {
    const IdmFit f = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const auto r = frailty_effects(f, f, request(1.0, 1.0, 4000), 3);
    for (const auto& s : r.scalar) CHECK(std::abs(s.estimate) < 1e-12);
    for (const auto& c : r.curve)
      for (double v : c) CHECK(std::abs(v) < 1e-12);
    // with independent frailties only the Monte Carlo error remains
    const auto q = frailty_effects(f, f, request(1.0, 0.0, 20000), 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(q.scalar[i].estimate) < 4 * q.scalar[i].mc_se + 1e-12);
    CHECK(std::abs(q.pi_dh - q.pi_dp) < 0.01);
  }

  TEST_CASE("without frailty the effects are differences of conditional curves") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.01, 5.0);
    const IdmFit f1 = exp_fit(0.6, 0.6, 0.7, 0.01, 5.0);
    EffectRequest req = request(0.0, 0.0, 50);
    req.t_star = 2.5;
    const auto r = frailty_effects(f0, f1, req, 5);
    CHECK(r.frailty_construction == "degenerate");
    // knots of both fits coincide: evaluate the conditional curves there
    const std::vector<double> knots = f0.transitions[0].cumhaz.knots();
    const auto c0 = conditional_functionals(f0, 1.0, {}, knots);
    const auto c1 = conditional_functionals(f1, 1.0, {}, knots);
    const auto g0 = conditional_functionals(f0, 1.0, {}, req.t_grid);
    const auto g1 = conditional_functionals(f1, 1.0, {}, req.t_grid);
    for (std::size_t g = 0; g < req.t_grid.size(); ++g) {
      CHECK(r.curve[0][g] == doctest::Approx(g1.f2_ad()[g] - g0.f2_ad()[g]).epsilon(1e-10));
      CHECK(r.curve[1][g] == doctest::Approx(g1.f2_nd()[g] - g0.f2_nd()[g]).epsilon(1e-10));
      CHECK(r.curve[2][g] == doctest::Approx(g1.f1_ad()[g] - g0.f1_ad()[g]).epsilon(1e-10));
      CHECK(r.curve_se[0][g] == doctest::Approx(0.0));
    }
    auto rmst_diff = [&](const std::vector<double>& a1, const std::vector<double>& a0) {
      return -(step_integral(knots, a1, req.t_star) - step_integral(knots, a0, req.t_star));
    };
    CHECK(r[EffectId::t2_ad_rmst].estimate == doctest::Approx(rmst_diff(c1.f2_ad(), c0.f2_ad())).epsilon(1e-10));
    CHECK(r[EffectId::t1_ad_rmst].estimate == doctest::Approx(rmst_diff(c1.f1_ad(), c0.f1_ad())).epsilon(1e-10));
    CHECK(r[EffectId::t2_nd_rmst].estimate == doctest::Approx(rmst_diff(c1.f2_nd(), c0.f2_nd())).epsilon(1e-10));
    CHECK(r[EffectId::t2_ad_median].estimate ==
          doctest::Approx(capped_median(knots, c1.f2_ad(), req.t_star) - capped_median(knots, c0.f2_ad(), req.t_star)));
    CHECK(r[EffectId::t1_ad_median].estimate ==
          doctest::Approx(capped_median(knots, c1.f1_ad(), req.t_star) - capped_median(knots, c0.f1_ad(), req.t_star)));
    CHECK(r[EffectId::t2_nd_median].estimate ==
          doctest::Approx(capped_median(knots, c1.f2_nd(), req.t_star) - capped_median(knots, c0.f2_nd(), req.t_star)));
    CHECK(r.pi_ad == doctest::Approx(c0.eta * c1.eta).epsilon(1e-12));
    CHECK(r.pi_ad + r.pi_nd + r.pi_dh + r.pi_dp == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("restricted-mean gap is the difference of its components") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.02, 5.0);
    for (double rho : {0.0, 0.5, 1.0}) {
      const auto r = frailty_effects(f0, f1, request(1.0, rho, 3000), 17);
      CHECK(r[EffectId::gap_ad_rmst].estimate ==
            r[EffectId::t2_ad_rmst].estimate - r[EffectId::t1_ad_rmst].estimate);
      for (const auto& c : r.curve)
        for (double v : c) CHECK((v >= -1.0 && v <= 1.0));
      for (const auto& s : r.scalar) CHECK(s.mc_se >= 0.0);
      CHECK(r.pi_ad + r.pi_nd + r.pi_dh + r.pi_dp == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("Monte Carlo error shrinks like one over root B") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.02, 5.0);
    const auto small = frailty_effects(f0, f1, request(1.0, 0.5, 2000), 23);
    const auto big = frailty_effects(f0, f1, request(1.0, 0.5, 32000), 23);
    for (std::size_t i = 0; i < 4; ++i) {
      const double ratio = small.scalar[i].mc_se / big.scalar[i].mc_se;
      CHECK(ratio > 3.0);
      CHECK(ratio < 5.3);
      CHECK(std::abs(small.scalar[i].estimate - big.scalar[i].estimate) <
            4 * std::hypot(small.scalar[i].mc_se, big.scalar[i].mc_se));
    }
  }

  TEST_CASE("independent frailties agree with quadrature") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.02, 5.0);
    EffectRequest req = request(0.8, 0.0, 100000);
    req.frailty.family = FrailtyFamily::gamma_indep;
    req.frailty.theta1 = 1.5;
    const auto mc = frailty_effects(f0, f1, req, 31);
    const auto q = effects_independent_quadrature(f0, f1, req, 60);
    for (std::size_t i = 0; i < 4; ++i) {
      CAPTURE(i);
      CHECK(std::abs(mc.scalar[i].estimate - q.scalar[i].estimate) < 4 * mc.scalar[i].mc_se + 1e-4);
    }
    for (std::size_t e = 0; e < 3; ++e)
      for (std::size_t g = 0; g < req.t_grid.size(); ++g)
        CHECK(std::abs(mc.curve[e][g] - q.curve[e][g]) < 4 * mc.curve_se[e][g] + 1e-4);
    CHECK(mc.pi_ad == doctest::Approx(q.pi_ad).epsilon(0.01));
  }

  TEST_CASE("covariate pools are averaged over") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.05, 5.0, {0.4});
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.05, 5.0, {-0.3});
    EffectRequest req = request(0.0, 0.0, 60000);
    CHECK_THROWS_AS(frailty_effects(f0, f1, req, 1), InvalidSpec);
    req.x_pool = {{0.0}, {1.0}};
    const auto mc = frailty_effects(f0, f1, req, 2);
    const auto q = effects_independent_quadrature(f0, f1, req, 20);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(mc.scalar[i].estimate - q.scalar[i].estimate) < 4 * mc.scalar[i].mc_se + 1e-4);
  }

  TEST_CASE("sweeps reuse the draws of single evaluations") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.02, 5.0);
    const std::vector<double> rhos{0.3};
    const auto s = rho_sweep(f0, f1, request(1.0, 0.9, 3000), rhos, 41);
    const auto one = frailty_effects(f0, f1, request(1.0, 0.3, 3000), 41);
    REQUIRE(s.size() == 1);
    CHECK(s[0].rho == 0.3);
    for (std::size_t i = 0; i < 7; ++i) CHECK(s[0].scalar[i].estimate == one.scalar[i].estimate);
    CHECK_THROWS_AS(rho_sweep(f0, f1, request(1.0, 0.0, 10), {}, 1), InvalidSpec);
  }

  TEST_CASE("results do not depend on the thread count") {
    const IdmFit f0 = exp_fit(0.8, 0.5, 1.2, 0.02, 5.0);
    const IdmFit f1 = exp_fit(0.5, 0.7, 0.6, 0.02, 5.0);
    set_max_threads(1);
    const auto a = frailty_effects(f0, f1, request(0.5, 0.5, 5000), 8);
    set_max_threads(4);
    const auto b = frailty_effects(f0, f1, request(0.5, 0.5, 5000), 8);
    set_max_threads(1);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(a.scalar[i].estimate == b.scalar[i].estimate);
      CHECK(a.scalar[i].mc_se == b.scalar[i].mc_se);
    }
    CHECK(a.curve == b.curve);
  }

  TEST_CASE("requests are validated") {
    const IdmFit f = exp_fit(0.8, 0.5, 1.2, 0.1, 5.0);
    CHECK_THROWS_AS(frailty_effects(f, f, request(1.0, 0.5, 0), 1), InvalidSpec);
    CHECK_THROWS_AS(frailty_effects(f, f, request(1.0, 0.5, 10, 0.0), 1), InvalidSpec);
    CHECK(frailty_effects(f, f, request(1.0, 0.5, 10, 9.0), 1).beyond_support);
    CHECK_FALSE(frailty_effects(f, f, request(1.0, 0.5, 10, 4.0), 1).beyond_support);
  }
}
