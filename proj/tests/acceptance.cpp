// End-to-end acceptance checks, one test case per criterion. Each case prints
// the figures it judges so the ctest log doubles as a results table.
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "semicomp/bootstrap.hpp"
#include "semicomp/bounds.hpp"
#include "semicomp/cli.hpp"
#include "semicomp/components.hpp"
#include "semicomp/effects.hpp"
#include "semicomp/frailty.hpp"
#include "semicomp/idm.hpp"
#include "semicomp/serialize.hpp"
#include "semicomp/simulation.hpp"
#include "semicomp/survival.hpp"

using namespace semicomp;
namespace fs = std::filesystem;
using testing::rec;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Replication summary of one estimator against a known truth.
struct RepSummary {
  std::vector<double> est, se;
  double truth = 0.0;

  void add(double e, double s) {
    est.push_back(e);
    se.push_back(s);
  }
  double mean() const { return std::accumulate(est.begin(), est.end(), 0.0) / est.size(); }
  double emp_sd() const {
    const double m = mean();
    double ss = 0;
    for (double e : est) ss += (e - m) * (e - m);
    return std::sqrt(ss / (est.size() - 1));
  }
  double mean_se() const { return std::accumulate(se.begin(), se.end(), 0.0) / se.size(); }
  double coverage(double z = 1.959963984540054) const {
    double hit = 0;
    for (std::size_t i = 0; i < est.size(); ++i) hit += std::abs(est[i] - truth) <= z * se[i];
    return hit / est.size();
  }
  void print(const std::string& label) const {
    std::printf("%-28s truth %9.4f mean %9.4f bias %8.4f emp.sd %7.4f est.se %7.4f ratio %5.3f cp95 %5.3f\n",
                label.c_str(), truth, mean(), mean() - truth, emp_sd(), mean_se(), mean_se() / emp_sd(),
                coverage());
  }
};

std::vector<std::vector<double>> covariate_pool(const Dataset& d) {
  std::vector<std::vector<double>> pool;
  for (const auto& r : d.records()) pool.push_back(r.x);
  return pool;
}

std::vector<std::string> regular_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("criterion_01 hand product-limit values") {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset all_deaths({rec(0, 1, 0, 1, 1), rec(0, 2, 0, 2, 1), rec(0, 3, 0, 3, 1), rec(1, 1, 0, 1, 1)});
  const Dataset one_censored({rec(0, 1, 0, 1, 1), rec(0, 2, 0, 2, 0), rec(0, 3, 0, 3, 1), rec(1, 1, 0, 1, 1)});
  const StepFunction s = km_survival(all_deaths, 0);
  const StepFunction c = km_survival(one_censored, 0);
  const double elapsed = seconds_since(t0);
  CHECK(std::abs(s(1.0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s(2.0) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(s(3.0)) < 1e-12);
  CHECK(std::abs(c(1.0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(c(2.0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(c(3.0)) < 1e-12);
  std::printf("criterion 1: KM on both datasets in %.1f us\n", elapsed * 1e6);
  CHECK(elapsed < 1e-3);
}

TEST_CASE("criterion_02 strata proportions") {
  const StrataProportions p = strata_proportions(0.491, 0.848);
  std::printf("criterion 2: pi_ad %.6f pi_dh %.6f pi_nd %.6f\n", p.pi_ad, p.pi_dh, p.pi_nd);
  CHECK(std::abs(p.pi_ad - 0.491) < 1e-12);
  CHECK(std::abs(p.pi_dh - 0.357) < 1e-12);
  CHECK(std::abs(p.pi_nd - 0.152) < 1e-12);
  CHECK_FALSE(p.order_violation);
}

TEST_CASE("criterion_03 true effects lie inside the estimated bounds") {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = load_scenario(testing::scenario_path("scn1.toml"));
  cfg.n = 20000;
  REQUIRE(cfg.enforce_order_preservation);
  REQUIRE(cfg.censoring.target == 0.10);
  const SimulationResult sim = simulate(cfg);
  std::vector<double> grid;
  for (double t = 1; t <= 30; t += 1) grid.push_back(t);
  const PopulationTruth truth = population_functionals(cfg, grid, 30.0, 1000000);

  // bandwidths fixed at their original-sample values inside the bootstrap
  KernelSpec k0, k1;
  k0.bandwidth = resolve_bandwidth(KernelSpec{}, sim.data, 0);
  k1.bandwidth = resolve_bandwidth(KernelSpec{}, sim.data, 1);
  auto pipeline = [&](const Dataset& d, std::uint64_t) {
    const BoundsResult b = bounds_unadjusted(estimate_components(d, 0, k0, grid),
                                             estimate_components(d, 1, k1, grid), grid);
    std::vector<double> out;
    for (BoundEffect e : kBoundEffects) {
      out.insert(out.end(), b[e].lower.values().begin(), b[e].lower.values().end());
      out.insert(out.end(), b[e].upper.values().begin(), b[e].upper.values().end());
    }
    return out;
  };
  BootstrapPlan plan;
  plan.reps = 30;
  plan.seed = 303;
  const BootstrapResult br = bootstrap(sim.data, pipeline, plan);
  const double support = bounds_unadjusted(estimate_components(sim.data, 0, k0, grid),
                                           estimate_components(sim.data, 1, k1, grid), grid)
                             .support_end;
  const std::size_t G = grid.size();
  int checked = 0, outside = 0;
  for (std::size_t e = 0; e < 3; ++e)
    for (std::size_t g = 0; g < G; ++g) {
      if (grid[g] > support) continue;
      const std::size_t lo = e * 2 * G + g, up = e * 2 * G + G + g;
      const double v = truth.curve[e][g];
      const bool in = v >= br.estimate[lo] - 3 * br.se[lo] && v <= br.estimate[up] + 3 * br.se[up];
      ++checked;
      outside += !in;
      if (!in || g % 10 == 9)
        std::printf("criterion 3: %-7s t=%4.0f truth %8.4f bounds [%8.4f, %8.4f] se (%.4f, %.4f)%s\n",
                    bound_effect_name(kBoundEffects[e]), grid[g], v, br.estimate[lo], br.estimate[up],
                    br.se[lo], br.se[up], in ? "" : "  OUTSIDE");
    }
  const double elapsed = seconds_since(t0);
  std::printf("criterion 3: %d grid checks, %d outside, %.1f s\n", checked, outside, elapsed);
  CHECK(checked == 90);
  CHECK(outside == 0);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion_04 covariate-adjusted bounds nest inside unadjusted bounds") {
  const ScenarioConfig cfg = load_scenario(testing::scenario_path("hetz.toml"));
  REQUIRE(cfg.z.has_value());
  std::vector<double> grid;
  for (double t = 1; t <= 30; t += 1) grid.push_back(t);
  const PopulationTruth truth = population_functionals(cfg, grid, 30.0, 1000000);
  REQUIRE(truth.z_levels.size() == 3);
  const double support = 1e9;
  const ComponentSet c0 = components_from_values(0, grid, truth.components[0], support);
  const ComponentSet c1 = components_from_values(1, grid, truth.components[1], support);
  const BoundsResult unadj = bounds_unadjusted(c0, c1, grid);
  std::vector<ZCell> cells;
  for (std::size_t k = 0; k < truth.z_levels.size(); ++k)
    cells.push_back({truth.z_levels[k], truth.p_z[k], truth.p_z[k],
                     components_from_values(0, grid, truth.components_z[k][0], support),
                     components_from_values(1, grid, truth.components_z[k][1], support)});
  const BoundsResult adj = bounds_adjusted(cells, grid);
  double worst = -INFINITY, narrowed = 0;
  for (BoundEffect e : kBoundEffects)
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double dl = unadj[e].lower.values()[g] - adj[e].lower.values()[g];
      const double du = adj[e].upper.values()[g] - unadj[e].upper.values()[g];
      worst = std::max({worst, dl, du});
      narrowed = std::max(narrowed, -(dl + du));
      CHECK(adj[e].lower.values()[g] >= unadj[e].lower.values()[g] - 1e-3);
      CHECK(adj[e].upper.values()[g] <= unadj[e].upper.values()[g] + 1e-3);
    }
  std::printf("criterion 4: largest widening %.2e (tolerance 1e-3), largest narrowing %.4f\n", worst, narrowed);
}

TEST_CASE("criterion_05 disease probability estimator calibration") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> grid{1.0};
  for (const char* file : {"scn1.toml", "scn2.toml"})
    for (double target : {0.10, 0.30}) {
      ScenarioConfig cfg = load_scenario(testing::scenario_path(file));
      cfg.n = 2000;
      cfg.censoring.target = target;
      const PopulationTruth truth = population_functionals(cfg, grid, 1.0, 1000000);
      std::array<RepSummary, 2> s;
      s[0].truth = truth.eta[0];
      s[1].truth = truth.eta[1];
      for (std::size_t r = 0; r < 200; ++r) {
        cfg.seed = 50000 + r;
        const SimulationResult sim = simulate(cfg);
        KernelSpec k0, k1;
        k0.bandwidth = resolve_bandwidth(KernelSpec{}, sim.data, 0);
        k1.bandwidth = resolve_bandwidth(KernelSpec{}, sim.data, 1);
        auto pipeline = [&](const Dataset& d, std::uint64_t) {
          return std::vector<double>{estimate_components(d, 0, k0, grid).eta,
                                     estimate_components(d, 1, k1, grid).eta};
        };
        BootstrapPlan plan;
        plan.reps = 200;
        plan.seed = cfg.seed;
        const BootstrapResult b = bootstrap(sim.data, pipeline, plan);
        for (int a : {0, 1}) s[a].add(b.estimate[a], b.se[a]);
      }
      for (int a : {0, 1}) {
        char label[64];
        std::snprintf(label, sizeof label, "criterion 5: %s c%.0f%% eta%d", file, target * 100, a);
        s[a].print(label);
        CHECK(std::abs(s[a].mean() - s[a].truth) < 0.01);
        const double ratio = s[a].mean_se() / s[a].emp_sd();
        CHECK(ratio >= 0.85);
        CHECK(ratio <= 1.15);
        CHECK(s[a].coverage() >= 0.92);
        CHECK(s[a].coverage() <= 0.98);
      }
    }
  const double elapsed = seconds_since(t0);
  std::printf("criterion 5: %.1f s\n", elapsed);
  CHECK(elapsed < 1800.0);
}

TEST_CASE("criterion_06 EM correctness") {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioConfig base = load_scenario(testing::scenario_path("recovery.toml"));

  SUBCASE("monotone log-likelihood") {
    int datasets = 0, steps = 0;
    double worst = 0.0;
    for (std::size_t r = 0; r < 50; ++r) {
      ScenarioConfig cfg = base;
      cfg.n = 400 + 40 * (r % 5);
      cfg.seed = 60000 + r;
      cfg.frailty.theta0 = cfg.frailty.theta1 = std::array<double, 3>{0.5, 1.0, 2.0}[r % 3];
      const SimulationResult sim = simulate(cfg);
      IdmModelSpec spec;
      spec.check_monotone = true;
      spec.monotone_tol = 1e-10;
      spec.tol = 1e-8;
      spec.max_iter = 5000;
      const IdmFit f = em_fit(sim.data, static_cast<int>(r % 2), spec);
      for (std::size_t i = 1; i < f.convergence.trace.size(); ++i) {
        const double drop = f.convergence.trace[i - 1] - f.convergence.trace[i];
        worst = std::max(worst, drop);
        CHECK(drop <= 1e-10);
        ++steps;
      }
      ++datasets;
    }
    std::printf("criterion 6a: %d datasets, %d EM cycles, largest decrease %.2e\n", datasets, steps, worst);
  }

  SUBCASE("no-frailty fit solves the partial likelihood") {
    ScenarioConfig cfg = base;
    cfg.seed = 61000;
    const SimulationResult sim = simulate(cfg);
    IdmModelSpec spec;
    spec.fixed_theta = 0.0;
    spec.tol = 1e-12;
    spec.max_iter = 5000;
    double worst = 0.0;
    for (int a : {0, 1}) {
      const IdmFit f = em_fit(sim.data, a, spec);
      const auto spells = testing::transition_spells(sim.data, a);
      for (std::size_t k = 0; k < 3; ++k) {
        const Eigen::VectorXd ref = testing::cox_reference(spells[k], sim.data.p());
        for (Eigen::Index j = 0; j < ref.size(); ++j) {
          const double d = std::abs(f.transitions[k].beta[j] - ref[j]);
          worst = std::max(worst, d);
          CHECK(d < 1e-6);
        }
      }
    }
    std::printf("criterion 6b: largest |beta - reference| %.2e\n", worst);
  }

  SUBCASE("parameter recovery") {
    for (double theta : {2.0 / 3.0, 1.0, 2.0}) {
      ScenarioConfig cfg = base;
      cfg.frailty.theta0 = cfg.frailty.theta1 = theta;
      std::array<RepSummary, 2> th;
      std::array<std::array<std::vector<RepSummary>, 3>, 2> beta;
      for (int a : {0, 1}) {
        th[a].truth = theta;
        for (std::size_t k = 0; k < 3; ++k) {
          beta[a][k].resize(cfg.p());
          for (std::size_t j = 0; j < cfg.p(); ++j) beta[a][k][j].truth = cfg.arms[a].beta[k][j];
        }
      }
      for (std::size_t r = 0; r < 100; ++r) {
        cfg.seed = 62000 + r;
        const SimulationResult sim = simulate(cfg);
        for (int a : {0, 1}) {
          const IdmFit f = em_fit(sim.data, a);
          th[a].add(f.theta, 0.0);
          for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < cfg.p(); ++j) beta[a][k][j].add(f.transitions[k].beta[j], 0.0);
        }
      }
      for (int a : {0, 1}) {
        char label[64];
        std::snprintf(label, sizeof label, "criterion 6c: theta %.3f arm%d", theta, a);
        std::printf("%-34s mean %.4f bias %+.4f emp.sd %.4f\n", label, th[a].mean(), th[a].mean() - theta,
                    th[a].emp_sd());
        CHECK(std::abs(th[a].mean() - theta) < 3 * th[a].emp_sd());
        for (std::size_t k = 0; k < 3; ++k)
          for (std::size_t j = 0; j < cfg.p(); ++j) {
            const RepSummary& b = beta[a][k][j];
            std::printf("    beta%s[%zu] truth %.3f mean %.4f bias %+.4f emp.sd %.4f\n",
                        transition_name(static_cast<Transition>(k)), j, b.truth, b.mean(), b.mean() - b.truth,
                        b.emp_sd());
            CHECK(std::abs(b.mean() - b.truth) < 2 * b.emp_sd());
          }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  std::printf("criterion 6: %.1f s\n", elapsed);
  CHECK(elapsed < 2700.0);
}

TEST_CASE("criterion_07 frailty-identified effects end to end") {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = load_scenario(testing::scenario_path("scn4.toml"));
  REQUIRE(cfg.frailty.rho == 0.5);
  REQUIRE(cfg.frailty.theta0 == 1.0);
  REQUIRE(cfg.n == 2000);
  const double t_star = 15.0;
  const PopulationTruth truth = population_functionals(cfg, {t_star}, t_star, 1000000);
  const std::array<EffectId, 6> ids{EffectId::t1_ad_rmst, EffectId::t2_ad_rmst, EffectId::t2_nd_rmst,
                                    EffectId::t1_ad_median, EffectId::t2_ad_median, EffectId::t2_nd_median};
  std::array<RepSummary, 6> s;
  for (std::size_t i = 0; i < ids.size(); ++i) s[i].truth = truth[ids[i]].estimate;

  for (std::size_t r = 0; r < 100; ++r) {
    cfg.seed = 70000 + r;
    const SimulationResult sim = simulate(cfg);
    const IdmFit f0 = em_fit(sim.data, 0), f1 = em_fit(sim.data, 1);
    auto pipeline = [&](const Dataset& d, std::uint64_t seed) {
      const IdmFit g0 = em_fit(d, 0, IdmModelSpec{}, &f0);
      const IdmFit g1 = em_fit(d, 1, IdmModelSpec{}, &f1);
      const double theta = combine_frailty_variances(g0, g1, FrailtyCombineRule::pooled).first;
      EffectRequest req;
      req.t_grid = {t_star};
      req.t_star = t_star;
      req.frailty = {FrailtyFamily::gamma_corr, theta, theta, cfg.frailty.rho};
      req.draws = 1000;
      req.x_pool = covariate_pool(d);
      const EffectResult e = frailty_effects(g0, g1, req, seed);
      std::vector<double> out;
      for (EffectId id : ids) out.push_back(e[id].estimate);
      return out;
    };
    BootstrapPlan plan;
    plan.reps = 40;
    plan.seed = cfg.seed;
    const BootstrapResult b = bootstrap(sim.data, pipeline, plan);
    for (std::size_t i = 0; i < ids.size(); ++i) s[i].add(b.estimate[i], b.se[i]);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s[i].print(std::string("criterion 7: ") + effect_name(ids[i]));
    CHECK(std::abs(s[i].mean() - s[i].truth) < 2 * s[i].emp_sd());
    CHECK(s[i].coverage() >= 0.92);
    CHECK(s[i].coverage() <= 0.98);
  }
  const double elapsed = seconds_since(t0);
  std::printf("criterion 7: %.1f s\n", elapsed);
  CHECK(elapsed < 5400.0);
}

TEST_CASE("criterion_08 frailty law moments") {
  const auto t0 = std::chrono::steady_clock::now();
  const FrailtyDraws d = sample_frailty_pairs({FrailtyFamily::gamma_corr, 1.0, 1.0, 0.5}, 1000000, 808);
  const double n = static_cast<double>(d.g0.size());
  const double m0 = std::accumulate(d.g0.begin(), d.g0.end(), 0.0) / n;
  const double m1 = std::accumulate(d.g1.begin(), d.g1.end(), 0.0) / n;
  double v0 = 0, v1 = 0, c = 0;
  for (std::size_t i = 0; i < d.g0.size(); ++i) {
    v0 += (d.g0[i] - m0) * (d.g0[i] - m0);
    v1 += (d.g1[i] - m1) * (d.g1[i] - m1);
    c += (d.g0[i] - m0) * (d.g1[i] - m1);
  }
  const double corr = c / std::sqrt(v0 * v1);
  v0 /= n - 1;
  v1 /= n - 1;
  std::printf("criterion 8: means %.5f %.5f variances %.5f %.5f correlation %.5f\n", m0, m1, v0, v1, corr);
  CHECK(std::abs(m0 - 1) < 0.005);
  CHECK(std::abs(m1 - 1) < 0.005);
  CHECK(std::abs(v0 - 1) < 0.02);
  CHECK(std::abs(v1 - 1) < 0.02);
  CHECK(std::abs(corr - 0.5) < 0.01);

  // Kendall's tau of two exponential times sharing a gamma frailty
  const std::array<double, 3> thetas{2.0 / 3.0, 1.0, 2.0}, taus{0.25, 1.0 / 3.0, 0.5};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(kendall_tau_gamma(thetas[k]) == doctest::Approx(taus[k]).epsilon(1e-15));
    const FrailtyDraws g = sample_frailty_pairs({FrailtyFamily::gamma_corr, thetas[k], thetas[k], 1.0}, 3000, 9 + k);
    std::mt19937_64 eng(100 + k);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> t1(3000), t2(3000);
    for (std::size_t i = 0; i < 3000; ++i) {
      t1[i] = e(eng) / g.g0[i];
      t2[i] = e(eng) / g.g0[i];
    }
    double concord = 0;
    for (std::size_t i = 0; i < 3000; ++i)
      for (std::size_t j = i + 1; j < 3000; ++j) concord += (t1[i] - t1[j]) * (t2[i] - t2[j]) > 0 ? 1 : -1;
    const double tau = concord / (3000.0 * 2999.0 / 2.0);
    std::printf("criterion 8: theta %.3f tau %.4f empirical %.4f\n", thetas[k], kendall_tau_gamma(thetas[k]), tau);
    CHECK(std::abs(tau - taus[k]) < 0.03);
  }
  CHECK(seconds_since(t0) < 10.0);
}

TEST_CASE("criterion_09 effects barely move with rho at small frailty variance") {
  ScenarioConfig cfg = load_scenario(testing::scenario_path("scn4.toml"));
  cfg.frailty.theta0 = cfg.frailty.theta1 = 0.04;
  const SimulationResult sim = simulate(cfg);
  IdmModelSpec spec;
  spec.fixed_theta = 0.04;
  const IdmFit f0 = em_fit(sim.data, 0, spec), f1 = em_fit(sim.data, 1, spec);
  const double theta = combine_frailty_variances(f0, f1, FrailtyCombineRule::pooled).first;
  REQUIRE(theta == doctest::Approx(0.04));
  EffectRequest req;
  for (double t = 2; t <= 20; t += 2) req.t_grid.push_back(t);
  req.t_star = 15.0;
  req.frailty = {FrailtyFamily::gamma_corr, theta, theta, 0.0};
  req.draws = 20000;
  req.x_pool = covariate_pool(sim.data);
  const std::vector<double> rhos{0.0, 0.5, 1.0};
  const auto sweep = rho_sweep(f0, f1, req, rhos, 909);
  for (std::size_t i = 0; i < kScalarEffects.size(); ++i) {
    double lo = INFINITY, hi = -INFINITY, se = 0;
    for (const auto& r : sweep) {
      lo = std::min(lo, r.scalar[i].estimate);
      hi = std::max(hi, r.scalar[i].estimate);
      se = std::max(se, r.scalar[i].mc_se);
    }
    std::printf("criterion 9: %-18s rho 0 %8.4f  0.5 %8.4f  1 %8.4f  range %.4f  mc.se %.4f\n",
                effect_name(kScalarEffects[i]), sweep[0].scalar[i].estimate, sweep[1].scalar[i].estimate,
                sweep[2].scalar[i].estimate, hi - lo, se);
    CHECK(hi - lo <= 2 * se);
  }
  double worst = 0;
  for (std::size_t e = 0; e < 3; ++e)
    for (std::size_t g = 0; g < req.t_grid.size(); ++g) {
      double lo = INFINITY, hi = -INFINITY, se = 0;
      for (const auto& r : sweep) {
        lo = std::min(lo, r.curve[e][g]);
        hi = std::max(hi, r.curve[e][g]);
        se = std::max(se, r.curve_se[e][g]);
      }
      worst = std::max(worst, (hi - lo) / se);
      CHECK(hi - lo <= 2 * se);
    }
  std::printf("criterion 9: curves, largest range / mc.se %.3f\n", worst);
}

TEST_CASE("criterion_10 reruns from manifests are bitwise identical") {
  const fs::path root = testing::temp_dir("acceptance_rerun");
  const std::string sim = (root / "simulate").string();
  const std::string data = sim + "/data.csv";
  const std::vector<std::vector<std::string>> runs{
      {"simulate", "--scenario", testing::scenario_path("hetz.toml"), "--n", "400", "--mc-size", "20000",
       "--t-star", "15", "--out", sim},
      {"bounds", "--in", data, "--z-col", "z", "--t-star", "15", "--out", (root / "bounds").string()},
      {"fit", "--in", data, "--col-x", "x1,x2", "--out", (root / "fit").string()},
      {"effects", "--in", data, "--col-x", "x1,x2", "--rho", "0,0.5,1", "--t-star", "15", "--B", "2000",
       "--seed", "7", "--out", (root / "effects").string()},
      {"bootstrap", "--in", data, "--target", "effects", "--col-x", "x1,x2", "--t-star", "15", "--B", "300",
       "--boot-reps", "6", "--dump-replicates", "--out", (root / "bootstrap").string()},
      {"bootstrap", "--in", data, "--target", "bounds", "--z-col", "z", "--boot-reps", "10",
       "--grid", "5,10,15", "--out", (root / "bootstrap_bounds").string()},
      {"report", "--in", (root / "effects").string(), "--out", (root / "report").string()}};
  for (const auto& args : runs) {
    const std::string out = args.back();
    REQUIRE(run_cli(args) == 0);
    for (const char* threads : {"1", "2"}) {
      const std::string again = out + "_rerun" + threads;
      REQUIRE(run_cli({"rerun", "--manifest", out + "/manifest.json", "--out", again, "--threads", threads}) == 0);
      const auto files = regular_files(out);
      CHECK(files == regular_files(again));
      int compared = 0;
      for (const auto& f : files) {
        if (f == "manifest.json") continue;  // records the output directory
        const std::string where = args[0] + "/" + f;
        CHECK_MESSAGE(read_text(fs::path(out) / f) == read_text(fs::path(again) / f), where);
        ++compared;
      }
      // manifests agree apart from the output location
      json m1 = read_json(fs::path(out) / "manifest.json"), m2 = read_json(fs::path(again) / "manifest.json");
      m1["config"].erase("out");
      m2["config"].erase("out");
      m1["config"].erase("threads");
      m2["config"].erase("threads");
      CHECK(m1.dump() == m2.dump());
      std::printf("criterion 10: %-9s --threads %s: %d files identical\n", args[0].c_str(), threads, compared);
    }
  }
}
