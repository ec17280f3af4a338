#include "semicomp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"
#include "semicomp/random.hpp"

namespace semicomp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kResimLimit = 10000;
constexpr std::size_t kBlock = 1024;
constexpr std::size_t kPilot = 20000;

Stratum classify(const TwoWorldRecord& r) {
  const bool d0 = r.t1[0] <= r.t2[0], d1 = r.t1[1] <= r.t2[1];
  if (d0 && d1) return Stratum::ad;
  if (!d0 && !d1) return Stratum::nd;
  return d1 ? Stratum::dh : Stratum::dp;
}

double unit_exp(LightEngine& e) {
  return -std::log1p(-std::uniform_real_distribution<double>(0.0, 1.0)(e));
}

// One illness-death path with hazard multipliers r[j] on the baselines.
void draw_path(const ArmSpec& arm, const std::array<double, 3>& r, LightEngine& e, double& t1,
               double& t2) {
  auto first = [&](std::size_t j) {
    const double y = unit_exp(e);
    return r[j] > 0.0 ? arm.hazard[j].inverse(y / r[j]) : kInf;
  };
  const double a = first(0), b = first(1);
  const double y12 = unit_exp(e);
  if (a <= b && a < kInf) {
    t1 = a;
    t2 = r[2] > 0.0 ? arm.hazard[2].inverse(arm.hazard[2].cumhaz(a) + y12 / r[2]) : kInf;
    t2 = std::max(t2, a);
  } else {
    t1 = kInf;
    t2 = b;
  }
}

struct Candidate {
  TwoWorldRecord tw;
  int a = 0;
  std::vector<double> x;
  int z = -1;
  double entry = 0.0;
  double censor_draw = 0.0;  // Exp(1) or U(0,1) depending on the law
};

Candidate draw_candidate(const ScenarioConfig& cfg, std::uint64_t seed, std::size_t idx, double g0,
                         double g1) {
  Candidate c;
  LightEngine ec = make_light_engine(seed, streams::covariates, idx);
  for (const auto& cv : cfg.covariates) {
    if (cv.law == "bernoulli") {
      c.x.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(ec) < cv.p ? 1.0 : 0.0);
    } else if (cv.law == "uniform") {
      c.x.push_back(std::uniform_real_distribution<double>(cv.lo, cv.hi)(ec));
    } else {
      c.x.push_back(std::normal_distribution<double>(cv.mean, cv.sd)(ec));
    }
  }
  if (cfg.z) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(ec);
    double acc = 0.0;
    c.z = static_cast<int>(cfg.z->probs.size()) - 1;
    for (std::size_t k = 0; k < cfg.z->probs.size(); ++k) {
      acc += cfg.z->probs[k];
      if (u < acc) {
        c.z = static_cast<int>(k);
        break;
      }
    }
  }
  const std::array<double, 2> g{g0, g1};
  std::array<std::array<double, 3>, 2> r{};
  for (int a = 0; a < 2; ++a)
    for (std::size_t j = 0; j < 3; ++j) {
      double lp = 0.0;
      const auto& beta = cfg.arms[a].beta[j];
      for (std::size_t k = 0; k < beta.size(); ++k) lp += beta[k] * c.x[k];
      if (cfg.z) lp += cfg.z->effect[j][static_cast<std::size_t>(c.z)];
      r[a][j] = g[a] * std::exp(lp);
    }
  LightEngine ep = make_light_engine(seed, streams::paths, idx);
  draw_path(cfg.arms[0], r[0], ep, c.tw.t1[0], c.tw.t2[0]);
  LightEngine ep1 = cfg.world_coupling == "common" ? make_light_engine(seed, streams::paths, idx) : ep;
  draw_path(cfg.arms[1], r[1], ep1, c.tw.t1[1], c.tw.t2[1]);
  c.tw.stratum = classify(c.tw);
  if (cfg.enforce_order_preservation) {
    while (c.tw.stratum == cfg.resim_target) {
      if (++c.tw.resims > kResimLimit) throw ResimLimitExceeded(idx);
      draw_path(cfg.arms[1], r[1], ep1, c.tw.t1[1], c.tw.t2[1]);
      c.tw.stratum = classify(c.tw);
    }
  }
  LightEngine ea = make_light_engine(seed, streams::assignment, idx);
  c.a = std::uniform_real_distribution<double>(0.0, 1.0)(ea) < cfg.p_treat ? 1 : 0;
  if (cfg.entry.law == "uniform") {
    LightEngine er = make_light_engine(seed, streams::entry, idx);
    c.entry = std::uniform_real_distribution<double>(0.0, cfg.entry.max)(er);
  }
  LightEngine ecs = make_light_engine(seed, streams::censoring, idx);
  c.censor_draw = cfg.censoring.law == "uniform"
                      ? std::uniform_real_distribution<double>(0.0, 1.0)(ecs)
                      : unit_exp(ecs);
  return c;
}

bool accepted(const ScenarioConfig& cfg, const Candidate& c) {
  if (cfg.entry.law == "none") return true;
  return std::min(c.tw.t1[c.a], c.tw.t2[c.a]) >= c.entry && cfg.censoring.max_followup >= c.entry;
}

// Draws candidates in batches of n until n are accepted (in candidate order).
std::vector<Candidate> draw_cohort(const ScenarioConfig& cfg, std::uint64_t seed, std::size_t n) {
  std::vector<Candidate> out;
  out.reserve(n);
  for (std::size_t batch = 0; out.size() < n; ++batch) {
    if (batch > 1000) throw InvalidSpec("entry law rejects almost every subject");
    const std::uint64_t bseed = batch == 0 ? seed : derive_seed(seed, streams::entry, batch);
    const FrailtyDraws fd = sample_frailty_pairs(cfg.frailty, n, bseed);
    std::vector<Candidate> cand(n);
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    parallel_for(blocks, [&](std::size_t b) {
      for (std::size_t i = b * kBlock; i < std::min(n, (b + 1) * kBlock); ++i)
        cand[i] = draw_candidate(cfg, seed, batch * n + i, fd.g0[i], fd.g1[i]);
    });
    for (auto& c : cand) {
      if (out.size() == n) break;
      if (accepted(cfg, c)) out.push_back(std::move(c));
    }
  }
  return out;
}

double censor_time(const ScenarioConfig& cfg, const Candidate& c, double param) {
  double cprime = kInf;
  if (cfg.censoring.law == "exponential" && param > 0.0) cprime = c.censor_draw / param;
  if (cfg.censoring.law == "uniform" && std::isfinite(param)) cprime = c.censor_draw * param;
  return std::min(c.entry + cprime, cfg.censoring.max_followup);
}

// Pr(censored | D = T2 - entry, A = admin - entry) for parameter param.
double censor_prob(const std::string& law, double d, double admin, double param) {
  if (admin < d) return 1.0;
  if (law == "exponential") return std::isinf(d) ? (param > 0.0 ? 1.0 : 0.0) : -std::expm1(-param * d);
  if (law == "uniform") return std::isfinite(param) ? std::min(1.0, d / param) : 0.0;
  return 0.0;
}

}  // namespace

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::ad: return "ad";
    case Stratum::nd: return "nd";
    case Stratum::dh: return "dh";
    case Stratum::dp: return "dp";
  }
  return "?";
}

Stratum parse_stratum(const std::string& name) {
  if (name == "ad") return Stratum::ad;
  if (name == "nd") return Stratum::nd;
  if (name == "dh") return Stratum::dh;
  if (name == "dp") return Stratum::dp;
  throw InvalidSpec("unknown stratum '" + name + "' (ad, nd, dh, dp)");
}

double calibrate_censoring(const ScenarioConfig& cfg) {
  const auto& cs = cfg.censoring;
  if (cs.law == "none") return 0.0;
  if (cs.parameter) return *cs.parameter;
  const std::uint64_t pseed = derive_seed(cfg.seed, streams::pilot, 0);
  const auto pilot = draw_cohort(cfg, pseed, kPilot);
  std::vector<double> d, admin;
  for (const auto& c : pilot) {
    d.push_back(c.tw.t2[c.a] - c.entry);
    admin.push_back(cs.max_followup - c.entry);
  }
  auto frac = [&](double param) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += censor_prob(cs.law, d[i], admin[i], param);
    return s / static_cast<double>(d.size());
  };
  const bool exponential = cs.law == "exponential";
  const double none = exponential ? 0.0 : kInf;
  if (cs.target <= frac(none)) return none;
  // bisection on the log scale; the fraction rises with the rate and falls
  // with the uniform upper limit
  double lo = std::log(1e-10), hi = std::log(1e10);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = frac(std::exp(mid));
    ((f < cs.target) == exponential ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

SimulationResult simulate(const ScenarioConfig& cfg) {
  cfg.validate();
  SimulationResult res;
  res.censoring_parameter = calibrate_censoring(cfg);
  auto cohort = draw_cohort(cfg, cfg.seed, cfg.n);
  std::vector<ObservedRecord> records;
  records.reserve(cfg.n);
  std::size_t censored = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Candidate& c = cohort[i];
    const double t1 = c.tw.t1[c.a], t2 = c.tw.t2[c.a];
    const double cens = censor_time(cfg, c, res.censoring_parameter);
    if (std::isinf(t2) && std::isinf(cens))
      throw InvalidSpec("death is impossible for some subjects and there is no censoring");
    ObservedRecord r;
    r.id = std::to_string(i + 1);
    r.a = c.a;
    r.t2_obs = std::min(t2, cens);
    r.delta2 = t2 <= cens ? 1 : 0;
    r.t1_obs = std::min({t1, t2, cens});
    r.delta1 = t1 <= std::min(t2, cens) ? 1 : 0;
    r.entry = c.entry;
    if (cfg.z) r.z = cfg.z->levels[static_cast<std::size_t>(c.z)];
    r.x = c.x;
    if (!r.delta2) ++censored;
    records.push_back(std::move(r));
    res.truth.push_back(c.tw);
  }
  std::vector<std::string> names;
  for (const auto& cv : cfg.covariates) names.push_back(cv.name);
  res.data = Dataset(std::move(records), std::move(names));
  res.censored_fraction = static_cast<double>(censored) / static_cast<double>(cfg.n);
  return res;
}

void write_truth_csv(const SimulationResult& sim, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "id,t1_0,t2_0,t1_1,t2_1,stratum\n";
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const auto& t = sim.truth[i];
    out << sim.data[i].id << ',' << format_double(t.t1[0]) << ',' << format_double(t.t2[0]) << ','
        << format_double(t.t1[1]) << ',' << format_double(t.t2[1]) << ',' << stratum_name(t.stratum)
        << '\n';
  }
}

namespace {

// Empirical CDF of sorted values at t.
double ecdf(const std::vector<double>& sorted, double t) {
  if (sorted.empty()) return 0.0;
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double capped_median(std::vector<double> v, double t_star) {
  if (v.empty()) return t_star;
  const std::size_t k = (v.size() + 1) / 2 - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
  return std::min(v[k], t_star);
}

ComponentValues world_components(const std::vector<const TwoWorldRecord*>& panel, int a,
                                 const std::vector<double>& grid) {
  std::vector<double> t2_all, t2_ad, t2_nd, t1;
  std::size_t diseased = 0;
  for (const auto* r : panel) {
    t2_all.push_back(r->t2[a]);
    if (r->t1[a] <= r->t2[a]) {
      ++diseased;
      t2_ad.push_back(r->t2[a]);
      t1.push_back(r->t1[a]);
    } else {
      t2_nd.push_back(r->t2[a]);
    }
  }
  std::sort(t2_all.begin(), t2_all.end());
  std::sort(t2_ad.begin(), t2_ad.end());
  std::sort(t2_nd.begin(), t2_nd.end());
  std::sort(t1.begin(), t1.end());
  const double n = static_cast<double>(panel.size());
  ComponentValues v;
  v.eta = static_cast<double>(diseased) / n;
  std::vector<double> s2;
  for (double t : grid) {
    s2.push_back(1.0 - ecdf(t2_all, t));
    v.h.push_back(ecdf(t2_ad, t) * static_cast<double>(t2_ad.size()) / n);
    v.g.push_back(ecdf(t2_nd, t) * static_cast<double>(t2_nd.size()) / n);
    v.s1.push_back(1.0 - ecdf(t1, t) * static_cast<double>(t1.size()) / n);
  }
  v.s2 = StepFunction(grid, s2, 1.0);
  return v;
}

}  // namespace

const ScalarEffect& PopulationTruth::operator[](EffectId e) const {
  for (std::size_t i = 0; i < kScalarEffects.size(); ++i)
    if (kScalarEffects[i] == e) return scalar[i];
  throw std::invalid_argument("not a scalar effect");
}

PopulationTruth population_functionals(const ScenarioConfig& config, std::vector<double> t_grid,
                                       double t_star, std::size_t mc_size) {
  config.validate();
  if (mc_size < 2) throw InvalidSpec("population Monte Carlo size must be >= 2");
  ScenarioConfig cfg = config;
  cfg.entry = EntrySpec{};
  std::sort(t_grid.begin(), t_grid.end());
  t_grid.erase(std::unique(t_grid.begin(), t_grid.end()), t_grid.end());

  const std::uint64_t pseed = derive_seed(cfg.seed, streams::population, 0);
  const FrailtyDraws fd = sample_frailty_pairs(cfg.frailty, mc_size, pseed);
  std::vector<TwoWorldRecord> panel(mc_size);
  std::vector<int> zl(mc_size, -1);
  const std::size_t blocks = (mc_size + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    for (std::size_t i = b * kBlock; i < std::min(mc_size, (b + 1) * kBlock); ++i) {
      Candidate c = draw_candidate(cfg, pseed, i, fd.g0[i], fd.g1[i]);
      panel[i] = c.tw;
      zl[i] = c.z;
    }
  });

  PopulationTruth pt;
  pt.mc_size = mc_size;
  pt.t_star = t_star;
  pt.grid = t_grid;
  const double m = static_cast<double>(mc_size);
  std::array<std::size_t, 4> counts{};
  for (const auto& r : panel) ++counts[static_cast<std::size_t>(r.stratum)];
  pt.pi_ad = static_cast<double>(counts[0]) / m;
  pt.pi_nd = static_cast<double>(counts[1]) / m;
  pt.pi_dh = static_cast<double>(counts[2]) / m;
  pt.pi_dp = static_cast<double>(counts[3]) / m;

  // per-stratum potential times in worlds 0 and 1
  struct Pair {
    std::vector<double> w0, w1;
  };
  Pair t2ad, t2nd, t1ad;
  for (const auto& r : panel) {
    if (r.stratum == Stratum::ad) {
      t2ad.w0.push_back(r.t2[0]);
      t2ad.w1.push_back(r.t2[1]);
      t1ad.w0.push_back(r.t1[0]);
      t1ad.w1.push_back(r.t1[1]);
    } else if (r.stratum == Stratum::nd) {
      t2nd.w0.push_back(r.t2[0]);
      t2nd.w1.push_back(r.t2[1]);
    }
  }
  const std::array<const Pair*, 3> pairs{&t2ad, &t2nd, &t1ad};
  for (std::size_t e = 0; e < 3; ++e) {
    const Pair& p = *pairs[e];
    const double ns = static_cast<double>(p.w0.size());
    std::vector<double> both(p.w0.size());
    for (std::size_t i = 0; i < both.size(); ++i) both[i] = std::max(p.w0[i], p.w1[i]);
    const auto s0 = sorted_copy(p.w0), s1 = sorted_copy(p.w1), sb = sorted_copy(both);
    for (double t : t_grid) {
      const double f0 = ecdf(s0, t), f1 = ecdf(s1, t), f11 = ecdf(sb, t);
      const double mean = f1 - f0, second = f1 + f0 - 2.0 * f11;
      pt.curve[e].push_back(mean);
      pt.curve_se[e].push_back(ns > 1.0 ? std::sqrt(std::max(0.0, second - mean * mean) / (ns - 1.0)) : 0.0);
    }
  }

  auto rmst = [&](const Pair& p) {
    const double ns = static_cast<double>(p.w0.size());
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < p.w0.size(); ++i) {
      const double y = std::min(p.w1[i], t_star) - std::min(p.w0[i], t_star);
      s += y;
      ss += y * y;
    }
    const double mean = ns > 0.0 ? s / ns : 0.0;
    return ScalarEffect{mean, ns > 1.0 ? std::sqrt(std::max(0.0, ss / ns - mean * mean) / (ns - 1.0)) : 0.0};
  };
  auto& sc = pt.scalar;
  auto slot = [](EffectId id) {
    return static_cast<std::size_t>(std::find(kScalarEffects.begin(), kScalarEffects.end(), id) -
                                    kScalarEffects.begin());
  };
  sc[slot(EffectId::t2_ad_rmst)] = rmst(t2ad);
  sc[slot(EffectId::t1_ad_rmst)] = rmst(t1ad);
  sc[slot(EffectId::t2_nd_rmst)] = rmst(t2nd);
  {
    // SE from the per-subject contrast of the two restricted means
    const double ns = static_cast<double>(t2ad.w0.size());
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < t2ad.w0.size(); ++i) {
      const double y = (std::min(t2ad.w1[i], t_star) - std::min(t2ad.w0[i], t_star)) -
                       (std::min(t1ad.w1[i], t_star) - std::min(t1ad.w0[i], t_star));
      s += y;
      ss += y * y;
    }
    const double mean = ns > 0.0 ? s / ns : 0.0;
    sc[slot(EffectId::gap_ad_rmst)] = {
        mean, ns > 1.0 ? std::sqrt(std::max(0.0, ss / ns - mean * mean) / (ns - 1.0)) : 0.0};
  }
  auto median_effect = [&](const Pair& p) {
    const double est = capped_median(p.w1, t_star) - capped_median(p.w0, t_star);
    constexpr std::size_t J = 20;
    const std::size_t n = p.w0.size();
    if (n < 2 * J) return ScalarEffect{est, 0.0};
    double s = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const auto lo = static_cast<long>(j * n / J), hi = static_cast<long>((j + 1) * n / J);
      const std::vector<double> b0(p.w0.begin() + lo, p.w0.begin() + hi);
      const std::vector<double> b1(p.w1.begin() + lo, p.w1.begin() + hi);
      const double v = capped_median(b1, t_star) - capped_median(b0, t_star);
      s += v;
      ss += v * v;
    }
    const double mean = s / J;
    return ScalarEffect{est, std::sqrt(std::max(0.0, (ss - J * mean * mean) / (J - 1)) / J)};
  };
  sc[slot(EffectId::t2_ad_median)] = median_effect(t2ad);
  sc[slot(EffectId::t1_ad_median)] = median_effect(t1ad);
  sc[slot(EffectId::t2_nd_median)] = median_effect(t2nd);

  std::vector<const TwoWorldRecord*> all(mc_size);
  for (std::size_t i = 0; i < mc_size; ++i) all[i] = &panel[i];
  for (int a = 0; a < 2; ++a) {
    pt.components[a] = world_components(all, a, t_grid);
    pt.eta[a] = pt.components[a].eta;
  }
  if (cfg.z) {
    pt.z_levels = cfg.z->levels;
    for (std::size_t k = 0; k < cfg.z->levels.size(); ++k) {
      std::vector<const TwoWorldRecord*> sub;
      for (std::size_t i = 0; i < mc_size; ++i)
        if (zl[i] == static_cast<int>(k)) sub.push_back(&panel[i]);
      if (sub.empty()) throw InvalidSpec("z level '" + cfg.z->levels[k] + "' never drawn");
      pt.p_z.push_back(static_cast<double>(sub.size()) / m);
      pt.components_z.push_back({world_components(sub, 0, t_grid), world_components(sub, 1, t_grid)});
    }
  }
  return pt;
}

}  // namespace semicomp
