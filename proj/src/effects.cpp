#include "semicomp/effects.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"
#include "semicomp/random.hpp"

namespace semicomp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Baseline jumps of one fit merged onto the union of its knots.
struct ArmKnots {
  std::vector<double> t, d01, d02, d12;
  std::array<std::vector<double>, 3> beta;
  double last = 0.0;
};

ArmKnots arm_knots(const IdmFit& fit) {
  ArmKnots ak;
  for (const auto& tf : fit.transitions)
    ak.t.insert(ak.t.end(), tf.cumhaz.knots().begin(), tf.cumhaz.knots().end());
  std::sort(ak.t.begin(), ak.t.end());
  ak.t.erase(std::unique(ak.t.begin(), ak.t.end()), ak.t.end());
  std::array<std::vector<double>*, 3> out{&ak.d01, &ak.d02, &ak.d12};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& f = fit.transitions[j].cumhaz;
    out[j]->assign(ak.t.size(), 0.0);
    std::size_t k = 0;
    double prev = 0.0;
    for (std::size_t l = 0; l < f.size(); ++l) {
      while (ak.t[k] != f.knots()[l]) ++k;
      (*out[j])[k] = f.values()[l] - prev;
      prev = f.values()[l];
    }
    ak.beta[j] = fit.transitions[j].beta;
  }
  ak.last = ak.t.empty() ? 0.0 : ak.t.back();
  return ak;
}

double linear(std::span<const double> x, const std::vector<double>& b) {
  if (b.size() != x.size()) throw InvalidSpec("covariate profile length does not match the fit");
  double s = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) s += x[j] * b[j];
  return s;
}

// Forward sweep of the frailty-conditional process. Within a knot, diseased
// subjects first face their 1->2 jump, then state-0 subjects leave by the
// competing 0->1 / 0->2 jumps (exact for constant intensities within the
// jump). Fills d1, n2, m2 at each knot and returns eta.
double sweep(const ArmKnots& ak, double gamma, std::span<const double> x, double* d1, double* n2,
             double* m2) {
  const double r01 = gamma * std::exp(linear(x, ak.beta[0]));
  const double r02 = gamma * std::exp(linear(x, ak.beta[1]));
  const double r12 = gamma * std::exp(linear(x, ak.beta[2]));
  double s0 = 1.0, ill = 0.0, D1 = 0.0, N2 = 0.0, M2 = 0.0;
  for (std::size_t k = 0; k < ak.t.size(); ++k) {
    if (ak.d12[k] > 0.0 && ill > 0.0) {
      const double dead = -ill * std::expm1(-r12 * ak.d12[k]);
      ill -= dead;
      N2 += dead;
    }
    const double a = r01 * ak.d01[k], b = r02 * ak.d02[k];
    if (a + b > 0.0) {
      const double leave = -s0 * std::expm1(-(a + b));
      const double p1 = leave * (a / (a + b));
      s0 -= leave;
      ill += p1;
      D1 += p1;
      M2 += leave - p1;
    }
    d1[k] = D1;
    n2[k] = N2;
    m2[k] = M2;
  }
  return D1;
}

// Integral over [0, t_star] of a step function given by values at knots.
double integral_to(const std::vector<double>& t, const double* v, double t_star) {
  double area = 0.0;
  for (std::size_t k = 0; k < t.size() && t[k] < t_star; ++k) {
    const double next = k + 1 < t.size() ? std::min(t[k + 1], t_star) : t_star;
    area += v[k] * (next - t[k]);
  }
  return area;
}

// Index of the last knot <= t, or -1.
std::vector<long> knot_index(const std::vector<double>& knots, const std::vector<double>& grid) {
  std::vector<long> idx(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g)
    idx[g] = static_cast<long>(std::upper_bound(knots.begin(), knots.end(), grid[g]) - knots.begin()) - 1;
  return idx;
}

double at(const double* v, long i) { return i < 0 ? 0.0 : v[i]; }

std::vector<double> ratio(const std::vector<double>& num, double den) {
  std::vector<double> out(num.size());
  for (std::size_t k = 0; k < num.size(); ++k) out[k] = den > 0.0 ? std::min(1.0, num[k] / den) : 0.0;
  return out;
}

// p-quantile of the mixed CDF (accumulated numerator / denominator on the
// knots), linearly interpolated inside the knot interval where F crosses p so
// the estimate moves continuously with F rather than in whole knot gaps.
double mixed_quantile(const std::vector<double>& knots, const std::vector<double>& num, double den,
                      double p) {
  const double level = p * den;
  double t_prev = 0.0, f_prev = 0.0;
  for (std::size_t k = 0; k < knots.size(); ++k) {
    if (num[k] >= level) {
      const double jump = num[k] - f_prev;
      if (!(jump > 0.0)) return knots[k];
      return t_prev + std::max(0.0, level - f_prev) / jump * (knots[k] - t_prev);
    }
    t_prev = knots[k];
    f_prev = num[k];
  }
  return kInf;
}

double mixed_median(const std::vector<double>& knots, const std::vector<double>& num, double den) {
  return mixed_quantile(knots, num, den, 0.5);
}

// Mixed CDF at t on the same piecewise-linear interpolant.
double mixed_cdf(const std::vector<double>& knots, const std::vector<double>& num, double den, double t) {
  if (!(den > 0.0)) return 0.0;
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - knots.begin());
  if (k == knots.size()) return knots.empty() ? 0.0 : num.back() / den;
  const double t0 = k ? knots[k - 1] : 0.0, f0 = k ? num[k - 1] : 0.0;
  return (f0 + (num[k] - f0) * (t - t0) / (knots[k] - t0)) / den;
}

// Running sums for a ratio estimator sum(Y)/sum(W) and its delta-method SE.
struct RatioSums {
  double y = 0.0, yy = 0.0, yw = 0.0;
  void add(double yv, double w) {
    y += yv;
    yy += yv * yv;
    yw += yv * w;
  }
  void merge(const RatioSums& o) {
    y += o.y;
    yy += o.yy;
    yw += o.yw;
  }
};

ScalarEffect ratio_effect(const RatioSums& s, double w, double ww, double sign) {
  const double r = s.y / w;
  const double var = std::max(0.0, s.yy - 2.0 * r * s.yw + r * r * ww) / (w * w);
  return {sign * r, std::sqrt(var)};
}

struct Batch {
  // numerators of the stratum-mixed CDFs on each arm's knots
  std::array<std::vector<double>, 2> f2_ad, f1_ad, f2_nd;
  double w_ad = 0.0, w_nd = 0.0, w_dh = 0.0, w_dp = 0.0, ww_ad = 0.0, ww_nd = 0.0;
  RatioSums r_t2ad, r_t1ad, r_gap, r_t2nd;
  std::array<std::vector<RatioSums>, 3> curve;
};

void merge(Batch& into, const Batch& b) {
  for (int a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < into.f2_ad[a].size(); ++k) {
      into.f2_ad[a][k] += b.f2_ad[a][k];
      into.f1_ad[a][k] += b.f1_ad[a][k];
      into.f2_nd[a][k] += b.f2_nd[a][k];
    }
  into.w_ad += b.w_ad;
  into.w_nd += b.w_nd;
  into.w_dh += b.w_dh;
  into.w_dp += b.w_dp;
  into.ww_ad += b.ww_ad;
  into.ww_nd += b.ww_nd;
  into.r_t2ad.merge(b.r_t2ad);
  into.r_t1ad.merge(b.r_t1ad);
  into.r_gap.merge(b.r_gap);
  into.r_t2nd.merge(b.r_t2nd);
  for (std::size_t e = 0; e < 3; ++e)
    for (std::size_t g = 0; g < into.curve[e].size(); ++g) into.curve[e][g].merge(b.curve[e][g]);
}

std::size_t scalar_slot(EffectId e) {
  for (std::size_t i = 0; i < kScalarEffects.size(); ++i)
    if (kScalarEffects[i] == e) return i;
  throw std::invalid_argument("not a scalar effect");
}

void check_request(const IdmFit& fit0, const IdmFit& fit1, const EffectRequest& req) {
  if (!(req.t_star > 0.0)) throw InvalidSpec("t_star must be positive");
  if (req.draws < 1) throw InvalidSpec("Monte Carlo size must be >= 1");
  const std::size_t p = fit0.transitions[0].beta.size();
  if (fit1.transitions[0].beta.size() != p) throw InvalidSpec("fits differ in covariate dimension");
  if (p > 0 && req.x_pool.empty()) throw InvalidSpec("covariate profiles required for effects");
  for (const auto& x : req.x_pool)
    if (x.size() != p) throw InvalidSpec("covariate profile length does not match the fits");
}

}  // namespace

std::vector<double> ConditionalFunctionals::f1_ad() const { return ratio(d1, eta); }
std::vector<double> ConditionalFunctionals::f2_ad() const { return ratio(n2, eta); }
std::vector<double> ConditionalFunctionals::f2_nd() const { return ratio(m2, 1.0 - eta); }

const char* effect_name(EffectId e) {
  switch (e) {
    case EffectId::t2_ad_curve: return "T2_ad";
    case EffectId::t2_nd_curve: return "T2_nd";
    case EffectId::t1_ad_curve: return "T1_ad";
    case EffectId::t2_ad_rmst: return "ATE_T2_ad";
    case EffectId::t1_ad_rmst: return "ATE_T1_ad";
    case EffectId::gap_ad_rmst: return "ATE_T2minusT1_ad";
    case EffectId::t2_nd_rmst: return "ATE_T2_nd";
    case EffectId::t2_ad_median: return "MTE_T2_ad";
    case EffectId::t1_ad_median: return "MTE_T1_ad";
    case EffectId::t2_nd_median: return "MTE_T2_nd";
  }
  return "?";
}

const ScalarEffect& EffectResult::operator[](EffectId e) const { return scalar[scalar_slot(e)]; }

ConditionalFunctionals conditional_functionals(const IdmFit& fit, double gamma,
                                               std::span<const double> x,
                                               std::span<const double> t_grid) {
  if (!(gamma >= 0.0)) throw InvalidSpec("frailty value must be >= 0");
  const ArmKnots ak = arm_knots(fit);
  const std::size_t K = ak.t.size();
  std::vector<double> d1(K), n2(K), m2(K);
  ConditionalFunctionals cf;
  cf.eta = sweep(ak, gamma, x, d1.data(), n2.data(), m2.data());
  cf.grid.assign(t_grid.begin(), t_grid.end());
  const auto idx = knot_index(ak.t, cf.grid);
  for (long i : idx) {
    cf.d1.push_back(at(d1.data(), i));
    cf.n2.push_back(at(n2.data(), i));
    cf.m2.push_back(at(m2.data(), i));
  }
  return cf;
}

ConditionalFunctionals conditional_functionals_microsim(const IdmFit& fit, double gamma,
                                                        std::span<const double> x,
                                                        std::span<const double> t_grid,
                                                        std::size_t m, std::uint64_t seed) {
  const ArmKnots ak = arm_knots(fit);
  const double r01 = gamma * std::exp(linear(x, ak.beta[0]));
  const double r02 = gamma * std::exp(linear(x, ak.beta[1]));
  const double r12 = gamma * std::exp(linear(x, ak.beta[2]));
  ConditionalFunctionals cf;
  cf.grid.assign(t_grid.begin(), t_grid.end());
  const std::size_t G = cf.grid.size();
  cf.d1.assign(G, 0.0);
  cf.n2.assign(G, 0.0);
  cf.m2.assign(G, 0.0);
  Engine eng = make_engine(seed, streams::paths);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t diseased = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double t1 = kInf, t2 = kInf;
    int state = 0;
    for (std::size_t k = 0; k < ak.t.size() && state != 2; ++k) {
      if (state == 1 && ak.d12[k] > 0.0 && unif(eng) < -std::expm1(-r12 * ak.d12[k])) {
        t2 = ak.t[k];
        state = 2;
        break;
      }
      const double a = r01 * ak.d01[k], b = r02 * ak.d02[k];
      if (state == 0 && a + b > 0.0 && unif(eng) < -std::expm1(-(a + b))) {
        if (unif(eng) < a / (a + b)) {
          t1 = ak.t[k];
          state = 1;
        } else {
          t2 = ak.t[k];
          state = 2;
        }
      }
    }
    if (t1 < kInf) ++diseased;
    for (std::size_t g = 0; g < G; ++g) {
      const double t = cf.grid[g];
      if (t1 <= t) cf.d1[g] += 1.0;
      if (t1 < kInf && t2 <= t) cf.n2[g] += 1.0;
      if (t1 == kInf && t2 <= t) cf.m2[g] += 1.0;
    }
  }
  const double mm = static_cast<double>(m);
  cf.eta = static_cast<double>(diseased) / mm;
  for (std::size_t g = 0; g < G; ++g) {
    cf.d1[g] /= mm;
    cf.n2[g] /= mm;
    cf.m2[g] /= mm;
  }
  return cf;
}

EffectResult frailty_effects(const IdmFit& fit0, const IdmFit& fit1, const EffectRequest& req,
                           std::uint64_t seed) {
  check_request(fit0, fit1, req);
  const std::size_t B = req.draws;
  const std::array<ArmKnots, 2> ak{arm_knots(fit0), arm_knots(fit1)};
  const FrailtyDraws fd = sample_frailty_pairs(req.frailty, B, seed);

  // covariate profile for each draw
  std::vector<std::size_t> xi(B, 0);
  if (req.x_pool.size() > 1) {
    constexpr std::size_t kBlock = 4096;
    for (std::size_t blk = 0; blk * kBlock < B; ++blk) {
      Engine e = make_engine(seed, streams::resample_x, blk);
      std::uniform_int_distribution<std::size_t> pick(0, req.x_pool.size() - 1);
      for (std::size_t i = blk * kBlock; i < std::min(B, (blk + 1) * kBlock); ++i) xi[i] = pick(e);
    }
  }
  const std::vector<double> no_x;
  auto profile = [&](std::size_t b) -> std::span<const double> {
    return req.x_pool.empty() ? std::span<const double>(no_x) : std::span<const double>(req.x_pool[xi[b]]);
  };

  std::vector<double> grid = req.t_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::array<std::vector<long>, 2> gidx{knot_index(ak[0].t, grid), knot_index(ak[1].t, grid)};
  const std::size_t G = grid.size();

  const std::size_t J = std::min<std::size_t>(20, B);
  std::vector<Batch> batches(J);
  parallel_for(J, [&](std::size_t j) {
    Batch& bt = batches[j];
    for (int a = 0; a < 2; ++a) {
      bt.f2_ad[a].assign(ak[a].t.size(), 0.0);
      bt.f1_ad[a].assign(ak[a].t.size(), 0.0);
      bt.f2_nd[a].assign(ak[a].t.size(), 0.0);
    }
    for (auto& c : bt.curve) c.assign(G, RatioSums{});
    std::array<std::vector<double>, 2> d1, n2, m2;
    for (int a = 0; a < 2; ++a) {
      d1[a].resize(ak[a].t.size());
      n2[a].resize(ak[a].t.size());
      m2[a].resize(ak[a].t.size());
    }
    const std::size_t lo = j * B / J, hi = (j + 1) * B / J;
    for (std::size_t b = lo; b < hi; ++b) {
      const auto x = profile(b);
      const double e0 = sweep(ak[0], fd.g0[b], x, d1[0].data(), n2[0].data(), m2[0].data());
      const double e1 = sweep(ak[1], fd.g1[b], x, d1[1].data(), n2[1].data(), m2[1].data());
      const double w_ad = e0 * e1, w_nd = (1.0 - e0) * (1.0 - e1);
      bt.w_ad += w_ad;
      bt.w_nd += w_nd;
      bt.w_dh += (1.0 - e0) * e1;
      bt.w_dp += e0 * (1.0 - e1);
      bt.ww_ad += w_ad * w_ad;
      bt.ww_nd += w_nd * w_nd;
      const std::array<double, 2> other_ad{e1, e0}, other_nd{1.0 - e1, 1.0 - e0};
      for (int a = 0; a < 2; ++a)
        for (std::size_t k = 0; k < ak[a].t.size(); ++k) {
          bt.f2_ad[a][k] += other_ad[a] * n2[a][k];
          bt.f1_ad[a][k] += other_ad[a] * d1[a][k];
          bt.f2_nd[a][k] += other_nd[a] * m2[a][k];
        }
      const double ts = req.t_star;
      const double y_t2ad = e0 * integral_to(ak[1].t, n2[1].data(), ts) -
                            e1 * integral_to(ak[0].t, n2[0].data(), ts);
      const double y_t1ad = e0 * integral_to(ak[1].t, d1[1].data(), ts) -
                            e1 * integral_to(ak[0].t, d1[0].data(), ts);
      const double y_t2nd = (1.0 - e0) * integral_to(ak[1].t, m2[1].data(), ts) -
                            (1.0 - e1) * integral_to(ak[0].t, m2[0].data(), ts);
      bt.r_t2ad.add(y_t2ad, w_ad);
      bt.r_t1ad.add(y_t1ad, w_ad);
      bt.r_gap.add(y_t2ad - y_t1ad, w_ad);
      bt.r_t2nd.add(y_t2nd, w_nd);
      for (std::size_t g = 0; g < G; ++g) {
        const long i0 = gidx[0][g], i1 = gidx[1][g];
        bt.curve[0][g].add(e0 * at(n2[1].data(), i1) - e1 * at(n2[0].data(), i0), w_ad);
        bt.curve[1][g].add((1.0 - e0) * at(m2[1].data(), i1) - (1.0 - e1) * at(m2[0].data(), i0),
                           w_nd);
        bt.curve[2][g].add(e0 * at(d1[1].data(), i1) - e1 * at(d1[0].data(), i0), w_ad);
      }
    }
  });

  Batch total = batches[0];
  for (std::size_t j = 1; j < J; ++j) merge(total, batches[j]);
  const double Bd = static_cast<double>(B);
  if (total.w_ad < 1e-8 * Bd) throw VanishingStratum("ad");
  if (total.w_nd < 1e-8 * Bd) throw VanishingStratum("nd");

  EffectResult res;
  res.rho = req.frailty.rho;
  res.draws = B;
  res.t_star = req.t_star;
  res.grid = grid;
  res.frailty_construction = construction(req.frailty);
  res.beyond_support = req.t_star > std::min(ak[0].last, ak[1].last);
  res.pi_ad = total.w_ad / Bd;
  res.pi_nd = total.w_nd / Bd;
  res.pi_dh = total.w_dh / Bd;
  res.pi_dp = total.w_dp / Bd;

  const std::array<double, 3> w{total.w_ad, total.w_nd, total.w_ad};
  const std::array<double, 3> ww{total.ww_ad, total.ww_nd, total.ww_ad};
  for (std::size_t e = 0; e < 3; ++e) {
    res.curve[e].resize(G);
    res.curve_se[e].resize(G);
    for (std::size_t g = 0; g < G; ++g) {
      const ScalarEffect s = ratio_effect(total.curve[e][g], w[e], ww[e], 1.0);
      res.curve[e][g] = std::clamp(s.estimate, -1.0, 1.0);
      res.curve_se[e][g] = s.mc_se;
    }
  }

  auto& sc = res.scalar;
  sc[scalar_slot(EffectId::t2_ad_rmst)] = ratio_effect(total.r_t2ad, total.w_ad, total.ww_ad, -1.0);
  sc[scalar_slot(EffectId::t1_ad_rmst)] = ratio_effect(total.r_t1ad, total.w_ad, total.ww_ad, -1.0);
  sc[scalar_slot(EffectId::t2_nd_rmst)] = ratio_effect(total.r_t2nd, total.w_nd, total.ww_nd, -1.0);
  ScalarEffect gap = ratio_effect(total.r_gap, total.w_ad, total.ww_ad, -1.0);
  const double gap_direct = gap.estimate;
  gap.estimate = sc[scalar_slot(EffectId::t2_ad_rmst)].estimate - sc[scalar_slot(EffectId::t1_ad_rmst)].estimate;
  if (std::abs(gap.estimate - gap_direct) > 1e-12 * std::max(1.0, std::abs(gap_direct)))
    throw EstimationError("restricted-mean gap effect is inconsistent with its components");
  sc[scalar_slot(EffectId::gap_ad_rmst)] = gap;

  // Median effects with a Woodruff-type MC SE: batch means give the SE of each
  // arm's mixed CDF at its estimated median (a smooth ratio statistic), which
  // is inverted through the CDF. Batch medians themselves are too noisy to be
  // in their linear regime when the CDF is flat near 1/2.
  auto median_effect = [&](auto member, double Batch::*den) -> ScalarEffect {
    std::array<double, 2> m{}, hw{}, sd{};
    std::array<std::vector<double>, 2> fj;
    for (int a = 0; a < 2; ++a) {
      const auto& num = (total.*member)[a];
      m[a] = std::min(mixed_median(ak[a].t, num, total.*den), req.t_star);
      for (const auto& bt : batches) fj[a].push_back(mixed_cdf(ak[a].t, (bt.*member)[a], bt.*den, m[a]));
    }
    const double Jd = static_cast<double>(J);
    double cov = 0.0;
    if (J >= 2) {
      std::array<double, 2> mean{};
      for (int a = 0; a < 2; ++a) {
        for (double v : fj[a]) mean[a] += v / Jd;
        double ss = 0.0;
        for (double v : fj[a]) ss += (v - mean[a]) * (v - mean[a]);
        sd[a] = std::sqrt(ss / (Jd - 1.0) / Jd);
      }
      for (std::size_t j = 0; j < J; ++j) cov += (fj[0][j] - mean[0]) * (fj[1][j] - mean[1]);
      cov /= (Jd - 1.0) * Jd;
    }
    for (int a = 0; a < 2; ++a) {
      const auto& num = (total.*member)[a];
      const double hi = std::min(mixed_quantile(ak[a].t, num, total.*den, std::min(1.0, 0.5 + sd[a])), req.t_star);
      const double lo = std::min(mixed_quantile(ak[a].t, num, total.*den, std::max(0.0, 0.5 - sd[a])), req.t_star);
      hw[a] = 0.5 * (hi - lo);
    }
    const double corr = sd[0] > 0.0 && sd[1] > 0.0 ? std::clamp(cov / (sd[0] * sd[1]), -1.0, 1.0) : 0.0;
    const double var = hw[0] * hw[0] + hw[1] * hw[1] - 2.0 * corr * hw[0] * hw[1];
    return {m[1] - m[0], std::sqrt(std::max(0.0, var))};
  };
  sc[scalar_slot(EffectId::t2_ad_median)] = median_effect(&Batch::f2_ad, &Batch::w_ad);
  sc[scalar_slot(EffectId::t1_ad_median)] = median_effect(&Batch::f1_ad, &Batch::w_ad);
  sc[scalar_slot(EffectId::t2_nd_median)] = median_effect(&Batch::f2_nd, &Batch::w_nd);
  return res;
}

namespace {

// Generalized Gauss-Laguerre rule for weight x^alpha e^-x, normalized so the
// weights sum to 1 (an expectation over Gamma(alpha + 1, 1)).
Quadrature gauss_laguerre(std::size_t n, double alpha) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double kd = static_cast<double>(k);
    J(i, i) = 2.0 * kd + alpha + 1.0;
    if (k + 1 < n) J(i, i + 1) = J(i + 1, i) = std::sqrt((kd + 1.0) * (kd + 1.0 + alpha));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    q.nodes.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    q.weights.push_back(v * v);
    total += v * v;
  }
  for (double& w : q.weights) w /= total;
  return q;
}

}  // namespace

EffectResult effects_independent_quadrature(const IdmFit& fit0, const IdmFit& fit1,
                                            const EffectRequest& req, std::size_t nodes) {
  check_request(fit0, fit1, req);
  const std::array<ArmKnots, 2> ak{arm_knots(fit0), arm_knots(fit1)};
  const std::array<double, 2> theta{req.frailty.theta0, req.frailty.theta1};
  std::vector<double> grid = req.t_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::size_t G = grid.size();
  const std::array<std::vector<long>, 2> gidx{knot_index(ak[0].t, grid), knot_index(ak[1].t, grid)};

  // per arm and covariate profile: E over gamma of eta, of the sub-distribution
  // curves at the grid, of their integrals to t*, and of the full knot arrays
  struct Moments {
    double eta = 0.0;
    std::vector<double> d1, n2, m2;  // on the arm's knots
    double i_d1 = 0.0, i_n2 = 0.0, i_m2 = 0.0;
  };
  std::vector<std::vector<double>> pool = req.x_pool;
  if (pool.empty()) pool.emplace_back();
  std::vector<std::array<Moments, 2>> mom(pool.size());
  for (int a = 0; a < 2; ++a) {
    const std::size_t K = ak[a].t.size();
    std::vector<double> nodes_g{1.0}, weights{1.0};
    if (theta[a] > 0.0) {
      const Quadrature q = gauss_laguerre(nodes, 1.0 / theta[a] - 1.0);
      nodes_g.clear();
      weights = q.weights;
      for (double v : q.nodes) nodes_g.push_back(theta[a] * v);
    }
    std::vector<double> d1(K), n2(K), m2(K);
    for (std::size_t z = 0; z < pool.size(); ++z) {
      Moments& m = mom[z][a];
      m.d1.assign(K, 0.0);
      m.n2.assign(K, 0.0);
      m.m2.assign(K, 0.0);
      for (std::size_t q = 0; q < nodes_g.size(); ++q) {
        const double wq = weights[q];
        m.eta += wq * sweep(ak[a], nodes_g[q], pool[z], d1.data(), n2.data(), m2.data());
        for (std::size_t k = 0; k < K; ++k) {
          m.d1[k] += wq * d1[k];
          m.n2[k] += wq * n2[k];
          m.m2[k] += wq * m2[k];
        }
      }
      m.i_d1 = integral_to(ak[a].t, m.d1.data(), req.t_star);
      m.i_n2 = integral_to(ak[a].t, m.n2.data(), req.t_star);
      m.i_m2 = integral_to(ak[a].t, m.m2.data(), req.t_star);
    }
  }

  EffectResult res;
  res.rho = 0.0;
  res.t_star = req.t_star;
  res.grid = grid;
  res.frailty_construction = "independent-quadrature";
  res.beyond_support = req.t_star > std::min(ak[0].last, ak[1].last);
  double w_ad = 0.0, w_nd = 0.0, w_dh = 0.0, w_dp = 0.0;
  double y_t2ad = 0.0, y_t1ad = 0.0, y_t2nd = 0.0;
  std::array<std::vector<double>, 3> curve;
  for (auto& c : curve) c.assign(G, 0.0);
  std::array<std::vector<double>, 2> f2_ad, f1_ad, f2_nd;
  for (int a = 0; a < 2; ++a) {
    f2_ad[a].assign(ak[a].t.size(), 0.0);
    f1_ad[a].assign(ak[a].t.size(), 0.0);
    f2_nd[a].assign(ak[a].t.size(), 0.0);
  }
  const double nz = static_cast<double>(pool.size());
  for (const auto& m : mom) {
    const double e0 = m[0].eta, e1 = m[1].eta;
    w_ad += e0 * e1 / nz;
    w_nd += (1.0 - e0) * (1.0 - e1) / nz;
    w_dh += (1.0 - e0) * e1 / nz;
    w_dp += e0 * (1.0 - e1) / nz;
    y_t2ad += (e0 * m[1].i_n2 - e1 * m[0].i_n2) / nz;
    y_t1ad += (e0 * m[1].i_d1 - e1 * m[0].i_d1) / nz;
    y_t2nd += ((1.0 - e0) * m[1].i_m2 - (1.0 - e1) * m[0].i_m2) / nz;
    for (std::size_t g = 0; g < G; ++g) {
      const long i0 = gidx[0][g], i1 = gidx[1][g];
      curve[0][g] += (e0 * at(m[1].n2.data(), i1) - e1 * at(m[0].n2.data(), i0)) / nz;
      curve[1][g] += ((1.0 - e0) * at(m[1].m2.data(), i1) - (1.0 - e1) * at(m[0].m2.data(), i0)) / nz;
      curve[2][g] += (e0 * at(m[1].d1.data(), i1) - e1 * at(m[0].d1.data(), i0)) / nz;
    }
    const std::array<double, 2> other_ad{e1, e0}, other_nd{1.0 - e1, 1.0 - e0};
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < ak[a].t.size(); ++k) {
        f2_ad[a][k] += other_ad[a] * m[a].n2[k] / nz;
        f1_ad[a][k] += other_ad[a] * m[a].d1[k] / nz;
        f2_nd[a][k] += other_nd[a] * m[a].m2[k] / nz;
      }
  }
  if (w_ad < 1e-8) throw VanishingStratum("ad");
  if (w_nd < 1e-8) throw VanishingStratum("nd");
  res.pi_ad = w_ad;
  res.pi_nd = w_nd;
  res.pi_dh = w_dh;
  res.pi_dp = w_dp;
  const std::array<double, 3> w{w_ad, w_nd, w_ad};
  for (std::size_t e = 0; e < 3; ++e) {
    res.curve[e].resize(G);
    res.curve_se[e].assign(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) res.curve[e][g] = std::clamp(curve[e][g] / w[e], -1.0, 1.0);
  }
  auto& sc = res.scalar;
  sc[scalar_slot(EffectId::t2_ad_rmst)] = {-y_t2ad / w_ad, 0.0};
  sc[scalar_slot(EffectId::t1_ad_rmst)] = {-y_t1ad / w_ad, 0.0};
  sc[scalar_slot(EffectId::gap_ad_rmst)] = {-y_t2ad / w_ad + y_t1ad / w_ad, 0.0};
  sc[scalar_slot(EffectId::t2_nd_rmst)] = {-y_t2nd / w_nd, 0.0};
  auto capped = [&](int a, const std::vector<double>& num, double den) {
    return std::min(mixed_median(ak[a].t, num, den), req.t_star);
  };
  sc[scalar_slot(EffectId::t2_ad_median)] = {capped(1, f2_ad[1], w_ad) - capped(0, f2_ad[0], w_ad), 0.0};
  sc[scalar_slot(EffectId::t1_ad_median)] = {capped(1, f1_ad[1], w_ad) - capped(0, f1_ad[0], w_ad), 0.0};
  sc[scalar_slot(EffectId::t2_nd_median)] = {capped(1, f2_nd[1], w_nd) - capped(0, f2_nd[0], w_nd), 0.0};
  return res;
}

std::vector<EffectResult> rho_sweep(const IdmFit& fit0, const IdmFit& fit1,
                                    const EffectRequest& request, std::span<const double> rhos,
                                    std::uint64_t seed) {
  if (rhos.empty()) throw InvalidSpec("rho sweep needs at least one value");
  std::vector<EffectResult> out;
  for (double rho : rhos) {
    EffectRequest r = request;
    r.frailty.rho = rho;
    out.push_back(frailty_effects(fit0, fit1, r, seed));
  }
  return out;
}

}  // namespace semicomp
