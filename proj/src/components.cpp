#include "semicomp/components.hpp"

#include <algorithm>
#include <cmath>

#include "conditional_km.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"

namespace semicomp {

const StepFunction& ComponentSet::s1_ad() const {
  if (!s1_ad_curve) throw DegenerateEta("arm " + std::to_string(arm) + ": Pr(T1 <= T2) is 0");
  return *s1_ad_curve;
}

const StepFunction& ComponentSet::s2_ad() const {
  if (!s2_ad_curve) throw DegenerateEta("arm " + std::to_string(arm) + ": Pr(T1 <= T2) is 0");
  return *s2_ad_curve;
}

const StepFunction& ComponentSet::s2_nd() const {
  if (!s2_nd_curve) throw DegenerateEta("arm " + std::to_string(arm) + ": Pr(T1 <= T2) is 1");
  return *s2_nd_curve;
}

std::vector<double> default_grid(const Dataset& data, std::span<const double> extra) {
  std::vector<double> g(extra.begin(), extra.end());
  for (const auto& r : data.records()) {
    if (r.delta1 == 1) g.push_back(r.t1_obs);
    if (r.delta2 == 1) g.push_back(r.t2_obs);
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

namespace {

// Clamp to [0, 1] and remove rounding-level increases (decreases for CDFs).
void as_survival(std::vector<double>& v) {
  double run = 1.0;
  for (double& x : v) {
    x = std::clamp(x, 0.0, 1.0);
    run = std::min(run, x);
    x = run;
  }
}

void as_cdf(std::vector<double>& v) {
  double run = 0.0;
  for (double& x : v) {
    x = std::clamp(x, 0.0, 1.0);
    run = std::max(run, x);
    x = run;
  }
}

std::vector<double> sorted_grid(std::span<const double> t_grid) {
  std::vector<double> g(t_grid.begin(), t_grid.end());
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  for (double t : g)
    if (!std::isfinite(t) || t < 0.0) throw InvalidSpec("grid times must be finite and >= 0");
  return g;
}

}  // namespace

ComponentSet components_from_values(int arm, std::vector<double> grid, ComponentValues v,
                                    double support_end) {
  const std::size_t n = grid.size();
  if (v.h.size() != n || v.g.size() != n || v.s1.size() != n)
    throw std::invalid_argument("components_from_values: one value per grid point required");
  ComponentSet cs;
  cs.arm = arm;
  cs.support_end = support_end;
  cs.eta = std::clamp(v.eta, 0.0, 1.0);
  const double eta = cs.eta;

  as_cdf(v.h);
  as_cdf(v.g);
  as_survival(v.s1);
  std::vector<double> f2(n), eta_t2(n), f1(n);
  for (std::size_t k = 0; k < n; ++k) {
    f2[k] = std::min(1.0, v.h[k] + v.g[k]);
    eta_t2[k] = f2[k] > 0.0 ? std::clamp(v.h[k] / f2[k], 0.0, 1.0) : 0.0;
    f1[k] = std::min(eta, 1.0 - v.s1[k]);
  }
  as_cdf(f1);

  if (eta > kEtaDegenerate) {
    std::vector<double> s1_ad(n), s2_ad(n);
    for (std::size_t k = 0; k < n; ++k) {
      s1_ad[k] = (eta - f1[k]) / eta;
      s2_ad[k] = 1.0 - v.h[k] / eta;
    }
    as_survival(s1_ad);
    as_survival(s2_ad);
    cs.s1_ad_curve = StepFunction(grid, std::move(s1_ad), 1.0);
    cs.s2_ad_curve = StepFunction(grid, std::move(s2_ad), 1.0);
  }
  if (1.0 - eta > kEtaDegenerate) {
    std::vector<double> s2_nd(n);
    for (std::size_t k = 0; k < n; ++k) s2_nd[k] = 1.0 - v.g[k] / (1.0 - eta);
    as_survival(s2_nd);
    cs.s2_nd_curve = StepFunction(grid, std::move(s2_nd), 1.0);
  }

  cs.s2 = std::move(v.s2);
  cs.f2 = StepFunction(grid, std::move(f2), 0.0);
  cs.h = StepFunction(grid, std::move(v.h), 0.0);
  cs.g = StepFunction(grid, std::move(v.g), 0.0);
  cs.eta_t2 = StepFunction(grid, std::move(eta_t2), 0.0);
  cs.s1 = StepFunction(grid, std::move(v.s1), 1.0);
  cs.f1 = StepFunction(grid, std::move(f1), 0.0);
  cs.grid = std::move(grid);
  return cs;
}

ComponentSet estimate_components(const Dataset& data, int a, const KernelSpec& kernel,
                                 std::span<const double> t_grid) {
  if (data.arm_size(a) == 0) throw EmptyArm(a);
  std::vector<double> grid = t_grid.empty() ? default_grid(data) : sorted_grid(t_grid);
  const std::size_t G = grid.size();

  StepFunction km = km_survival(data, a);
  if (km.empty()) throw EstimationError("arm " + std::to_string(a) + " has no deaths");
  const auto& deaths = km.knots();
  const std::size_t M = deaths.size();
  std::vector<double> mass(M);
  double prev = 1.0;
  for (std::size_t j = 0; j < M; ++j) {
    mass[j] = prev - km.values()[j];
    prev = km.values()[j];
  }
  mass[M - 1] += prev;  // tail completion

  const double h = resolve_bandwidth(kernel, data, a);
  const detail::ConditionalKmEngine engine(data, a, kernel.family, h, kernel.scale);

  // Block partial sums; block boundaries depend only on M.
  const std::size_t block = std::max<std::size_t>(256, (M + 15) / 16);
  const std::size_t nblocks = (M + block - 1) / block;
  struct Partial {
    std::vector<double> dA, dH, dC;
    double eta = 0.0;
  };
  std::vector<Partial> parts(nblocks);
  auto grid_pos = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), t) - grid.begin());
  };

  parallel_for(nblocks, [&](std::size_t b) {
    Partial& p = parts[b];
    p.dA.assign(G + 1, 0.0);
    p.dH.assign(G + 1, 0.0);
    p.dC.assign(G + 1, 0.0);
    const std::size_t lo = b * block, hi = std::min(M, lo + block);
    engine.for_each(
        std::span<const double>(deaths).subspan(lo, hi - lo),
        [&](std::size_t k, double s, const detail::ConditionalKmEngine::Curve& c) {
          const double m = mass[lo + k];
          const double surv_at_s = c.final_value();
          const std::size_t idx = grid_pos(s);
          p.dH[idx] += (1.0 - surv_at_s) * m;
          p.dC[idx] += surv_at_s * m;
          p.eta += (1.0 - surv_at_s) * m;
          // sum over grid points t < s of S_{1|T2=s}(t) * m
          std::size_t pos = 0;
          double val = 1.0;
          for (std::size_t l = 0; l < c.knots.size(); ++l) {
            const std::size_t q = grid_pos(c.knots[l]);
            if (q > pos) {
              p.dA[pos] += val * m;
              p.dA[q] -= val * m;
              pos = q;
            }
            val = c.values[l];
          }
          if (idx > pos) {
            p.dA[pos] += val * m;
            p.dA[idx] -= val * m;
          }
        });
  });

  std::vector<double> dA(G + 1, 0.0), dH(G + 1, 0.0), dC(G + 1, 0.0);
  double eta = 0.0;
  for (const auto& p : parts) {
    for (std::size_t k = 0; k <= G; ++k) {
      dA[k] += p.dA[k];
      dH[k] += p.dH[k];
      dC[k] += p.dC[k];
    }
    eta += p.eta;
  }

  ComponentValues v;
  v.eta = eta;
  v.h.resize(G);
  v.g.resize(G);
  v.s1.resize(G);
  double A = 0.0, H = 0.0, C = 0.0, F2 = 0.0;
  std::size_t j = 0;
  for (std::size_t k = 0; k < G; ++k) {
    A += dA[k];
    H += dH[k];
    C += dC[k];
    while (j < M && deaths[j] <= grid[k]) F2 += mass[j++];
    v.h[k] = H;
    v.g[k] = std::max(0.0, F2 - H);
    v.s1[k] = C + A;
  }
  const double support_end = deaths.back();
  v.s2 = std::move(km);
  ComponentSet cs = components_from_values(a, std::move(grid), std::move(v), support_end);
  cs.family = kernel.family;
  cs.scale = kernel.scale;
  cs.bandwidth = h;
  return cs;
}

}  // namespace semicomp
