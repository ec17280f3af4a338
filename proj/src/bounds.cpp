#include "semicomp/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "semicomp/errors.hpp"

namespace semicomp {

StrataProportions strata_proportions(double eta0, double eta1) {
  StrataProportions p;
  if (eta1 < eta0) {
    p.order_violation = true;
    p.pi_ad = eta1;
    p.pi_dh = 0.0;
    p.pi_nd = 1.0 - eta1;
  } else {
    p.pi_ad = eta0;
    p.pi_dh = eta1 - eta0;
    p.pi_nd = 1.0 - eta1;
  }
  return p;
}

StrataProportions strata_proportions(const ComponentSet& c0, const ComponentSet& c1) {
  return strata_proportions(c0.eta, c1.eta);
}

const char* bound_effect_name(BoundEffect e) {
  switch (e) {
    case BoundEffect::t2_ad: return "T2_ad";
    case BoundEffect::t2_nd: return "T2_nd";
    case BoundEffect::t1_ad: return "T1_ad";
  }
  return "?";
}

std::string describe_flags(std::uint32_t flags) {
  static const std::pair<std::uint32_t, const char*> names[] = {
      {bound_flags::beyond_support, "beyond_support"},
      {bound_flags::clipped, "clipped"},
      {bound_flags::empty_condition, "empty_condition"},
      {bound_flags::extension, "extension"},
      {bound_flags::rank_assumption, "rank_assumption"},
  };
  std::string out;
  for (const auto& [bit, name] : names) {
    if (!(flags & bit)) continue;
    if (!out.empty()) out += '|';
    out += name;
  }
  return out;
}

Interval bound_t2_ad(double s2_1, double h_1, double eta0, double f2_ad0) {
  return {std::max(0.0, 1.0 - s2_1 / eta0) - f2_ad0, std::min(1.0, h_1 / eta0) - f2_ad0};
}

Interval bound_t2_nd(double f2_nd1, double g_0, double s2_0, double eta1) {
  const double q = 1.0 - eta1;
  return {f2_nd1 - std::min(1.0, g_0 / q), f2_nd1 - std::max(0.0, 1.0 - s2_0 / q)};
}

Interval bound_t1_ad(double s1_1, double f1_1, double eta0, double f1_ad0) {
  return {std::max(0.0, 1.0 - s1_1 / eta0) - f1_ad0, std::min(1.0, f1_1 / eta0) - f1_ad0};
}

namespace {

std::vector<double> resolve_grid(std::span<const double> t_grid, const std::vector<double>& fallback) {
  std::vector<double> g = t_grid.empty() ? fallback : std::vector<double>(t_grid.begin(), t_grid.end());
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

struct RawBounds {
  std::array<std::vector<double>, 3> lower, upper;
  std::array<std::vector<std::uint32_t>, 3> flags;
};

// Evaluates the bound formulas of one pair of arms on the grid; the ad or nd
// effects can be skipped when their stratum is empty in this pair.
RawBounds evaluate_bounds(const ComponentSet& c0, const ComponentSet& c1,
                          const std::vector<double>& grid, bool want_ad, bool want_nd) {
  const std::size_t n = grid.size();
  RawBounds r;
  for (std::size_t e = 0; e < 3; ++e) {
    r.lower[e].assign(n, 0.0);
    r.upper[e].assign(n, 0.0);
    r.flags[e].assign(n, 0);
  }
  const double support = std::min(c0.support_end, c1.support_end);
  const double eta0 = c0.eta, eta1 = c1.eta;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid[k];
    const std::uint32_t beyond = t > support ? bound_flags::beyond_support : 0;
    if (want_ad) {
      const auto b2 = bound_t2_ad(c1.s2(t), c1.h(t), eta0, 1.0 - c0.s2_ad()(t));
      r.lower[0][k] = b2.lower;
      r.upper[0][k] = b2.upper;
      r.flags[0][k] = beyond | (c1.f2(t) > 0.0 ? 0 : bound_flags::empty_condition);
      const auto b1 = bound_t1_ad(c1.s1(t), c1.f1(t), eta0, 1.0 - c0.s1_ad()(t));
      r.lower[2][k] = b1.lower;
      r.upper[2][k] = b1.upper;
      r.flags[2][k] = beyond;
    }
    if (want_nd) {
      const auto b = bound_t2_nd(1.0 - c1.s2_nd()(t), c0.g(t), c0.s2(t), eta1);
      r.lower[1][k] = b.lower;
      r.upper[1][k] = b.upper;
      r.flags[1][k] = beyond | (c0.f2(t) > 0.0 ? 0 : bound_flags::empty_condition);
    }
  }
  return r;
}

EffectBounds make_effect(const std::vector<double>& grid, std::vector<double> lower,
                         std::vector<double> upper, std::vector<std::uint32_t> flags) {
  return {StepFunction(grid, std::move(lower), 0.0), StepFunction(grid, std::move(upper), 0.0),
          std::move(flags)};
}

}  // namespace

BoundsResult bounds_unadjusted(const ComponentSet& c0, const ComponentSet& c1,
                               std::span<const double> t_grid) {
  if (!(c0.eta > kEtaDegenerate))
    throw DegenerateEta("Pr(T1 <= T2 | A=0) is 0: always-diseased bounds undefined");
  if (!(1.0 - c1.eta > kEtaDegenerate))
    throw DegenerateEta("Pr(T1 <= T2 | A=1) is 1: never-diseased bounds undefined");
  BoundsResult out;
  out.variant = "unadj";
  out.grid = resolve_grid(t_grid, c0.grid);
  out.strata = strata_proportions(c0, c1);
  out.support_end = std::min(c0.support_end, c1.support_end);
  RawBounds r = evaluate_bounds(c0, c1, out.grid, true, true);
  for (std::size_t e = 0; e < 3; ++e)
    out.effects[e] = make_effect(out.grid, std::move(r.lower[e]), std::move(r.upper[e]),
                                 std::move(r.flags[e]));
  return out;
}

StepFunction bounds_ranked_lower(const ComponentSet& c0, const ComponentSet& c1,
                                 std::span<const double> t_grid) {
  const std::vector<double> grid = resolve_grid(t_grid, c0.grid);
  const StepFunction& s0 = c0.s1_ad();
  const StepFunction& s1 = c1.s1_ad();
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) v[k] = (1.0 - s1(grid[k])) - (1.0 - s0(grid[k]));
  return StepFunction(grid, std::move(v), 0.0);
}

BoundsResult bounds_adjusted(std::span<const ZCell> cells, std::span<const double> t_grid) {
  if (cells.empty()) throw InvalidSpec("covariate-adjusted bounds need at least one level");
  BoundsResult out;
  out.variant = "adj";
  out.grid = resolve_grid(t_grid, cells.front().c0.grid);
  const std::size_t n = out.grid.size();

  std::vector<double> w_ad(cells.size()), w_nd(cells.size());
  double sum_ad = 0.0, sum_nd = 0.0, eta0 = 0.0, eta1 = 0.0;
  out.support_end = cells.front().c0.support_end;
  for (std::size_t z = 0; z < cells.size(); ++z) {
    const auto& c = cells[z];
    w_ad[z] = c.p_z_arm0 * c.c0.eta;
    w_nd[z] = c.p_z_arm1 * (1.0 - c.c1.eta);
    sum_ad += w_ad[z];
    sum_nd += w_nd[z];
    eta0 += c.p_z_arm0 * c.c0.eta;
    eta1 += c.p_z_arm1 * c.c1.eta;
    out.support_end = std::min({out.support_end, c.c0.support_end, c.c1.support_end});
  }
  if (!(sum_ad > kEtaDegenerate))
    throw DegenerateEta("Pr(T1 <= T2 | A=0) is 0: always-diseased bounds undefined");
  if (!(sum_nd > kEtaDegenerate))
    throw DegenerateEta("Pr(T1 <= T2 | A=1) is 1: never-diseased bounds undefined");
  out.strata = strata_proportions(eta0, eta1);

  std::array<std::vector<double>, 3> lower, upper;
  std::array<std::vector<std::uint32_t>, 3> flags;
  for (std::size_t e = 0; e < 3; ++e) {
    lower[e].assign(n, 0.0);
    upper[e].assign(n, 0.0);
    flags[e].assign(n, 0);
  }
  for (std::size_t z = 0; z < cells.size(); ++z) {
    const double nu_ad = w_ad[z] / sum_ad, nu_nd = w_nd[z] / sum_nd;
    const bool want_ad = w_ad[z] > 0.0, want_nd = w_nd[z] > 0.0;
    if (!want_ad && !want_nd) continue;
    const RawBounds r = evaluate_bounds(cells[z].c0, cells[z].c1, out.grid, want_ad, want_nd);
    for (std::size_t e = 0; e < 3; ++e) {
      const bool nd = e == static_cast<std::size_t>(BoundEffect::t2_nd);
      if (nd ? !want_nd : !want_ad) continue;
      const double nu = nd ? nu_nd : nu_ad;
      for (std::size_t k = 0; k < n; ++k) {
        lower[e][k] += nu * r.lower[e][k];
        upper[e][k] += nu * r.upper[e][k];
        flags[e][k] |= r.flags[e][k];
      }
    }
  }
  for (std::size_t e = 0; e < 3; ++e) {
    if (e != static_cast<std::size_t>(BoundEffect::t2_ad))
      for (auto& f : flags[e]) f |= bound_flags::extension;
    // a level that runs out of deaths early does not make the average unidentified
    for (std::size_t k = 0; k < n; ++k)
      if (out.grid[k] <= out.support_end) flags[e][k] &= ~bound_flags::beyond_support;
      else flags[e][k] |= bound_flags::beyond_support;
    out.effects[e] = make_effect(out.grid, std::move(lower[e]), std::move(upper[e]),
                                 std::move(flags[e]));
  }
  return out;
}

BoundsResult bounds_adjusted(const Dataset& data, const KernelSpec& kernel,
                             std::span<const double> t_grid) {
  if (!data.has_z()) throw InvalidSpec("covariate-adjusted bounds need a z column");
  data.require_both_arms();
  const std::vector<double> grid = t_grid.empty() ? default_grid(data) : resolve_grid(t_grid, {});
  std::vector<ZCell> cells;
  const double n0 = static_cast<double>(data.arm_size(0));
  const double n1 = static_cast<double>(data.arm_size(1));
  for (const auto& level : data.z_levels()) {
    const Dataset sub = data.filter_z(level);
    for (int a : {0, 1}) {
      bool death = false;
      for (const auto& r : sub.records()) death = death || (r.a == a && r.delta2 == 1);
      if (!death) throw EmptyCell(a, level);
    }
    ZCell c;
    c.level = level;
    c.p_z_arm0 = static_cast<double>(sub.arm_size(0)) / n0;
    c.p_z_arm1 = static_cast<double>(sub.arm_size(1)) / n1;
    c.c0 = estimate_components(sub, 0, kernel, grid);
    c.c1 = estimate_components(sub, 1, kernel, grid);
    cells.push_back(std::move(c));
  }
  return bounds_adjusted(cells, grid);
}

BoundsResult combine_bounds(const BoundsResult& unadj, const BoundsResult& adj) {
  if (unadj.grid != adj.grid) throw std::invalid_argument("combine_bounds: grids differ");
  BoundsResult out;
  out.variant = "combined";
  out.grid = unadj.grid;
  out.strata = unadj.strata;
  out.support_end = unadj.support_end;
  const std::size_t n = out.grid.size();
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& u = unadj.effects[e];
    const auto& a = adj.effects[e];
    std::vector<double> lo(n), hi(n);
    std::vector<std::uint32_t> fl(n);
    for (std::size_t k = 0; k < n; ++k) {
      lo[k] = std::max(u.lower.values()[k], a.lower.values()[k]);
      hi[k] = std::min(u.upper.values()[k], a.upper.values()[k]);
      fl[k] = u.flags[k] | a.flags[k];
      if (lo[k] > hi[k]) {
        const double mid = 0.5 * (lo[k] + hi[k]);
        lo[k] = hi[k] = mid;
        fl[k] |= bound_flags::clipped;
      }
    }
    out.effects[e] = make_effect(out.grid, std::move(lo), std::move(hi), std::move(fl));
  }
  return out;
}

RmstBounds rmst_bounds(const BoundsResult& bounds, double t_star) {
  if (!(t_star > 0.0)) throw InvalidSpec("t_star must be positive");
  if (t_star > bounds.support_end) throw BeyondSupport(t_star, bounds.support_end);
  RmstBounds r;
  r.t_star = t_star;
  // E[min(T,t*)] = int_0^t* (1 - F), so a CDF-difference envelope [L, U]
  // becomes [-int U, -int L].
  auto flip = [&](BoundEffect e) {
    const auto& b = bounds[e];
    return Interval{-b.upper.integral(t_star), -b.lower.integral(t_star)};
  };
  r.t2_ad = flip(BoundEffect::t2_ad);
  r.t1_ad = flip(BoundEffect::t1_ad);
  r.t2_nd = flip(BoundEffect::t2_nd);
  r.gap_ad = {r.t2_ad.lower - r.t1_ad.upper, r.t2_ad.upper - r.t1_ad.lower};
  return r;
}

}  // namespace semicomp
