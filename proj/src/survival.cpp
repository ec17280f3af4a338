#include "semicomp/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "conditional_km.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"

namespace semicomp {

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "uniform") return KernelFamily::uniform;
  throw InvalidSpec("unknown kernel '" + name + "' (epanechnikov, gaussian, uniform)");
}

const char* kernel_family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::epanechnikov: return "epanechnikov";
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::uniform: return "uniform";
  }
  return "?";
}

KernelScale parse_kernel_scale(const std::string& name) {
  if (name == "rank") return KernelScale::rank;
  if (name == "time") return KernelScale::time;
  throw InvalidSpec("unknown kernel scale '" + name + "' (rank, time)");
}

const char* kernel_scale_name(KernelScale s) { return s == KernelScale::rank ? "rank" : "time"; }

double kernel_value(KernelFamily family, double u) {
  switch (family) {
    case KernelFamily::epanechnikov: return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelFamily::gaussian: return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    case KernelFamily::uniform: return std::abs(u) <= 1.0 ? 0.5 : 0.0;
  }
  return 0.0;
}

double kernel_support(KernelFamily family) {
  return family == KernelFamily::gaussian ? std::numeric_limits<double>::infinity() : 1.0;
}

double rule_of_thumb_bandwidth(const Dataset& data, int a, KernelScale scale) {
  std::vector<double> t;
  for (const auto& r : data.records())
    if (r.a == a && r.delta2 == 1) t.push_back(r.t2_obs);
  if (t.empty())
    throw EstimationError("arm " + std::to_string(a) + " has no deaths; cannot smooth");
  const double n = static_cast<double>(t.size());
  // Rank axis: about sqrt(n)/2 neighbouring deaths each side. The n^(-1/2)
  // rate undersmooths, which keeps the O(h) smoothing bias of integrated
  // targets such as eta below their sampling error; 2/n keeps a neighbour.
  if (scale == KernelScale::rank) return std::max(0.5 / std::sqrt(n), 2.0 / n);
  if (t.size() < 2) return 1.0;
  const double mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : t) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  // all deaths tied: every positive bandwidth gives the same equal weights
  if (!(sd > 0.0)) return 1.0;
  return 1.06 * sd * std::pow(n, -0.2);
}

double resolve_bandwidth(const KernelSpec& kernel, const Dataset& data, int a) {
  if (kernel.bandwidth) {
    if (!(*kernel.bandwidth > 0.0) || !std::isfinite(*kernel.bandwidth))
      throw InvalidSpec("bandwidth must be positive");
    return *kernel.bandwidth;
  }
  return rule_of_thumb_bandwidth(data, a, kernel.scale);
}

StepFunction km_survival(const Dataset& data, int a, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != data.size())
    throw std::invalid_argument("km_survival: one weight per record required");
  struct Obs {
    double t, entry, w;
    int d;
  };
  std::vector<Obs> obs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (r.a != a) continue;
    obs.push_back({r.t2_obs, r.entry, weights.empty() ? 1.0 : weights[i], r.delta2});
  }
  if (obs.empty()) throw EmptyArm(a);
  std::sort(obs.begin(), obs.end(), [](const Obs& x, const Obs& y) { return x.t < y.t; });

  // risk(u) = sum of weights with t >= u, minus those with entry > u
  std::vector<double> suffix(obs.size() + 1, 0.0);
  for (std::size_t k = obs.size(); k-- > 0;) suffix[k] = suffix[k + 1] + obs[k].w;
  const bool truncated = data.has_truncation();
  std::vector<std::pair<double, double>> entries;
  std::vector<double> entry_suffix;
  if (truncated) {
    for (const auto& o : obs) entries.emplace_back(o.entry, o.w);
    std::sort(entries.begin(), entries.end());
    entry_suffix.assign(entries.size() + 1, 0.0);
    for (std::size_t k = entries.size(); k-- > 0;)
      entry_suffix[k] = entry_suffix[k + 1] + entries[k].second;
  }

  std::vector<double> knots, values;
  double s = 1.0;
  std::size_t k = 0;
  while (k < obs.size()) {
    const double u = obs[k].t;
    const std::size_t first = k;
    double d = 0.0;
    while (k < obs.size() && obs[k].t == u) {
      if (obs[k].d == 1) d += obs[k].w;
      ++k;
    }
    if (!(d > 0.0)) continue;
    double risk = suffix[first];
    if (truncated) {
      auto it = std::upper_bound(entries.begin(), entries.end(), u,
                                 [](double x, const auto& e) { return x < e.first; });
      risk -= entry_suffix[static_cast<std::size_t>(it - entries.begin())];
    }
    s *= risk > d ? 1.0 - d / risk : 0.0;
    knots.push_back(u);
    values.push_back(s);
  }
  return StepFunction(std::move(knots), std::move(values), 1.0);
}

SmoothedConditionalKM smoothed_km_conditional(const Dataset& data, int a,
                                              std::span<const double> t_grid,
                                              const KernelSpec& kernel) {
  if (data.arm_size(a) == 0) throw EmptyArm(a);
  SmoothedConditionalKM out;
  out.arm = a;
  out.family = kernel.family;
  out.scale = kernel.scale;
  out.bandwidth = resolve_bandwidth(kernel, data, a);
  out.grid.assign(t_grid.begin(), t_grid.end());
  out.curves.resize(out.grid.size());

  // evaluate in sorted order, in fixed-size blocks so the work can be spread
  // over threads without changing any value
  std::vector<std::size_t> order(out.grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return out.grid[x] < out.grid[y]; });
  std::vector<double> sorted(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = out.grid[order[k]];

  const detail::ConditionalKmEngine engine(data, a, kernel.family, out.bandwidth, kernel.scale);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (sorted.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = b * kBlock, hi = std::min(sorted.size(), lo + kBlock);
    engine.for_each(std::span<const double>(sorted).subspan(lo, hi - lo),
                    [&](std::size_t k, double, const detail::ConditionalKmEngine::Curve& c) {
                      out.curves[order[lo + k]] =
                          StepFunction({c.knots.begin(), c.knots.end()},
                                       {c.values.begin(), c.values.end()}, 1.0);
                    });
  });
  return out;
}

RmstValue rmst(const StepFunction& survival, double t_star) {
  return {survival.integral(t_star), t_star > survival.last_knot()};
}

double quantile(const StepFunction& survival, double q) {
  if (1.0 - survival.value_at_zero() >= q) return 0.0;
  const auto& v = survival.values();
  for (std::size_t k = 0; k < v.size(); ++k)
    if (1.0 - v[k] >= q) return survival.knots()[k];
  return std::numeric_limits<double>::infinity();
}

}  // namespace semicomp
