#include "conditional_km.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "semicomp/errors.hpp"

namespace semicomp::detail {

namespace {

// Window edges are padded slightly so rounding in (s - t2)/h never drops a
// member whose kernel weight is positive.
constexpr double kReachPad = 1.0 + 1e-9;

}  // namespace

struct ConditionalKmEngine::State {
  std::vector<Member> window;
  std::size_t lo = 0, hi = 0;
  std::vector<double> weight, suffix, knots, values;
  std::vector<std::pair<double, double>> entries;  // (entry, weight)
  std::vector<double> entry_suffix;
};

double ConditionalKmEngine::Curve::at(double v) const {
  auto it = std::upper_bound(knots.begin(), knots.end(), v);
  if (it == knots.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - knots.begin()) - 1];
}

ConditionalKmEngine::ConditionalKmEngine(const Dataset& data, int a, KernelFamily family,
                                         double bandwidth, KernelScale scale)
    : family_(family), scale_(scale), h_(bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw InvalidSpec("bandwidth must be positive and finite");
  reach_ = kernel_support(family) * bandwidth * kReachPad;
  truncated_ = false;
  std::size_t order = 0;
  for (const auto& r : data.records()) {
    if (r.a != a || r.delta2 != 1) continue;
    members_.push_back({r.t1_obs, r.t2_obs, r.entry, r.t2_obs, r.delta1, order++});
    truncated_ = truncated_ || r.entry > 0.0;
  }
  std::stable_sort(members_.begin(), members_.end(),
                   [](const Member& x, const Member& y) { return x.t2 < y.t2; });
  for (auto& m : members_) m.key = key_of(m.t2);
}

// Kernel-axis coordinate of time s: s itself, or the fraction of the arm's
// deaths at or before s.
double ConditionalKmEngine::key_of(double s) const {
  if (scale_ == KernelScale::time) return s;
  const auto it = std::upper_bound(members_.begin(), members_.end(), s,
                                   [](double v, const Member& m) { return v < m.t2; });
  return static_cast<double>(it - members_.begin()) / static_cast<double>(members_.size());
}

namespace {

bool window_less(double t1a, double t2a, std::size_t oa, double t1b, double t2b, std::size_t ob) {
  if (t1a != t1b) return t1a < t1b;
  if (t2a != t2b) return t2a < t2b;
  return oa < ob;
}

}  // namespace

void ConditionalKmEngine::evaluate(double s, State& st) const {
  const double ks = key_of(s);
  const auto& w = st.window;
  const std::size_t m = w.size();
  st.weight.resize(m);
  st.suffix.assign(m + 1, 0.0);
  double q = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    st.weight[k] = kernel_value(family_, (ks - w[k].key) / h_);
    q += st.weight[k];
  }
  if (!(q > 0.0)) throw DegenerateWeights(s);
  for (std::size_t k = m; k-- > 0;) st.suffix[k] = st.suffix[k + 1] + st.weight[k];

  if (truncated_) {
    st.entries.resize(m);
    for (std::size_t k = 0; k < m; ++k) st.entries[k] = {w[k].entry, st.weight[k]};
    std::sort(st.entries.begin(), st.entries.end());
    st.entry_suffix.assign(m + 1, 0.0);
    for (std::size_t k = m; k-- > 0;)
      st.entry_suffix[k] = st.entry_suffix[k + 1] + st.entries[k].second;
  }

  st.knots.clear();
  st.values.clear();
  double value = 1.0;
  std::size_t k = 0;
  while (k < m && w[k].t1 <= s) {
    const double u = w[k].t1;
    const std::size_t first = k;
    double d = 0.0;
    while (k < m && w[k].t1 == u) {
      if (w[k].d1 == 1) d += st.weight[k];
      ++k;
    }
    if (!(d > 0.0)) continue;
    double risk = st.suffix[first];
    if (truncated_) {
      // members not yet entered at u
      auto it = std::upper_bound(st.entries.begin(), st.entries.end(), u,
                                 [](double x, const auto& e) { return x < e.first; });
      risk -= st.entry_suffix[static_cast<std::size_t>(it - st.entries.begin())];
    }
    const double factor = risk > d ? 1.0 - d / risk : 0.0;
    value *= factor;
    st.knots.push_back(u);
    st.values.push_back(value);
  }
}

void ConditionalKmEngine::for_each(std::span<const double> points, const Visitor& visit) const {
  State st;
  const std::size_t n = members_.size();
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t idx = 0; idx < points.size(); ++idx) {
    const double s = points[idx];
    if (s < prev) throw std::invalid_argument("conditional KM points must be non-decreasing");
    prev = s;
    const double ks = key_of(s);
    while (st.hi < n && members_[st.hi].key <= ks + reach_) {
      const Member& x = members_[st.hi++];
      auto pos = std::lower_bound(st.window.begin(), st.window.end(), x,
                                  [](const Member& p, const Member& q) {
                                    return window_less(p.t1, p.t2, p.order, q.t1, q.t2, q.order);
                                  });
      st.window.insert(pos, x);
    }
    while (st.lo < st.hi && members_[st.lo].key < ks - reach_) {
      const Member& x = members_[st.lo++];
      auto pos = std::lower_bound(st.window.begin(), st.window.end(), x,
                                  [](const Member& p, const Member& q) {
                                    return window_less(p.t1, p.t2, p.order, q.t1, q.t2, q.order);
                                  });
      st.window.erase(pos);
    }
    evaluate(s, st);
    visit(idx, s, Curve{st.knots, st.values});
  }
}

}  // namespace semicomp::detail
