#include "semicomp/idm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "semicomp/errors.hpp"

namespace semicomp {

namespace {

constexpr double kThetaMin = 1e-6;
constexpr double kThetaMax = 50.0;
constexpr std::array<Transition, 3> kTransitions{Transition::k01, Transition::k02, Transition::k12};

double dot(const std::vector<double>& x, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * b[j];
  return s;
}

double jump(const StepFunction& f, double t) { return f(t) - f.left_limit(t); }

// 1->2 exposure window of a diseased subject: (t1, t2], or the single point
// t2 when disease and death share a recorded time.
bool tied_disease_death(const ObservedRecord& r) {
  return r.delta1 == 1 && r.delta2 == 1 && r.t1_obs == r.t2_obs;
}

// Risk-set layout of one transition within one arm.
struct TransitionData {
  std::vector<double> times;  // distinct event times
  std::vector<double> d;      // events at each time
  std::vector<std::size_t> lo, hi;  // subject i is at risk at times[lo_i .. hi_i)
  std::vector<int> event;           // index into times, or -1
  // descending-sweep buckets (CSR): subjects whose range ends / starts at k
  std::vector<std::size_t> add_ptr, add_idx, rem_ptr, rem_idx;

  std::size_t size() const { return times.size(); }
};

void build_buckets(TransitionData& td, std::size_t n) {
  const std::size_t K = td.size();
  td.add_ptr.assign(K + 1, 0);
  td.rem_ptr.assign(K + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (td.lo[i] >= td.hi[i]) continue;
    ++td.add_ptr[td.hi[i] - 1 + 1];
    if (td.lo[i] > 0) ++td.rem_ptr[td.lo[i] - 1 + 1];
  }
  for (std::size_t k = 0; k < K; ++k) {
    td.add_ptr[k + 1] += td.add_ptr[k];
    td.rem_ptr[k + 1] += td.rem_ptr[k];
  }
  td.add_idx.resize(td.add_ptr[K]);
  td.rem_idx.resize(td.rem_ptr[K]);
  std::vector<std::size_t> fa(td.add_ptr.begin(), td.add_ptr.end() - 1);
  std::vector<std::size_t> fr(td.rem_ptr.begin(), td.rem_ptr.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (td.lo[i] >= td.hi[i]) continue;
    td.add_idx[fa[td.hi[i] - 1]++] = i;
    if (td.lo[i] > 0) td.rem_idx[fr[td.lo[i] - 1]++] = i;
  }
}

TransitionData build_transition(const std::vector<const ObservedRecord*>& recs, Transition tr) {
  TransitionData td;
  const std::size_t n = recs.size();
  std::vector<double> ev_times;
  for (const auto* r : recs) {
    switch (tr) {
      case Transition::k01:
        if (r->delta1 == 1) ev_times.push_back(r->t1_obs);
        break;
      case Transition::k02:
        if (r->delta1 == 0 && r->delta2 == 1) ev_times.push_back(r->t1_obs);
        break;
      case Transition::k12:
        if (r->delta1 == 1 && r->delta2 == 1) ev_times.push_back(r->t2_obs);
        break;
    }
  }
  std::sort(ev_times.begin(), ev_times.end());
  for (double t : ev_times) {
    if (td.times.empty() || td.times.back() != t) {
      td.times.push_back(t);
      td.d.push_back(0.0);
    }
    td.d.back() += 1.0;
  }
  td.lo.assign(n, 0);
  td.hi.assign(n, 0);
  td.event.assign(n, -1);
  const auto& T = td.times;
  auto lower = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(T.begin(), T.end(), t) - T.begin());
  };
  auto upper = [&](double t) {
    return static_cast<std::size_t>(std::upper_bound(T.begin(), T.end(), t) - T.begin());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = *recs[i];
    if (tr == Transition::k12) {
      if (r.delta1 != 1) continue;
      td.lo[i] = tied_disease_death(r) ? lower(r.t2_obs) : upper(r.t1_obs);
      td.hi[i] = upper(r.t2_obs);
      if (r.delta2 == 1) td.event[i] = static_cast<int>(lower(r.t2_obs));
    } else {
      td.lo[i] = r.entry > 0.0 ? lower(r.entry) : 0;
      td.hi[i] = upper(r.t1_obs);
      const bool ev = tr == Transition::k01 ? r.delta1 == 1 : (r.delta1 == 0 && r.delta2 == 1);
      if (ev) td.event[i] = static_cast<int>(lower(r.t1_obs));
    }
  }
  build_buckets(td, n);
  return td;
}

struct ArmData {
  std::vector<const ObservedRecord*> recs;
  std::size_t p = 0;
  std::array<TransitionData, 3> tr;
  std::vector<int> q;  // d1 + d2
};

struct Params {
  std::array<std::vector<double>, 3> beta;
  std::array<std::vector<double>, 3> dlambda;  // baseline jumps at event times
  double theta = 0.5;
};

// Cumulative sums with a leading zero; exposure = cum[hi] - cum[lo].
std::vector<double> cumulative(const std::vector<double>& dl) {
  std::vector<double> c(dl.size() + 1, 0.0);
  for (std::size_t k = 0; k < dl.size(); ++k) c[k + 1] = c[k] + dl[k];
  return c;
}

struct RiskScores {
  std::vector<double> s;
  std::array<std::vector<double>, 3> lin;  // x'beta per transition
};

RiskScores risk_scores(const ArmData& ad, const Params& ps) {
  const std::size_t n = ad.recs.size();
  RiskScores rs;
  rs.s.assign(n, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& td = ad.tr[j];
    const auto cum = cumulative(ps.dlambda[j]);
    rs.lin[j].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      rs.lin[j][i] = ad.p ? dot(ad.recs[i]->x, ps.beta[j]) : 0.0;
      if (td.lo[i] < td.hi[i]) rs.s[i] += std::exp(rs.lin[j][i]) * (cum[td.hi[i]] - cum[td.lo[i]]);
    }
  }
  return rs;
}

double loglik(const ArmData& ad, const Params& ps, const RiskScores& rs) {
  double ll = 0.0;
  for (std::size_t i = 0; i < ad.recs.size(); ++i) {
    double li = log_laplace_derivative(ps.theta, ad.q[i], rs.s[i]);
    for (std::size_t j = 0; j < 3; ++j) {
      const int e = ad.tr[j].event[i];
      if (e >= 0) li += std::log(ps.dlambda[j][static_cast<std::size_t>(e)]) + rs.lin[j][i];
    }
    if (!std::isfinite(li)) throw NonFiniteLikelihood(ad.recs[i]->id);
    ll += li;
  }
  return ll;
}

// Weighted Breslow partial likelihood of one transition with its gradient and
// Hessian, from a descending sweep over the event times.
struct PartialLik {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  std::vector<double> s0;
};

PartialLik partial_likelihood(const ArmData& ad, const TransitionData& td,
                              const std::vector<double>& w, const Eigen::VectorXd& beta,
                              bool derivatives) {
  const std::size_t n = ad.recs.size(), p = ad.p, K = td.size();
  PartialLik pl;
  pl.s0.assign(K, 0.0);
  pl.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  pl.hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  std::vector<double> v(n, 0.0);
  std::vector<Eigen::VectorXd> xs;
  if (p) xs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (td.lo[i] >= td.hi[i]) continue;
    double lin = 0.0;
    if (p) {
      xs[i] = Eigen::Map<const Eigen::VectorXd>(ad.recs[i]->x.data(), static_cast<Eigen::Index>(p));
      lin = xs[i].dot(beta);
    }
    v[i] = w[i] * std::exp(lin);
    if (td.event[i] >= 0) {
      pl.value += lin;
      if (p && derivatives) pl.grad += xs[i];
    }
  }
  double S0 = 0.0;
  Eigen::VectorXd S1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t k = K; k-- > 0;) {
    for (std::size_t m = td.add_ptr[k]; m < td.add_ptr[k + 1]; ++m) {
      const std::size_t i = td.add_idx[m];
      S0 += v[i];
      if (p && derivatives) {
        S1 += v[i] * xs[i];
        S2.noalias() += v[i] * xs[i] * xs[i].transpose();
      }
    }
    for (std::size_t m = td.rem_ptr[k]; m < td.rem_ptr[k + 1]; ++m) {
      const std::size_t i = td.rem_idx[m];
      S0 -= v[i];
      if (p && derivatives) {
        S1 -= v[i] * xs[i];
        S2.noalias() -= v[i] * xs[i] * xs[i].transpose();
      }
    }
    pl.s0[k] = S0;
    pl.value -= td.d[k] * std::log(S0);
    if (p && derivatives) {
      const Eigen::VectorXd mean = S1 / S0;
      pl.grad -= td.d[k] * mean;
      pl.hess -= td.d[k] * (S2 / S0 - mean * mean.transpose());
    }
  }
  return pl;
}

// Maximizes the weighted partial likelihood over beta (Newton with step
// halving, warm-started) and returns the Breslow jumps at the optimum.
void m_step_transition(const ArmData& ad, const TransitionData& td, const std::vector<double>& w,
                       std::vector<double>& beta, std::vector<double>& dlambda) {
  const std::size_t p = ad.p;
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(p));
  PartialLik pl = partial_likelihood(ad, td, w, b, true);
  for (int it = 0; p && it < 50; ++it) {
    Eigen::MatrixXd info = -pl.hess;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all())
      step = ldlt.solve(pl.grad);
    else
      step = pl.grad / std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
    bool improved = false;
    for (int h = 0; h < 40; ++h) {
      const Eigen::VectorXd cand = b + step;
      PartialLik trial = partial_likelihood(ad, td, w, cand, true);
      if (std::isfinite(trial.value) && trial.value >= pl.value) {
        b = cand;
        pl = std::move(trial);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || step.cwiseAbs().maxCoeff() < 1e-10) break;
  }
  for (std::size_t j = 0; j < p; ++j) beta[j] = b[static_cast<Eigen::Index>(j)];
  dlambda.resize(td.size());
  for (std::size_t k = 0; k < td.size(); ++k) dlambda[k] = td.d[k] / pl.s0[k];
}

// Expected complete-data log-likelihood of the frailty term as a function of
// theta: n(k log k - lgamma k) + (k - 1) sum E log g - k sum E g, k = 1/theta.
double theta_objective(double theta, double n, double sum_elog, double sum_e) {
  const double k = 1.0 / theta;
  return n * (k * std::log(k) - std::lgamma(k)) + (k - 1.0) * sum_elog - k * sum_e;
}

// One EM cycle: E-step at the current parameters, Breslow/Newton M-step per
// transition, then the theta step.
Params em_step(const ArmData& ad, const IdmModelSpec& spec, const Params& cur) {
  const std::size_t n = ad.recs.size();
  Params ps = cur;
  RiskScores rs = risk_scores(ad, ps);
  std::vector<double> w(n, 1.0);
  double sum_e = 0.0, sum_elog = 0.0;
  if (ps.theta > 0.0) {
    const double k = 1.0 / ps.theta;
    for (std::size_t i = 0; i < n; ++i) {
      const double shape = k + ad.q[i], rate = k + rs.s[i];
      w[i] = shape / rate;
      sum_e += w[i];
      sum_elog += boost::math::digamma(shape) - std::log(rate);
    }
  }
  for (std::size_t j = 0; j < 3; ++j)
    if (ad.tr[j].size() > 0) m_step_transition(ad, ad.tr[j], w, ps.beta[j], ps.dlambda[j]);
  if (!spec.fixed_theta) {
    std::function<double(double)> neg;
    if (spec.theta_step == ThetaStep::expected) {
      neg = [nn = static_cast<double>(n), sum_elog, sum_e](double lt) {
        return -theta_objective(std::exp(lt), nn, sum_elog, sum_e);
      };
    } else {
      // observed-data frailty term at the updated (beta, baselines)
      rs = risk_scores(ad, ps);
      neg = [&](double lt) {
        const double th = std::exp(lt);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += log_laplace_derivative(th, ad.q[i], rs.s[i]);
        return -v;
      };
    }
    const auto best =
        boost::math::tools::brent_find_minima(neg, std::log(kThetaMin), std::log(kThetaMax), 40);
    if (best.second <= neg(std::log(ps.theta))) ps.theta = std::exp(best.first);
  }
  return ps;
}

// Unconstrained coordinates: coefficients, log baseline jumps, log theta.
std::vector<double> pack(const Params& ps, bool free_theta) {
  std::vector<double> x;
  for (std::size_t j = 0; j < 3; ++j) {
    x.insert(x.end(), ps.beta[j].begin(), ps.beta[j].end());
    for (double d : ps.dlambda[j]) x.push_back(std::log(d));
  }
  if (free_theta) x.push_back(std::log(ps.theta));
  return x;
}

Params unpack(const std::vector<double>& x, const Params& shape, bool free_theta) {
  Params ps = shape;
  std::size_t k = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    for (double& b : ps.beta[j]) b = x[k++];
    for (double& d : ps.dlambda[j]) d = std::exp(x[k++]);
  }
  if (free_theta) ps.theta = std::clamp(std::exp(x[k]), kThetaMin, kThetaMax);
  return ps;
}

ArmData prepare(const Dataset& data, int a) {
  ArmData ad;
  for (const auto& r : data.records())
    if (r.a == a) ad.recs.push_back(&r);
  if (ad.recs.empty()) throw EmptyArm(a);
  ad.p = data.p();
  for (std::size_t j = 0; j < 3; ++j) ad.tr[j] = build_transition(ad.recs, kTransitions[j]);
  for (const auto* r : ad.recs) ad.q.push_back(r->delta1 + r->delta2);
  return ad;
}

}  // namespace

int IdmFit::total_events() const {
  int n = 0;
  for (const auto& t : transitions) n += t.events;
  return n;
}

double log_laplace_derivative(double theta, int q, double s) {
  if (theta <= 0.0) return -s;
  double out = 0.0;
  for (int k = 1; k < q; ++k) out += std::log1p(k * theta);
  return out - (1.0 / theta + q) * std::log1p(theta * s);
}

double risk_score(const ObservedRecord& r, const IdmFit& fit) {
  double s = 0.0;
  for (Transition t : {Transition::k01, Transition::k02}) {
    const auto& tf = fit[t];
    const double lin = r.x.empty() ? 0.0 : dot(r.x, tf.beta);
    const double start = r.entry > 0.0 ? tf.cumhaz.left_limit(r.entry) : 0.0;
    s += std::exp(lin) * (tf.cumhaz(r.t1_obs) - start);
  }
  if (r.delta1 == 1) {
    const auto& tf = fit[Transition::k12];
    const double lin = r.x.empty() ? 0.0 : dot(r.x, tf.beta);
    const double expo = tied_disease_death(r) ? jump(tf.cumhaz, r.t2_obs)
                                              : tf.cumhaz(r.t2_obs) - tf.cumhaz(r.t1_obs);
    s += std::exp(lin) * expo;
  }
  return s;
}

std::vector<FrailtyPosterior> frailty_posterior(const Dataset& data, int a, const IdmFit& fit) {
  std::vector<FrailtyPosterior> out;
  for (const auto& r : data.records()) {
    if (r.a != a) continue;
    FrailtyPosterior fp;
    const double s = risk_score(r, fit);
    const int q = r.delta1 + r.delta2;
    if (fit.theta > 0.0) {
      fp.shape = 1.0 / fit.theta + q;
      fp.rate = 1.0 / fit.theta + s;
      fp.mean = fp.shape / fp.rate;
      fp.mean_log = boost::math::digamma(fp.shape) - std::log(fp.rate);
    } else {
      fp.shape = std::numeric_limits<double>::infinity();
      fp.rate = std::numeric_limits<double>::infinity();
    }
    out.push_back(fp);
  }
  return out;
}

double log_likelihood(const Dataset& data, int a, const IdmFit& fit) {
  double ll = 0.0;
  for (const auto& r : data.records()) {
    if (r.a != a) continue;
    double li = log_laplace_derivative(fit.theta, r.delta1 + r.delta2, risk_score(r, fit));
    auto add_event = [&](Transition t, double time) {
      const auto& tf = fit[t];
      li += std::log(jump(tf.cumhaz, time)) + (r.x.empty() ? 0.0 : dot(r.x, tf.beta));
    };
    if (r.delta1 == 1) add_event(Transition::k01, r.t1_obs);
    if (r.delta1 == 0 && r.delta2 == 1) add_event(Transition::k02, r.t1_obs);
    if (r.delta1 == 1 && r.delta2 == 1) add_event(Transition::k12, r.t2_obs);
    if (!std::isfinite(li)) throw NonFiniteLikelihood(r.id);
    ll += li;
  }
  return ll;
}

IdmFit em_fit(const Dataset& data, int a, const IdmModelSpec& spec, const IdmFit* init) {
  const ArmData ad = prepare(data, a);
  const std::size_t n = ad.recs.size(), p = ad.p;
  if (spec.fixed_theta && (*spec.fixed_theta < 0.0 || !std::isfinite(*spec.fixed_theta)))
    throw InvalidSpec("fixed theta must be finite and >= 0");
  if (init && init->transitions[0].beta.size() != p)
    throw InvalidSpec("initial fit has a different covariate dimension");

  for (std::size_t j = 0; j < 3; ++j)
    if (ad.tr[j].size() == 0 && !spec.allow_degenerate)
      throw DegenerateTransition(transition_name(kTransitions[j]));

  Params ps;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& td = ad.tr[j];
    ps.beta[j].assign(p, 0.0);
    ps.dlambda[j].assign(td.size(), 0.0);
    if (init) {
      const auto& tf = init->transitions[j];
      ps.beta[j] = tf.beta;
      double prev = 0.0;
      for (std::size_t k = 0; k < td.size(); ++k) {
        const double c = tf.cumhaz(td.times[k]);
        ps.dlambda[j][k] = c - prev;
        prev = c;
      }
    } else {
      // Nelson-Aalen without frailty or covariates
      std::vector<double> at_risk(td.size() + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (td.lo[i] < td.hi[i]) {
          at_risk[td.lo[i]] += 1.0;
          at_risk[td.hi[i]] -= 1.0;
        }
      double r = 0.0;
      for (std::size_t k = 0; k < td.size(); ++k) {
        r += at_risk[k];
        ps.dlambda[j][k] = td.d[k] / r;
      }
    }
  }
  ps.theta = spec.fixed_theta ? *spec.fixed_theta : (init ? init->theta : 0.5);
  if (!spec.fixed_theta) ps.theta = std::clamp(ps.theta, kThetaMin, kThetaMax);

  double ll = -std::numeric_limits<double>::infinity();
  bool initial_ok = true;
  for (std::size_t j = 0; j < 3 && initial_ok; ++j)
    for (double v : ps.dlambda[j]) initial_ok = initial_ok && v > 0.0;
  if (initial_ok) ll = loglik(ad, ps, risk_scores(ad, ps));

  IdmFit fit;
  fit.arm = a;
  fit.covariate_names = data.covariate_names();
  ConvergenceRecord& conv = fit.convergence;
  const bool free_theta = !spec.fixed_theta.has_value();
  double delta = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= spec.max_iter; ++iter) {
    // Squared-extrapolation cycle: two EM steps give the direction, the
    // extrapolated point is stabilized by one more EM step and kept only if
    // it beats the plain second EM iterate, so the likelihood never drops.
    const Params p1 = em_step(ad, spec, ps);
    const Params p2 = em_step(ad, spec, p1);
    Params next = p2;
    double ll_next = loglik(ad, p2, risk_scores(ad, p2));
    const std::vector<double> x0 = pack(ps, free_theta), x1 = pack(p1, free_theta),
                              x2 = pack(p2, free_theta);
    double rr = 0.0, vv = 0.0;
    for (std::size_t k = 0; k < x0.size(); ++k) {
      const double r = x1[k] - x0[k], v = x2[k] - 2.0 * x1[k] + x0[k];
      rr += r * r;
      vv += v * v;
    }
    const bool finite = std::all_of(x0.begin(), x0.end(), [](double v) { return std::isfinite(v); });
    if (finite && vv > 0.0 && std::isfinite(ll_next)) {
      const double alpha = std::min(-1.0, -std::sqrt(rr / vv));
      std::vector<double> xe(x0.size());
      for (std::size_t k = 0; k < x0.size(); ++k) {
        const double r = x1[k] - x0[k], v = x2[k] - 2.0 * x1[k] + x0[k];
        xe[k] = x0[k] - 2.0 * alpha * r + alpha * alpha * v;
      }
      try {
        Params pe = unpack(xe, ps, free_theta);
        pe = em_step(ad, spec, pe);
        const double ll_e = loglik(ad, pe, risk_scores(ad, pe));
        if (std::isfinite(ll_e) && ll_e > ll_next) {
          next = std::move(pe);
          ll_next = ll_e;
        }
      } catch (const NonFiniteLikelihood&) {
        // extrapolation left the valid region; keep the plain EM iterate
      }
    }
    ps = std::move(next);
    delta = ll_next - ll;
    if (spec.check_monotone && delta < -spec.monotone_tol)
      throw EstimationError("EM log-likelihood decreased by " + std::to_string(-delta) +
                            " at iteration " + std::to_string(iter));
    ll = ll_next;
    conv.trace.push_back(ll);
    conv.iterations = iter;
    if (std::abs(delta) < spec.tol) {
      conv.converged = true;
      break;
    }
  }
  conv.loglik = ll;
  conv.last_delta = std::abs(delta);
  if (!conv.converged) throw NotConverged(spec.max_iter, conv.last_delta);

  fit.theta = ps.theta;
  for (std::size_t j = 0; j < 3; ++j) {
    auto& tf = fit.transitions[j];
    const auto& td = ad.tr[j];
    const auto cum = cumulative(ps.dlambda[j]);
    tf.cumhaz = StepFunction(td.times, std::vector<double>(cum.begin() + 1, cum.end()), 0.0);
    tf.beta = ps.beta[j];
    tf.events = static_cast<int>(std::accumulate(td.d.begin(), td.d.end(), 0.0));
    tf.degenerate = td.size() == 0;
  }
  return fit;
}

double pooled_theta(double theta0, double w0, double theta1, double w1) {
  if (!(w0 + w1 > 0.0)) throw InvalidSpec("pooling weights must be positive");
  return (w0 * theta0 + w1 * theta1) / (w0 + w1);
}

std::pair<double, double> combine_frailty_variances(const IdmFit& fit0, const IdmFit& fit1,
                                                    FrailtyCombineRule rule) {
  if (rule == FrailtyCombineRule::separate) return {fit0.theta, fit1.theta};
  const double th = pooled_theta(fit0.theta, fit0.total_events(), fit1.theta, fit1.total_events());
  return {th, th};
}

}  // namespace semicomp
