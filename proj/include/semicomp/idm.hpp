#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semicomp/data.hpp"
#include "semicomp/step_function.hpp"

namespace semicomp {

// Illness-death model with a shared gamma frailty (mean 1, variance theta)
// acting multiplicatively on the three transition hazards
//   lambda_01(t) = gamma lambda0_01(t) exp(x'b01)
//   lambda_02(t) = gamma lambda0_02(t) exp(x'b02)
//   lambda_12(t) = gamma lambda0_12(t) exp(x'b12),  t > t1 (clock forward)
// fitted separately in each arm.
// Theta update inside each EM cycle: `observed` maximizes the observed-data
// likelihood over theta at the updated baselines (ECME, much faster in
// theta); `expected` maximizes the expected complete-data frailty term.
enum class ThetaStep { observed, expected };

struct IdmModelSpec {
  double tol = 1e-6;                  // |delta log-likelihood| stopping rule
  int max_iter = 500;
  std::optional<double> fixed_theta;  // hold theta fixed (0 = no frailty)
  bool allow_degenerate = false;      // transitions without events get baseline 0
  bool check_monotone = false;        // throw if the log-likelihood ever drops
  double monotone_tol = 1e-10;
  ThetaStep theta_step = ThetaStep::observed;
};

struct TransitionFit {
  StepFunction cumhaz;  // Breslow cumulative baseline hazard, 0 before first knot
  std::vector<double> beta;
  int events = 0;
  bool degenerate = false;  // no events: baseline fixed at 0, beta undefined (zeros)
};

struct ConvergenceRecord {
  int iterations = 0;
  double loglik = 0.0;
  double last_delta = 0.0;
  bool converged = false;
  std::vector<double> trace;  // log-likelihood after each iteration
};

struct IdmFit {
  int arm = 0;
  std::vector<std::string> covariate_names;
  std::array<TransitionFit, 3> transitions;  // indexed by Transition
  double theta = 0.0;
  ConvergenceRecord convergence;

  const TransitionFit& operator[](Transition t) const {
    return transitions[static_cast<std::size_t>(t)];
  }
  TransitionFit& operator[](Transition t) { return transitions[static_cast<std::size_t>(t)]; }
  int total_events() const;
};

// s_i = sum_j exp(x'b0j)[L0j(t1) - L0j(entry-)] + d1 exp(x'b12)[L12(t2) - L12(t1)].
// When disease and death share one recorded time the 1->2 exposure is the
// jump of L12 at that time, matching the risk sets used by em_fit.
double risk_score(const ObservedRecord& r, const IdmFit& fit);

struct FrailtyPosterior {
  double shape = 0.0;  // 1/theta + d1 + d2
  double rate = 0.0;   // 1/theta + s_i
  double mean = 1.0;
  double mean_log = 0.0;
};

// Gamma-conjugate posterior of each arm-a subject's frailty (in record order
// among arm a). With theta = 0 the frailty is degenerate at 1.
std::vector<FrailtyPosterior> frailty_posterior(const Dataset& data, int a, const IdmFit& fit);

// log[(-1)^q phi^(q)(s)] for the gamma Laplace transform phi(s) = (1 + theta s)^(-1/theta).
double log_laplace_derivative(double theta, int q, double s);

// Observed-data log-likelihood of arm a with Breslow jumps in place of the
// baseline hazards. Throws NonFiniteLikelihood naming the offending subject.
double log_likelihood(const Dataset& data, int a, const IdmFit& fit);

// EM fit. `init` warm-starts from another fit (coefficients, theta and the
// cumulative baselines evaluated at this data's event times). Throws
// NotConverged, DegenerateTransition (unless spec.allow_degenerate), EmptyArm.
IdmFit em_fit(const Dataset& data, int a, const IdmModelSpec& spec = {},
              const IdmFit* init = nullptr);

enum class FrailtyCombineRule { pooled, separate };

// pooled: event-count weighted mean (first == second); separate: passthrough.
std::pair<double, double> combine_frailty_variances(const IdmFit& fit0, const IdmFit& fit1,
                                                    FrailtyCombineRule rule);
double pooled_theta(double theta0, double w0, double theta1, double w1);

}  // namespace semicomp
