#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "semicomp/components.hpp"
#include "semicomp/data.hpp"
#include "semicomp/effects.hpp"
#include "semicomp/frailty.hpp"

namespace semicomp {

// Baseline hazard of one transition.
//   weibull:   Lambda(t) = (t / scale)^shape
//   piecewise: constant rates[k] on [cuts[k-1], cuts[k]), cuts[-1] = 0 and the
//              last rate extending to infinity (rates.size() = cuts.size() + 1)
//   zero:      no hazard
struct HazardSpec {
  enum class Kind { weibull, piecewise, zero };
  Kind kind = Kind::weibull;
  double shape = 1.0;
  double scale = 1.0;
  std::vector<double> cuts, rates;

  double cumhaz(double t) const;
  // Smallest t with cumhaz(t) >= y (infinity when never reached).
  double inverse(double y) const;
  void validate() const;
};

struct ArmSpec {
  std::array<HazardSpec, 3> hazard;          // 01, 02, 12
  std::array<std::vector<double>, 3> beta;   // per transition, length p
};

struct CovariateSpec {
  std::string name;
  std::string law = "normal";  // normal, bernoulli, uniform
  double mean = 0.0, sd = 1.0;  // normal
  double p = 0.5;               // bernoulli
  double lo = 0.0, hi = 1.0;    // uniform
};

// Discrete covariate observed in the data but not part of x; shifts the log
// hazards of both arms by effect[j][level].
struct ZSpec {
  std::vector<std::string> levels;
  std::vector<double> probs;
  std::array<std::vector<double>, 3> effect;
};

struct CensoringSpec {
  std::string law = "exponential";  // none, exponential, uniform
  double target = 0.0;              // censored fraction to calibrate to
  std::optional<double> parameter;  // explicit rate / upper limit, skips calibration
  double max_followup = std::numeric_limits<double>::infinity();  // administrative end
};

// Delayed entry: R ~ Uniform(0, max); subjects not event-free at R are never
// observed and are replaced by fresh candidates.
struct EntrySpec {
  std::string law = "none";  // none, uniform
  double max = 0.0;
};

enum class Stratum { ad, nd, dh, dp };
const char* stratum_name(Stratum s);
Stratum parse_stratum(const std::string& name);

struct ScenarioConfig {
  std::string name = "scenario";
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  double p_treat = 0.5;
  std::array<ArmSpec, 2> arms;
  FrailtySpec frailty;
  std::vector<CovariateSpec> covariates;
  std::optional<ZSpec> z;
  CensoringSpec censoring;
  EntrySpec entry;
  bool enforce_order_preservation = false;
  Stratum resim_target = Stratum::dp;  // stratum emptied by re-simulating world 1
  // How the two worlds' paths share randomness given the frailties:
  // "independent" (separate draws) or "common" (the same uniforms, so equal
  // laws and frailties give equal potential outcomes).
  std::string world_coupling = "independent";

  std::size_t p() const { return covariates.size(); }
  void validate() const;
};

ScenarioConfig parse_scenario(const std::string& toml_text);
ScenarioConfig load_scenario(const std::filesystem::path& path);
std::string scenario_to_toml(const ScenarioConfig& config);

// Potential outcomes of one subject. t1 is +infinity when death comes first.
struct TwoWorldRecord {
  std::array<double, 2> t1{}, t2{};
  Stratum stratum = Stratum::nd;
  std::size_t resims = 0;  // order-preservation re-simulations used
};

struct SimulationResult {
  Dataset data;
  std::vector<TwoWorldRecord> truth;  // aligned with data.records()
  double censoring_parameter = 0.0;   // calibrated rate / upper limit
  double censored_fraction = 0.0;     // realized Pr(delta2 = 0)
};

// Throws ResimLimitExceeded when a subject needs more than 1e4 re-simulations.
SimulationResult simulate(const ScenarioConfig& config);

// Censoring parameter reaching config.censoring.target (by a pilot sample).
double calibrate_censoring(const ScenarioConfig& config);

void write_truth_csv(const SimulationResult& sim, const std::filesystem::path& path);

// Ground truth from a large uncensored two-world panel.
struct PopulationTruth {
  std::size_t mc_size = 0;
  double t_star = 0.0;
  std::vector<double> grid;
  double pi_ad = 0.0, pi_nd = 0.0, pi_dh = 0.0, pi_dp = 0.0;
  std::array<double, 2> eta{};
  std::array<std::vector<double>, 3> curve, curve_se;  // indexed like kCurveEffects
  std::array<ScalarEffect, 7> scalar;                  // indexed like kScalarEffects
  // Identified components per world (and per z level) on the grid, for
  // plug-in bounds.
  std::array<ComponentValues, 2> components;
  std::vector<std::string> z_levels;
  std::vector<double> p_z;
  std::vector<std::array<ComponentValues, 2>> components_z;

  const ScalarEffect& operator[](EffectId e) const;
};

PopulationTruth population_functionals(const ScenarioConfig& config, std::vector<double> t_grid,
                                       double t_star, std::size_t mc_size = 1000000);

}  // namespace semicomp
