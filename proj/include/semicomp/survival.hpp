#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semicomp/data.hpp"
#include "semicomp/step_function.hpp"

namespace semicomp {

enum class KernelFamily { epanechnikov, gaussian, uniform };

// Axis the kernel smooths over. rank: the empirical CDF of the arm's death
// times, so the bandwidth is a fraction of the deaths (nearest-neighbour
// smoothing, adapting to sparse tails). time: death times themselves.
enum class KernelScale { rank, time };

KernelFamily parse_kernel_family(const std::string& name);
const char* kernel_family_name(KernelFamily f);
KernelScale parse_kernel_scale(const std::string& name);
const char* kernel_scale_name(KernelScale s);

// Kernel family, bandwidth and scale. An empty bandwidth means the per-arm
// default: max(0.5 / sqrt(n_deaths), 2 / n_deaths) on the rank scale, and
// 1.06 * sd(death times) * n_deaths^(-1/5) on the time scale.
struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov;
  std::optional<double> bandwidth;
  KernelScale scale = KernelScale::rank;
};

double kernel_value(KernelFamily family, double u);
// Half-width of the kernel support in units of u (infinity for gaussian).
double kernel_support(KernelFamily family);

double rule_of_thumb_bandwidth(const Dataset& data, int a, KernelScale scale = KernelScale::rank);
double resolve_bandwidth(const KernelSpec& kernel, const Dataset& data, int a);

// Product-limit estimate of S_{2|A=a}. Risk sets honour delayed entry
// (entry <= t <= t2_obs). Optional per-record weights (indexed like
// data.records()).
StepFunction km_survival(const Dataset& data, int a, std::span<const double> weights = {});

// Kernel-smoothed conditional KM of T1 given T2 = t within {A=a, delta2=1}.
struct SmoothedConditionalKM {
  int arm = 0;
  KernelFamily family = KernelFamily::epanechnikov;
  KernelScale scale = KernelScale::rank;
  double bandwidth = 0.0;
  std::vector<double> grid;
  // curves[k] estimates S_{1|A=a,T2=grid[k]}; it starts at 1 and is constant
  // beyond grid[k].
  std::vector<StepFunction> curves;
};

SmoothedConditionalKM smoothed_km_conditional(const Dataset& data, int a,
                                              std::span<const double> t_grid,
                                              const KernelSpec& kernel);

struct RmstValue {
  double value = 0.0;
  bool extrapolated = false;  // t_star lies beyond the last knot
};

// Integral of a survival step function over [0, t_star].
RmstValue rmst(const StepFunction& survival, double t_star);

// inf{t : 1 - S(t) >= q}, or +infinity when the curve never gets there.
double quantile(const StepFunction& survival, double q);

}  // namespace semicomp
