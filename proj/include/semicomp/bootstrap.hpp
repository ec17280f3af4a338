#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "semicomp/data.hpp"

namespace semicomp {

struct BootstrapPlan {
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  double level = 0.95;
  bool stratified = true;  // resample within arms, keeping arm sizes
  double max_failure_fraction = 0.10;
};

// Maps a dataset to a fixed-length vector of outputs. Must be a pure function
// of (data, seed); it receives the original seed for the point estimate and a
// derived seed for each replicate.
using Pipeline = std::function<std::vector<double>(const Dataset&, std::uint64_t seed)>;

struct BootstrapResult {
  std::vector<double> estimate;  // pipeline on the original data
  std::vector<double> se;        // replicate standard deviation
  std::vector<double> lower, upper;  // Wald interval
  std::vector<std::vector<double>> replicates;  // successful replicates, in order
  std::vector<std::size_t> replicate_index;     // plan index of each row
  std::vector<std::string> failures;            // messages of dropped replicates
  double level = 0.95;
};

// Record positions of resample r (with replacement).
std::vector<std::size_t> resample_indices(const Dataset& data, std::uint64_t seed, std::size_t r,
                                          bool stratified);

// Seed passed to the pipeline for replicate r.
std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r);

// Replicates that throw EstimationError (non-convergence, degenerate weights
// or strata) are dropped; TooManyFailures when more than the allowed fraction
// fail. Validation errors propagate.
BootstrapResult bootstrap(const Dataset& data, const Pipeline& pipeline, const BootstrapPlan& plan);

// Summary from a replicate matrix (rows = replicates).
void summarize(BootstrapResult& result);

double normal_quantile(double p);

}  // namespace semicomp
