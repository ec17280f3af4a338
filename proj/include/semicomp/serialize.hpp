#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "semicomp/bootstrap.hpp"
#include "semicomp/bounds.hpp"
#include "semicomp/effects.hpp"
#include "semicomp/idm.hpp"
#include "semicomp/simulation.hpp"
#include "semicomp/step_function.hpp"

namespace semicomp {

using json = nlohmann::ordered_json;

// Finite numbers as JSON numbers; infinities and NaN as strings.
json number_json(double v);
double number_from_json(const json& j);

// Curves: CSV (time,value) and JSON {"value_at_zero", "knots", "values"}.
void write_curve_csv(const StepFunction& f, std::ostream& out);
json curve_to_json(const StepFunction& f);
StepFunction curve_from_json(const json& j);

// Lossless fit round trip.
json fit_to_json(const IdmFit& fit);
IdmFit fit_from_json(const json& j);
void save_fit(const IdmFit& fit, const std::filesystem::path& path);
IdmFit load_fit(const std::filesystem::path& path);

// Long format: effect,t,lower,upper,variant,flags
void write_bounds_csv(std::span<const BoundsResult> results, std::ostream& out);
json bounds_to_json(std::span<const BoundsResult> results, std::span<const RmstBounds> rmst);

// effect,t_star_or_t,rho,estimate,mc_se,B
void write_effects_csv(std::span<const EffectResult> results, std::ostream& out);
json effects_to_json(std::span<const EffectResult> results);

json truth_to_json(const PopulationTruth& truth);

// output,estimate,se,lower,upper and the replicate matrix (replicate,...)
void write_bootstrap_csv(const BootstrapResult& r, std::span<const std::string> names,
                         std::ostream& out);
void write_replicates_csv(const BootstrapResult& r, std::span<const std::string> names,
                          std::ostream& out);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace semicomp
