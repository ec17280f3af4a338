#include "semicomp/serialize.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "semicomp/data.hpp"
#include "semicomp/errors.hpp"

namespace semicomp {

json number_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a number in JSON");
}

namespace {

json vec_json(const std::vector<double>& v) {
  json a = json::array();
  for (double d : v) a.push_back(number_json(d));
  return a;
}

std::vector<double> vec_from(const json& j) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(number_from_json(e));
  return out;
}

}  // namespace

void write_curve_csv(const StepFunction& f, std::ostream& out) {
  out << "time,value\n";
  out << "0," << format_double(f.value_at_zero()) << '\n';
  for (std::size_t k = 0; k < f.size(); ++k)
    out << format_double(f.knots()[k]) << ',' << format_double(f.values()[k]) << '\n';
}

json curve_to_json(const StepFunction& f) {
  return json{{"value_at_zero", number_json(f.value_at_zero())},
              {"knots", vec_json(f.knots())},
              {"values", vec_json(f.values())}};
}

StepFunction curve_from_json(const json& j) {
  return StepFunction(vec_from(j.at("knots")), vec_from(j.at("values")),
                      number_from_json(j.at("value_at_zero")));
}

json fit_to_json(const IdmFit& fit) {
  json tr = json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& t = fit.transitions[k];
    tr[transition_name(static_cast<Transition>(k))] =
        json{{"cumhaz", curve_to_json(t.cumhaz)},
             {"beta", vec_json(t.beta)},
             {"events", t.events},
             {"degenerate", t.degenerate}};
  }
  const auto& c = fit.convergence;
  return json{{"arm", fit.arm},
              {"covariates", fit.covariate_names},
              {"theta", number_json(fit.theta)},
              {"transitions", tr},
              {"convergence",
               json{{"iterations", c.iterations},
                    {"loglik", number_json(c.loglik)},
                    {"last_delta", number_json(c.last_delta)},
                    {"converged", c.converged},
                    {"trace", vec_json(c.trace)}}}};
}

IdmFit fit_from_json(const json& j) {
  try {
    IdmFit fit;
    fit.arm = j.at("arm").get<int>();
    fit.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    fit.theta = number_from_json(j.at("theta"));
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& t = j.at("transitions").at(transition_name(static_cast<Transition>(k)));
      auto& out = fit.transitions[k];
      out.cumhaz = curve_from_json(t.at("cumhaz"));
      out.beta = vec_from(t.at("beta"));
      out.events = t.at("events").get<int>();
      out.degenerate = t.at("degenerate").get<bool>();
    }
    const auto& c = j.at("convergence");
    fit.convergence.iterations = c.at("iterations").get<int>();
    fit.convergence.loglik = number_from_json(c.at("loglik"));
    fit.convergence.last_delta = number_from_json(c.at("last_delta"));
    fit.convergence.converged = c.at("converged").get<bool>();
    fit.convergence.trace = vec_from(c.at("trace"));
    return fit;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed fit JSON: ") + e.what());
  }
}

void save_fit(const IdmFit& fit, const std::filesystem::path& path) {
  write_json(path, fit_to_json(fit));
}

IdmFit load_fit(const std::filesystem::path& path) { return fit_from_json(read_json(path)); }

void write_bounds_csv(std::span<const BoundsResult> results, std::ostream& out) {
  out << "effect,t,lower,upper,variant,flags\n";
  for (const auto& r : results)
    for (BoundEffect e : kBoundEffects) {
      const auto& eb = r[e];
      for (std::size_t g = 0; g < r.grid.size(); ++g)
        out << bound_effect_name(e) << ',' << format_double(r.grid[g]) << ','
            << format_double(eb.lower.values()[g]) << ',' << format_double(eb.upper.values()[g])
            << ',' << r.variant << ',' << describe_flags(eb.flags[g]) << '\n';
    }
}

json bounds_to_json(std::span<const BoundsResult> results, std::span<const RmstBounds> rmst) {
  json j = json::object();
  if (!results.empty()) {
    const auto& s = results.front().strata;
    j["strata"] = json{{"pi_ad", s.pi_ad},
                       {"pi_nd", s.pi_nd},
                       {"pi_dh", s.pi_dh},
                       {"order_violation", s.order_violation}};
    j["support_end"] = number_json(results.front().support_end);
  }
  json variants = json::array();
  for (const auto& r : results) {
    json eff = json::object();
    for (BoundEffect e : kBoundEffects) {
      std::vector<std::string> flags;
      for (auto f : r[e].flags) flags.push_back(describe_flags(f));
      eff[bound_effect_name(e)] = json{{"lower", vec_json(r[e].lower.values())},
                                       {"upper", vec_json(r[e].upper.values())},
                                       {"flags", flags}};
    }
    variants.push_back(json{{"variant", r.variant}, {"grid", vec_json(r.grid)}, {"effects", eff}});
  }
  j["variants"] = variants;
  json rm = json::array();
  for (const auto& r : rmst) {
    auto iv = [](const Interval& i) { return json::array({number_json(i.lower), number_json(i.upper)}); };
    rm.push_back(json{{"t_star", r.t_star},
                      {"ATE_T2_ad", iv(r.t2_ad)},
                      {"ATE_T1_ad", iv(r.t1_ad)},
                      {"ATE_T2minusT1_ad", iv(r.gap_ad)},
                      {"ATE_T2_nd", iv(r.t2_nd)}});
  }
  j["rmst"] = rm;
  return j;
}

void write_effects_csv(std::span<const EffectResult> results, std::ostream& out) {
  out << "effect,t_star_or_t,rho,estimate,mc_se,B\n";
  for (const auto& r : results) {
    for (std::size_t i = 0; i < kScalarEffects.size(); ++i)
      out << effect_name(kScalarEffects[i]) << ',' << format_double(r.t_star) << ','
          << format_double(r.rho) << ',' << format_double(r.scalar[i].estimate) << ','
          << format_double(r.scalar[i].mc_se) << ',' << r.draws << '\n';
    for (std::size_t e = 0; e < kCurveEffects.size(); ++e)
      for (std::size_t g = 0; g < r.grid.size(); ++g)
        out << effect_name(kCurveEffects[e]) << ',' << format_double(r.grid[g]) << ','
            << format_double(r.rho) << ',' << format_double(r.curve[e][g]) << ','
            << format_double(r.curve_se[e][g]) << ',' << r.draws << '\n';
  }
}

json effects_to_json(std::span<const EffectResult> results) {
  json sweep = json::array();
  for (const auto& r : results) {
    json scalars = json::object();
    for (std::size_t i = 0; i < kScalarEffects.size(); ++i)
      scalars[effect_name(kScalarEffects[i])] =
          json{{"estimate", number_json(r.scalar[i].estimate)}, {"mc_se", number_json(r.scalar[i].mc_se)}};
    json curves = json::object();
    for (std::size_t e = 0; e < kCurveEffects.size(); ++e)
      curves[effect_name(kCurveEffects[e])] =
          json{{"estimate", vec_json(r.curve[e])}, {"mc_se", vec_json(r.curve_se[e])}};
    sweep.push_back(json{{"rho", r.rho},
                         {"B", r.draws},
                         {"t_star", r.t_star},
                         {"frailty_construction", r.frailty_construction},
                         {"beyond_support", r.beyond_support},
                         {"strata", json{{"pi_ad", r.pi_ad}, {"pi_nd", r.pi_nd}, {"pi_dh", r.pi_dh}, {"pi_dp", r.pi_dp}}},
                         {"grid", vec_json(r.grid)},
                         {"scalar", scalars},
                         {"curves", curves}});
  }
  return json{{"sweep", sweep}};
}

json truth_to_json(const PopulationTruth& t) {
  json scalars = json::object();
  for (std::size_t i = 0; i < kScalarEffects.size(); ++i)
    scalars[effect_name(kScalarEffects[i])] =
        json{{"value", number_json(t.scalar[i].estimate)}, {"mc_se", number_json(t.scalar[i].mc_se)}};
  json curves = json::object();
  for (std::size_t e = 0; e < kCurveEffects.size(); ++e)
    curves[effect_name(kCurveEffects[e])] = json{{"value", vec_json(t.curve[e])}, {"mc_se", vec_json(t.curve_se[e])}};
  return json{{"mc_size", t.mc_size},
              {"t_star", t.t_star},
              {"strata", json{{"pi_ad", t.pi_ad}, {"pi_nd", t.pi_nd}, {"pi_dh", t.pi_dh}, {"pi_dp", t.pi_dp}}},
              {"eta", json::array({t.eta[0], t.eta[1]})},
              {"grid", vec_json(t.grid)},
              {"scalar", scalars},
              {"curves", curves}};
}

void write_bootstrap_csv(const BootstrapResult& r, std::span<const std::string> names, std::ostream& out) {
  out << "output,estimate,se,lower,upper,replicates,failed\n";
  for (std::size_t k = 0; k < r.estimate.size(); ++k)
    out << (k < names.size() ? names[k] : "out" + std::to_string(k)) << ',' << format_double(r.estimate[k])
        << ',' << format_double(r.se[k]) << ',' << format_double(r.lower[k]) << ','
        << format_double(r.upper[k]) << ',' << r.replicates.size() << ',' << r.failures.size() << '\n';
}

void write_replicates_csv(const BootstrapResult& r, std::span<const std::string> names, std::ostream& out) {
  out << "replicate";
  for (std::size_t k = 0; k < r.estimate.size(); ++k)
    out << ',' << (k < names.size() ? names[k] : "out" + std::to_string(k));
  out << '\n';
  for (std::size_t i = 0; i < r.replicates.size(); ++i) {
    out << r.replicate_index[i];
    for (double v : r.replicates[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace semicomp
