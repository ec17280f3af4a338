#include "semicomp/cli.hpp"

#include <CLI11.hpp>
#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "semicomp/bootstrap.hpp"
#include "semicomp/bounds.hpp"
#include "semicomp/components.hpp"
#include "semicomp/effects.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/idm.hpp"
#include "semicomp/parallel.hpp"
#include "semicomp/serialize.hpp"
#include "semicomp/simulation.hpp"

namespace semicomp {
namespace {

namespace fs = std::filesystem;

// Fully resolved options of one run. Keys in config files and manifests are
// the long flag names with '-' replaced by '_'.
struct RunConfig {
  std::string command;
  std::string in, out, scenario, fit0, fit1;
  std::string scenario_text;  // resolved scenario, so reruns do not depend on the file
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  // columns
  std::string col_id = "id", col_a = "a", col_t1 = "t1", col_d1 = "d1", col_t2 = "t2",
              col_d2 = "d2", col_entry = "entry", z_col, col_x = "auto";
  // estimation
  std::string grid = "auto";
  std::string kernel = "epanechnikov";
  std::string kernel_scale = "rank";
  std::optional<double> bandwidth;
  bool reselect_bandwidth = false;
  std::optional<double> t_star;
  std::vector<double> rho{0.0, 0.5, 1.0};
  std::size_t draws = 10000;
  std::string frailty = "gamma-corr";
  std::string theta_rule = "pooled";
  double em_tol = 1e-6;
  int em_max_iter = 500;
  std::optional<double> fixed_theta;
  std::string theta_step = "observed";
  bool allow_degenerate = false;
  // simulation truth
  std::size_t mc_size = 0;
  // bootstrap
  std::string target = "bounds";
  std::size_t boot_reps = 100;
  double level = 0.95;
  bool unstratified = false;
  bool dump_replicates = false;
  double max_failure_fraction = 0.10;
};

// Commands an option applies to.
enum : unsigned {
  c_simulate = 1, c_bounds = 2, c_fit = 4, c_effects = 8, c_bootstrap = 16, c_report = 32
};
constexpr unsigned c_estimate = c_bounds | c_fit | c_effects | c_bootstrap;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ValidationError("option '" + key + "': " + why);
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    try {
      v = static_cast<T>(std::stod(s, &used));
    } catch (const std::exception&) {
      bad(key, "expected a number, got '" + s + "'");
    }
    if (used != s.size()) bad(key, "expected a number, got '" + s + "'");
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      bad(key, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

// One configurable option: how to set it from a flag value or a JSON value
// and how to write it back.
struct Field {
  std::string key;
  std::string help;
  unsigned commands;
  bool flag = false;
  std::function<void(RunConfig&, const std::string&)> from_string;
  std::function<void(RunConfig&, const json&)> from_json;
  std::function<json(const RunConfig&)> to_json;
};

template <class T>
T json_as(const std::string& key, const json& j) {
  try {
    if constexpr (std::is_same_v<T, double>) return number_from_json(j);
    else return j.get<T>();
  } catch (const json::exception&) {
    bad(key, "wrong type in configuration");
  } catch (const ValidationError&) {
    bad(key, "wrong type in configuration");
  }
}

template <class T>
Field scalar(std::string key, T RunConfig::*m, unsigned cmds, std::string help) {
  Field f{key, std::move(help), cmds, false, {}, {}, {}};
  f.from_string = [key, m](RunConfig& c, const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) c.*m = s;
    else c.*m = parse_number<T>(key, s);
  };
  f.from_json = [key, m](RunConfig& c, const json& j) { c.*m = json_as<T>(key, j); };
  f.to_json = [m](const RunConfig& c) -> json {
    if constexpr (std::is_same_v<T, double>) return number_json(c.*m);
    else return c.*m;
  };
  return f;
}

template <class T>
Field optional(std::string key, std::optional<T> RunConfig::*m, unsigned cmds, std::string help) {
  Field f{key, std::move(help), cmds, false, {}, {}, {}};
  f.from_string = [key, m](RunConfig& c, const std::string& s) { c.*m = parse_number<T>(key, s); };
  f.from_json = [key, m](RunConfig& c, const json& j) {
    if (j.is_null()) c.*m = std::nullopt;
    else c.*m = json_as<T>(key, j);
  };
  f.to_json = [m](const RunConfig& c) -> json {
    if (!(c.*m)) return nullptr;
    if constexpr (std::is_same_v<T, double>) return number_json(*(c.*m));
    else return *(c.*m);
  };
  return f;
}

Field boolean(std::string key, bool RunConfig::*m, unsigned cmds, std::string help) {
  Field f{key, std::move(help), cmds, true, {}, {}, {}};
  f.from_string = [m](RunConfig& c, const std::string&) { c.*m = true; };
  f.from_json = [key, m](RunConfig& c, const json& j) { c.*m = json_as<bool>(key, j); };
  f.to_json = [m](const RunConfig& c) -> json { return c.*m; };
  return f;
}

Field number_list(std::string key, std::vector<double> RunConfig::*m, unsigned cmds,
                  std::string help) {
  Field f{key, std::move(help), cmds, false, {}, {}, {}};
  f.from_string = [key, m](RunConfig& c, const std::string& s) {
    std::vector<double> v;
    for (const auto& part : split(s, ',')) v.push_back(parse_number<double>(key, part));
    if (v.empty()) bad(key, "empty list");
    c.*m = v;
  };
  f.from_json = [key, m](RunConfig& c, const json& j) {
    if (!j.is_array()) bad(key, "expected a list of numbers");
    std::vector<double> v;
    for (const auto& e : j) v.push_back(json_as<double>(key, e));
    c.*m = v;
  };
  f.to_json = [m](const RunConfig& c) -> json {
    json a = json::array();
    for (double d : c.*m) a.push_back(number_json(d));
    return a;
  };
  return f;
}

std::vector<Field> make_fields() {
  const unsigned all = c_simulate | c_estimate | c_report;
  const unsigned data = c_estimate;
  return {
      scalar("in", &RunConfig::in, data | c_report, "input CSV (run directory for report)"),
      scalar("out", &RunConfig::out, all, "output directory"),
      scalar("scenario", &RunConfig::scenario, c_simulate, "scenario TOML file"),
      optional("n", &RunConfig::n, c_simulate, "sample size (overrides the scenario)"),
      optional("seed", &RunConfig::seed, c_simulate | c_effects | c_bootstrap, "master seed"),
      scalar("threads", &RunConfig::threads, all, "worker cap (0: SEMICOMP_THREADS or 1)"),
      scalar("col-id", &RunConfig::col_id, data, "id column"),
      scalar("col-a", &RunConfig::col_a, data, "treatment column"),
      scalar("col-t1", &RunConfig::col_t1, data, "observed disease time column"),
      scalar("col-d1", &RunConfig::col_d1, data, "disease indicator column"),
      scalar("col-t2", &RunConfig::col_t2, data, "observed death time column"),
      scalar("col-d2", &RunConfig::col_d2, data, "death indicator column"),
      scalar("col-entry", &RunConfig::col_entry, data, "delayed entry column"),
      scalar("z-col", &RunConfig::z_col, data, "discrete covariate column for adjusted bounds"),
      scalar("col-x", &RunConfig::col_x, data,
             "covariate columns: comma list, 'auto' (all other columns) or 'none'"),
      scalar("grid", &RunConfig::grid, c_simulate | c_estimate,
             "evaluation times: 'auto' or a comma list"),
      scalar("kernel", &RunConfig::kernel, c_bounds | c_bootstrap,
             "epanechnikov, gaussian or uniform"),
      scalar("kernel-scale", &RunConfig::kernel_scale, c_bounds | c_bootstrap,
             "kernel axis: rank (death-time ECDF) or time"),
      optional("bandwidth", &RunConfig::bandwidth, c_bounds | c_bootstrap,
               "kernel bandwidth on the kernel axis (default: per-arm rule of thumb)"),
      boolean("reselect-bandwidth", &RunConfig::reselect_bandwidth, c_bootstrap,
              "re-select rule-of-thumb bandwidths in every replicate"),
      optional("t-star", &RunConfig::t_star, c_simulate | c_bounds | c_effects | c_bootstrap,
               "restriction time for restricted means and medians"),
      number_list("rho", &RunConfig::rho, c_effects | c_bootstrap,
                  "cross-world frailty correlations, comma list"),
      scalar("B", &RunConfig::draws, c_effects | c_bootstrap, "Monte Carlo draws per rho"),
      scalar("frailty", &RunConfig::frailty, c_effects | c_bootstrap,
             "gamma-corr, gamma-indep or lognormal-corr"),
      scalar("theta-rule", &RunConfig::theta_rule, c_effects | c_bootstrap,
             "separate or pooled frailty variances"),
      scalar("fit0", &RunConfig::fit0, c_effects, "arm 0 fit JSON (skips fitting)"),
      scalar("fit1", &RunConfig::fit1, c_effects, "arm 1 fit JSON (skips fitting)"),
      scalar("em-tol", &RunConfig::em_tol, c_fit | c_effects | c_bootstrap,
             "EM stopping rule on |delta log-likelihood|"),
      scalar("em-max-iter", &RunConfig::em_max_iter, c_fit | c_effects | c_bootstrap,
             "EM iteration cap"),
      optional("fixed-theta", &RunConfig::fixed_theta, c_fit | c_effects | c_bootstrap,
               "hold the frailty variance fixed"),
      scalar("theta-step", &RunConfig::theta_step, c_fit | c_effects | c_bootstrap,
             "observed or expected"),
      boolean("allow-degenerate", &RunConfig::allow_degenerate, c_fit | c_effects | c_bootstrap,
              "accept transitions without events"),
      scalar("mc-size", &RunConfig::mc_size, c_simulate,
             "population Monte Carlo size for truth (0: skip)"),
      scalar("target", &RunConfig::target, c_bootstrap, "bounds, fit or effects"),
      scalar("boot-reps", &RunConfig::boot_reps, c_bootstrap, "bootstrap replicates"),
      scalar("level", &RunConfig::level, c_bootstrap, "Wald interval level"),
      boolean("unstratified", &RunConfig::unstratified, c_bootstrap,
              "resample ignoring arms"),
      boolean("dump-replicates", &RunConfig::dump_replicates, c_bootstrap,
              "write the replicate matrix"),
      scalar("max-failure-fraction", &RunConfig::max_failure_fraction, c_bootstrap,
             "largest tolerated share of failed replicates"),
  };
}

std::string json_key(const std::string& flag) {
  std::string k = flag;
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

json config_to_json(const RunConfig& c, const std::vector<Field>& fields) {
  json j = json::object();
  j["command"] = c.command;
  for (const auto& f : fields) j[json_key(f.key)] = f.to_json(c);
  if (!c.scenario_text.empty()) j["scenario_text"] = c.scenario_text;
  return j;
}

void apply_json(RunConfig& c, const json& j, const std::vector<Field>& fields, bool strict) {
  if (!j.is_object()) throw ValidationError("configuration must be a table");
  for (const auto& [k, v] : j.items()) {
    if (k == "command" || k == "scenario_text") continue;
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const Field& f) { return json_key(f.key) == k; });
    if (it == fields.end()) {
      if (strict) throw ValidationError("unknown configuration key '" + k + "'");
      continue;
    }
    it->from_json(c, v);
  }
  if (j.contains("scenario_text")) c.scenario_text = j.at("scenario_text").get<std::string>();
}

json toml_to_json(const std::string& path) {
  toml::table t;
  try {
    t = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    throw ValidationError(path + ": " + std::string(e.description()));
  }
  std::ostringstream ss;
  ss << toml::json_formatter{t};
  return json::parse(ss.str());
}

// FNV-1a over a file's bytes; recorded for inputs and outputs.
std::string file_digest(const fs::path& p) {
  const std::string bytes = read_text(p);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// ---- shared pieces --------------------------------------------------------

struct Run {
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> outputs;
  json inputs = json::object();

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void input(const std::string& path) { inputs[path] = file_digest(path); }
};

ColumnMapping column_mapping(const RunConfig& c) {
  ColumnMapping m;
  m.id = c.col_id;
  m.a = c.col_a;
  m.t1 = c.col_t1;
  m.d1 = c.col_d1;
  m.t2 = c.col_t2;
  m.d2 = c.col_d2;
  m.entry = c.col_entry;
  // Without --z-col any z column is ignored: map z to a name no header has.
  m.z = c.z_col.empty() ? std::string("\x01") : c.z_col;
  if (c.col_x == "none") return m;
  if (c.col_x != "auto") {
    m.x = split(c.col_x, ',');
    return m;
  }
  std::ifstream in(c.in);
  std::string header;
  if (!in || !std::getline(in, header)) throw ValidationError("cannot read header of " + c.in);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const std::vector<std::string> known{c.col_id, c.col_a,     c.col_t1, c.col_d1, c.col_t2,
                                       c.col_d2, c.col_entry, "z",      c.z_col};
  for (auto name : split(header, ',')) {
    if (name.size() >= 2 && name.front() == '"' && name.back() == '"')
      name = name.substr(1, name.size() - 2);
    if (std::find(known.begin(), known.end(), name) == known.end()) m.x.push_back(name);
  }
  return m;
}

Dataset load_input(Run& run) {
  if (run.cfg.in.empty()) throw ValidationError("--in is required");
  run.input(run.cfg.in);
  Dataset d = load_csv(run.cfg.in, column_mapping(run.cfg));
  d.require_both_arms();
  return d;
}

std::vector<double> resolve_grid(const std::string& spec, const Dataset* data) {
  if (spec == "auto") {
    if (!data) throw ValidationError("--grid auto needs data");
    return default_grid(*data);
  }
  std::vector<double> g;
  for (const auto& part : split(spec, ',')) {
    const double t = parse_number<double>("grid", part);
    if (!(t >= 0.0) || !std::isfinite(t)) bad("grid", "times must be finite and non-negative");
    g.push_back(t);
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  if (g.empty()) bad("grid", "empty grid");
  return g;
}

IdmModelSpec em_spec(const RunConfig& c) {
  IdmModelSpec s;
  s.tol = c.em_tol;
  s.max_iter = c.em_max_iter;
  s.fixed_theta = c.fixed_theta;
  s.allow_degenerate = c.allow_degenerate;
  if (c.theta_step == "observed") s.theta_step = ThetaStep::observed;
  else if (c.theta_step == "expected") s.theta_step = ThetaStep::expected;
  else bad("theta-step", "expected observed or expected");
  return s;
}

// ---- bounds ---------------------------------------------------------------

// Bandwidths per (z level, arm); level "" is the whole sample.
using Bandwidths = std::map<std::string, std::array<double, 2>>;

Bandwidths select_bandwidths(const Dataset& data, const KernelSpec& kernel, bool with_z) {
  Bandwidths b;
  b[""] = {resolve_bandwidth(kernel, data, 0), resolve_bandwidth(kernel, data, 1)};
  if (with_z)
    for (const auto& level : data.z_levels()) {
      const Dataset sub = data.filter_z(level);
      std::array<double, 2> h{};
      for (int a : {0, 1}) {
        if (sub.arm_size(a) == 0) throw EmptyCell(a, level);
        h[a] = resolve_bandwidth(kernel, sub, a);
      }
      b[level] = h;
    }
  return b;
}

KernelSpec arm_kernel(const KernelSpec& k, const Bandwidths& bw, const std::string& level, int a) {
  KernelSpec out = k;
  auto it = bw.find(level);
  if (it != bw.end()) out.bandwidth = it->second[a];
  return out;
}

struct BoundsRun {
  std::vector<BoundsResult> variants;
  std::vector<RmstBounds> rmst;
};

BoundsRun compute_bounds(const Dataset& data, const KernelSpec& kernel, const Bandwidths* fixed,
                         const std::vector<double>& grid, std::optional<double> t_star) {
  const Bandwidths none;
  const Bandwidths& bw = fixed ? *fixed : none;
  const ComponentSet c0 = estimate_components(data, 0, arm_kernel(kernel, bw, "", 0), grid);
  const ComponentSet c1 = estimate_components(data, 1, arm_kernel(kernel, bw, "", 1), grid);
  BoundsRun run;
  BoundsResult unadj = bounds_unadjusted(c0, c1, grid);

  // Rank preservation sharpens the T1 lower bound.
  BoundsResult ranked = unadj;
  ranked.variant = "ranked";
  {
    const StepFunction rl = bounds_ranked_lower(c0, c1, grid);
    auto& eb = ranked[BoundEffect::t1_ad];
    std::vector<double> lo = eb.lower.values();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      lo[k] = std::min(std::max(lo[k], rl(grid[k])), eb.upper.values()[k]);
      eb.flags[k] |= bound_flags::rank_assumption;
    }
    eb.lower = StepFunction(grid, lo, 0.0);
  }
  run.variants.push_back(unadj);
  if (data.has_z()) {
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
      c.c0 = estimate_components(sub, 0, arm_kernel(kernel, bw, level, 0), grid);
      c.c1 = estimate_components(sub, 1, arm_kernel(kernel, bw, level, 1), grid);
      cells.push_back(std::move(c));
    }
    BoundsResult adj = bounds_adjusted(cells, grid);
    adj.variant = "adj";
    BoundsResult combined = combine_bounds(unadj, adj);
    run.variants.push_back(std::move(adj));
    run.variants.push_back(std::move(ranked));
    run.variants.push_back(std::move(combined));
  } else {
    run.variants.push_back(std::move(ranked));
  }
  if (t_star)
    for (const auto& v : run.variants) run.rmst.push_back(rmst_bounds(v, *t_star));
  return run;
}

KernelSpec kernel_of(const RunConfig& c) {
  KernelSpec k;
  k.family = parse_kernel_family(c.kernel);
  k.bandwidth = c.bandwidth;
  k.scale = parse_kernel_scale(c.kernel_scale);
  return k;
}

std::vector<double> bounds_outputs(const BoundsRun& b, std::vector<std::string>* names) {
  std::vector<double> out;
  auto add = [&](const std::string& name, double v) {
    out.push_back(v);
    if (names) names->push_back(name);
  };
  const auto& s = b.variants.front().strata;
  add("pi_ad", s.pi_ad);
  add("pi_nd", s.pi_nd);
  add("pi_dh", s.pi_dh);
  for (const auto& v : b.variants)
    for (BoundEffect e : kBoundEffects)
      for (std::size_t g = 0; g < v.grid.size(); ++g) {
        const std::string stem = v.variant + ":" + bound_effect_name(e) + ":" + format_double(v.grid[g]);
        add(stem + ":lower", v[e].lower.values()[g]);
        add(stem + ":upper", v[e].upper.values()[g]);
      }
  for (std::size_t i = 0; i < b.rmst.size(); ++i) {
    const auto& r = b.rmst[i];
    const std::string stem = b.variants[i].variant + ":";
    const std::pair<const char*, Interval> iv[] = {{"ATE_T2_ad", r.t2_ad},
                                                   {"ATE_T1_ad", r.t1_ad},
                                                   {"ATE_T2minusT1_ad", r.gap_ad},
                                                   {"ATE_T2_nd", r.t2_nd}};
    for (const auto& [name, x] : iv) {
      add(stem + name + ":lower", x.lower);
      add(stem + name + ":upper", x.upper);
    }
  }
  return out;
}

// ---- fits and effects -----------------------------------------------------

std::array<IdmFit, 2> fit_arms(const Dataset& data, const IdmModelSpec& spec,
                               const std::array<IdmFit, 2>* warm) {
  std::array<IdmFit, 2> f;
  for (int a : {0, 1}) f[a] = em_fit(data, a, spec, warm ? &(*warm)[a] : nullptr);
  return f;
}

std::vector<double> fit_outputs(const std::array<IdmFit, 2>& f, std::vector<std::string>* names) {
  std::vector<double> out;
  for (int a : {0, 1}) {
    const std::string arm = "arm" + std::to_string(a) + ":";
    out.push_back(f[a].theta);
    if (names) names->push_back(arm + "theta");
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t j = 0; j < f[a].transitions[k].beta.size(); ++j) {
        out.push_back(f[a].transitions[k].beta[j]);
        if (names)
          names->push_back(arm + transition_name(static_cast<Transition>(k)) + ":" +
                           f[a].covariate_names[j]);
      }
  }
  return out;
}

EffectRequest effect_request(const RunConfig& c, const std::array<IdmFit, 2>& f,
                             const Dataset* data, const std::vector<double>& grid) {
  if (!c.t_star) throw ValidationError("--t-star is required");
  EffectRequest req;
  req.t_grid = grid;
  req.t_star = *c.t_star;
  req.draws = c.draws;
  req.frailty.family = parse_frailty_family(c.frailty);
  if (c.theta_rule == "pooled") {
    const auto th = combine_frailty_variances(f[0], f[1], FrailtyCombineRule::pooled);
    req.frailty.theta0 = th.first;
    req.frailty.theta1 = th.second;
  } else if (c.theta_rule == "separate") {
    req.frailty.theta0 = f[0].theta;
    req.frailty.theta1 = f[1].theta;
  } else {
    bad("theta-rule", "expected separate or pooled");
  }
  if (f[0].covariate_names != f[1].covariate_names)
    throw ValidationError("the two fits use different covariates");
  if (!f[0].covariate_names.empty()) {
    if (!data) throw ValidationError("--in is required to average over covariates");
    if (data->covariate_names() != f[0].covariate_names)
      throw ValidationError("data covariates do not match the fitted covariates");
    for (const auto& r : data->records()) req.x_pool.push_back(r.x);
  }
  return req;
}

std::vector<double> effects_outputs(const std::vector<EffectResult>& sweep,
                                    std::vector<std::string>* names) {
  std::vector<double> out;
  for (const auto& r : sweep) {
    const std::string stem = "rho=" + format_double(r.rho) + ":";
    for (std::size_t i = 0; i < kScalarEffects.size(); ++i) {
      out.push_back(r.scalar[i].estimate);
      if (names) names->push_back(stem + effect_name(kScalarEffects[i]));
    }
    for (std::size_t e = 0; e < kCurveEffects.size(); ++e)
      for (std::size_t g = 0; g < r.grid.size(); ++g) {
        out.push_back(r.curve[e][g]);
        if (names) names->push_back(stem + effect_name(kCurveEffects[e]) + ":" + format_double(r.grid[g]));
      }
    out.push_back(r.pi_ad);
    out.push_back(r.pi_nd);
    if (names) {
      names->push_back(stem + "pi_ad");
      names->push_back(stem + "pi_nd");
    }
  }
  return out;
}

// ---- commands -------------------------------------------------------------

void cmd_simulate(Run& run) {
  const auto& c = run.cfg;
  ScenarioConfig sc = parse_scenario(c.scenario_text);
  if (c.n) sc.n = *c.n;
  if (c.seed) sc.seed = *c.seed;
  run.cfg.seed = sc.seed;
  run.cfg.n = sc.n;
  sc.validate();
  const SimulationResult sim = simulate(sc);
  write_csv(sim.data, run.output("data.csv"));
  write_truth_csv(sim, run.output("data_truth.csv"));
  write_text(run.output("scenario.toml"), scenario_to_toml(sc));
  json summary{{"n", sim.data.size()},
               {"seed", sc.seed},
               {"censoring_parameter", number_json(sim.censoring_parameter)},
               {"censored_fraction", sim.censored_fraction}};
  if (c.mc_size > 0) {
    if (!c.t_star) throw ValidationError("--mc-size needs --t-star");
    std::vector<double> grid;
    if (c.grid == "auto") {
      for (int k = 1; k <= 40; ++k) grid.push_back(2.0 * *c.t_star * k / 40.0);
    } else {
      grid = resolve_grid(c.grid, nullptr);
    }
    const PopulationTruth truth = population_functionals(sc, grid, *c.t_star, c.mc_size);
    write_json(run.output("population.json"), truth_to_json(truth));
  }
  write_json(run.output("simulation.json"), summary);
}

void cmd_bounds(Run& run) {
  const Dataset data = load_input(run);
  const auto grid = resolve_grid(run.cfg.grid, &data);
  const BoundsRun b = compute_bounds(data, kernel_of(run.cfg), nullptr, grid, run.cfg.t_star);
  std::ofstream csv(run.output("bounds.csv"));
  write_bounds_csv(b.variants, csv);
  write_json(run.output("bounds.json"), bounds_to_json(b.variants, b.rmst));
}

void write_fits(Run& run, const std::array<IdmFit, 2>& f) {
  for (int a : {0, 1}) save_fit(f[a], run.output("fit_arm" + std::to_string(a) + ".json"));
  std::ofstream out(run.output("fit_cumhaz.csv"));
  out << "arm,transition,time,cumhaz\n";
  for (int a : {0, 1})
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& ch = f[a].transitions[k].cumhaz;
      for (std::size_t i = 0; i < ch.size(); ++i)
        out << a << ',' << transition_name(static_cast<Transition>(k)) << ','
            << format_double(ch.knots()[i]) << ',' << format_double(ch.values()[i]) << '\n';
    }
}

void cmd_fit(Run& run) {
  const Dataset data = load_input(run);
  write_fits(run, fit_arms(data, em_spec(run.cfg), nullptr));
}

void cmd_effects(Run& run) {
  const auto& c = run.cfg;
  std::optional<Dataset> data;
  if (!c.in.empty()) data = load_input(run);
  std::array<IdmFit, 2> f;
  if (!c.fit0.empty() || !c.fit1.empty()) {
    if (c.fit0.empty() || c.fit1.empty()) throw ValidationError("--fit0 and --fit1 go together");
    run.input(c.fit0);
    run.input(c.fit1);
    f = {load_fit(c.fit0), load_fit(c.fit1)};
  } else {
    if (!data) throw ValidationError("effects needs --in or --fit0/--fit1");
    f = fit_arms(*data, em_spec(c), nullptr);
    write_fits(run, f);
  }
  std::vector<double> grid;
  if (c.grid != "auto") grid = resolve_grid(c.grid, nullptr);
  else if (data) grid = default_grid(*data);
  const EffectRequest req = effect_request(c, f, data ? &*data : nullptr, grid);
  const auto sweep = rho_sweep(f[0], f[1], req, c.rho, *c.seed);
  std::ofstream csv(run.output("effects.csv"));
  write_effects_csv(sweep, csv);
  write_json(run.output("effects.json"), effects_to_json(sweep));
}

void cmd_bootstrap(Run& run) {
  const auto& c = run.cfg;
  const Dataset data = load_input(run);
  BootstrapPlan plan;
  plan.reps = c.boot_reps;
  plan.seed = *c.seed;
  plan.level = c.level;
  plan.stratified = !c.unstratified;
  plan.max_failure_fraction = c.max_failure_fraction;
  if (plan.reps < 2) bad("boot-reps", "need at least 2 replicates");
  if (!(plan.level > 0.0 && plan.level < 1.0)) bad("level", "must lie in (0, 1)");

  std::vector<std::string> names;
  Pipeline pipeline;
  if (c.target == "bounds") {
    const auto grid = resolve_grid(c.grid, &data);
    const KernelSpec kernel = kernel_of(c);
    const Bandwidths bw = select_bandwidths(data, kernel, data.has_z());
    const bool reselect = c.reselect_bandwidth;
    const auto t_star = c.t_star;
    bounds_outputs(compute_bounds(data, kernel, &bw, grid, t_star), &names);
    pipeline = [=](const Dataset& d, std::uint64_t) {
      return bounds_outputs(compute_bounds(d, kernel, reselect ? nullptr : &bw, grid, t_star), nullptr);
    };
  } else if (c.target == "fit" || c.target == "effects") {
    const IdmModelSpec spec = em_spec(c);
    const auto original = std::make_shared<std::array<IdmFit, 2>>(fit_arms(data, spec, nullptr));
    if (c.target == "fit") {
      fit_outputs(*original, &names);
      pipeline = [=](const Dataset& d, std::uint64_t) {
        return fit_outputs(fit_arms(d, spec, original.get()), nullptr);
      };
    } else {
      const auto grid = c.grid == "auto" ? std::vector<double>{} : resolve_grid(c.grid, nullptr);
      const RunConfig cc = c;
      const auto run_effects = [=](const Dataset& d, const std::array<IdmFit, 2>& f,
                                   std::uint64_t seed, std::vector<std::string>* nm) {
        const EffectRequest req = effect_request(cc, f, &d, grid);
        return effects_outputs(rho_sweep(f[0], f[1], req, cc.rho, seed), nm);
      };
      run_effects(data, *original, plan.seed, &names);
      pipeline = [=](const Dataset& d, std::uint64_t seed) {
        return run_effects(d, fit_arms(d, spec, original.get()), seed, nullptr);
      };
    }
  } else {
    bad("target", "expected bounds, fit or effects");
  }

  const BootstrapResult r = bootstrap(data, pipeline, plan);
  std::ofstream csv(run.output("bootstrap.csv"));
  write_bootstrap_csv(r, names, csv);
  if (c.dump_replicates) {
    std::ofstream rep(run.output("replicates.csv"));
    write_replicates_csv(r, names, rep);
  }
  json failures = r.failures;
  write_json(run.output("bootstrap.json"),
             json{{"target", c.target},
                  {"reps", plan.reps},
                  {"succeeded", r.replicates.size()},
                  {"failed", r.failures.size()},
                  {"failures", failures},
                  {"level", r.level}});
}

void cmd_report(Run& run) {
  const fs::path dir = run.cfg.in;
  if (dir.empty() || !fs::is_directory(dir)) throw ValidationError("--in must be a run directory");
  if (fs::weakly_canonical(dir) == fs::weakly_canonical(run.out))
    throw ValidationError("report --out must differ from the run directory");
  json rep = json::object();
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    run.input(manifest.string());
    rep["manifest"] = read_json(manifest);
  }
  json files = json::array();
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  json artifacts = json::object();
  for (const auto& p : entries) {
    files.push_back(json{{"name", p.filename().string()},
                         {"bytes", fs::file_size(p)},
                         {"digest", file_digest(p)}});
    const std::string name = p.filename().string();
    if (name == "manifest.json" || p.extension() != ".json") continue;
    json j = read_json(p);
    if (name.rfind("fit_arm", 0) == 0) {
      // Summaries only; the baselines stay in the fit files.
      json s{{"arm", j.at("arm")}, {"theta", j.at("theta")}, {"covariates", j.at("covariates")}};
      for (const auto& [k, t] : j.at("transitions").items())
      {
        s["beta_" + k] = t.at("beta");
        s["events_" + k] = t.at("events");
      }
      s["loglik"] = j.at("convergence").at("loglik");
      s["iterations"] = j.at("convergence").at("iterations");
      s["converged"] = j.at("convergence").at("converged");
      j = s;
    }
    artifacts[p.stem().string()] = j;
  }
  for (const char* csv : {"bootstrap.csv"}) {
    const fs::path p = dir / csv;
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    json rows = json::array();
    while (std::getline(in, line)) {
      const auto f = split(line, ',');
      if (f.size() < 5) continue;
      rows.push_back(json{{"output", f[0]},
                          {"estimate", f[1]},
                          {"se", f[2]},
                          {"lower", f[3]},
                          {"upper", f[4]}});
    }
    artifacts["bootstrap_table"] = rows;
  }
  rep["files"] = files;
  rep["artifacts"] = artifacts;
  write_json(run.output("report.json"), rep);
}

void dispatch(Run& run) {
  const auto& cmd = run.cfg.command;
  if (cmd == "simulate") cmd_simulate(run);
  else if (cmd == "bounds") cmd_bounds(run);
  else if (cmd == "fit") cmd_fit(run);
  else if (cmd == "effects") cmd_effects(run);
  else if (cmd == "bootstrap") cmd_bootstrap(run);
  else if (cmd == "report") cmd_report(run);
  else throw ValidationError("unknown command '" + cmd + "'");
}

// Resolves remaining inputs, runs the command and writes the manifest.
void execute(RunConfig cfg, const std::vector<Field>& fields,
             const std::optional<json>& expected_inputs = std::nullopt) {
  if (cfg.command == "simulate" && cfg.scenario_text.empty()) {
    if (cfg.scenario.empty()) throw ValidationError("--scenario is required");
    cfg.scenario_text = read_text(cfg.scenario);
  }
  if (cfg.command == "report" && cfg.out.empty()) cfg.out = (fs::path(cfg.in) / "report").string();
  if (cfg.out.empty()) cfg.out = ".";
  // Absolute paths keep manifests usable from any working directory.
  for (std::string* p : {&cfg.in, &cfg.out, &cfg.scenario, &cfg.fit0, &cfg.fit1})
    if (!p->empty()) *p = fs::absolute(*p).lexically_normal().string();
  if (!cfg.seed && (cfg.command == "effects" || cfg.command == "bootstrap")) cfg.seed = 1;
  if (cfg.threads > 0) set_max_threads(cfg.threads);
  fs::create_directories(cfg.out);

  Run run{cfg, cfg.out, {}, json::object()};
  dispatch(run);
  if (expected_inputs)
    for (const auto& [path, digest] : expected_inputs->items())
      if (!run.inputs.contains(path) || run.inputs[path] != digest)
        std::cerr << "warning: input " << path << " changed since the recorded run\n";

  json outputs = json::object();
  for (const auto& name : run.outputs) outputs[name] = file_digest(run.out / name);
  json manifest{{"tool", "semicomp"},
                {"manifest_version", 1},
                {"command", run.cfg.command},
                {"config", config_to_json(run.cfg, fields)},
                {"inputs", run.inputs},
                {"outputs", outputs}};
  write_json(run.out / "manifest.json", manifest);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NotConverged*>(&e)) return 3;
  if (dynamic_cast<const ValidationError*>(&e)) return 2;
  if (dynamic_cast<const json::exception*>(&e)) return 2;
  return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  const std::vector<Field> fields = make_fields();
  CLI::App app{"Causal effects in semi-competing risks: bounds, frailty models, simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "semicomp 1.0");

  struct Sub {
    std::string name;
    unsigned bit;
    CLI::App* app;
    std::string config;
    std::vector<std::pair<const Field*, CLI::Option*>> opts;
    std::map<std::string, std::string> values;
  };
  std::vector<Sub> subs = {{"simulate", c_simulate, nullptr, {}, {}, {}},
                           {"bounds", c_bounds, nullptr, {}, {}, {}},
                           {"fit", c_fit, nullptr, {}, {}, {}},
                           {"effects", c_effects, nullptr, {}, {}, {}},
                           {"bootstrap", c_bootstrap, nullptr, {}, {}, {}},
                           {"report", c_report, nullptr, {}, {}, {}}};
  const std::map<std::string, std::string> descriptions{
      {"simulate", "simulate a scenario: data.csv, data_truth.csv"},
      {"bounds", "nonparametric bounds: bounds.csv, bounds.json"},
      {"fit", "frailty illness-death fit per arm: fit_arm0.json, fit_arm1.json"},
      {"effects", "frailty-identified effects and rho sweep: effects.csv, effects.json"},
      {"bootstrap", "unit bootstrap of bounds, fit or effects: bootstrap.csv"},
      {"report", "bundle a run directory into report.json"}};
  for (auto& s : subs) {
    s.app = app.add_subcommand(s.name, descriptions.at(s.name));
    s.app->add_option("--config", s.config, "TOML file with option values (flags take precedence)");
    for (const auto& f : fields) {
      if (!(f.commands & s.bit)) continue;
      // --col-z reads like the other column options
      const std::string names = f.key == "z-col" ? "--z-col,--col-z" : "--" + f.key;
      CLI::Option* o = f.flag ? s.app->add_flag(names, f.help)
                              : s.app->add_option(names, s.values[f.key], f.help);
      s.opts.emplace_back(&f, o);
    }
  }
  std::string manifest_path, rerun_out;
  unsigned rerun_threads = 0;
  CLI::App* rerun = app.add_subcommand("rerun", "repeat a run from its manifest.json");
  rerun->add_option("--manifest", manifest_path, "manifest.json of the run")->required();
  rerun->add_option("--out", rerun_out, "output directory (default: the recorded one)");
  rerun->add_option("--threads", rerun_threads, "worker cap");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rerun->parsed()) {
      const json m = read_json(manifest_path);
      RunConfig cfg;
      cfg.command = m.at("command").get<std::string>();
      apply_json(cfg, m.at("config"), fields, true);
      if (!rerun_out.empty()) cfg.out = rerun_out;
      if (rerun_threads > 0) cfg.threads = rerun_threads;
      execute(cfg, fields, m.at("inputs"));
      return 0;
    }
    for (auto& s : subs) {
      if (!s.app->parsed()) continue;
      RunConfig cfg;
      cfg.command = s.name;
      if (!s.config.empty()) apply_json(cfg, toml_to_json(s.config), fields, true);
      for (const auto& [f, o] : s.opts)
        if (o->count() > 0) f->from_string(cfg, f->flag ? std::string() : s.values[f->key]);
      execute(cfg, fields);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 1;
}

}  // namespace semicomp
