#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "semicomp/errors.hpp"
#include "semicomp/simulation.hpp"

namespace semicomp {

double HazardSpec::cumhaz(double t) const {
  switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::weibull: return t <= 0.0 ? 0.0 : std::pow(t / scale, shape);
    case Kind::piecewise: {
      double acc = 0.0, start = 0.0;
      for (std::size_t k = 0; k < rates.size(); ++k) {
        const double end = k < cuts.size() ? cuts[k] : std::numeric_limits<double>::infinity();
        if (t <= end) return acc + rates[k] * (t - start);
        acc += rates[k] * (end - start);
        start = end;
      }
      return acc;
    }
  }
  return 0.0;
}

double HazardSpec::inverse(double y) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (y <= 0.0) return 0.0;
  switch (kind) {
    case Kind::zero: return inf;
    case Kind::weibull: return scale * std::pow(y, 1.0 / shape);
    case Kind::piecewise: {
      double acc = 0.0, start = 0.0;
      for (std::size_t k = 0; k < rates.size(); ++k) {
        const double end = k < cuts.size() ? cuts[k] : inf;
        const double piece = std::isinf(end) ? inf : rates[k] * (end - start);
        if (rates[k] > 0.0 && acc + piece >= y) return start + (y - acc) / rates[k];
        acc += std::isinf(end) ? 0.0 : piece;
        start = end;
      }
      return inf;
    }
  }
  return inf;
}

void HazardSpec::validate() const {
  if (kind == Kind::weibull && !(shape > 0.0 && scale > 0.0 && std::isfinite(shape) && std::isfinite(scale)))
    throw InvalidSpec("Weibull shape and scale must be positive");
  if (kind == Kind::piecewise) {
    if (rates.size() != cuts.size() + 1) throw InvalidSpec("piecewise hazard needs one more rate than cuts");
    double prev = 0.0;
    for (double c : cuts) {
      if (!(c > prev)) throw InvalidSpec("piecewise cuts must be positive and increasing");
      prev = c;
    }
    for (double r : rates)
      if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidSpec("piecewise rates must be >= 0");
  }
}

void ScenarioConfig::validate() const {
  if (n == 0) throw InvalidSpec("n must be >= 1");
  if (!(p_treat > 0.0 && p_treat < 1.0)) throw InvalidSpec("p_treat must lie in (0, 1)");
  for (const auto& arm : arms) {
    for (const auto& h : arm.hazard) h.validate();
    for (const auto& b : arm.beta)
      if (!b.empty() && b.size() != covariates.size())
        throw InvalidSpec("coefficient vector length must equal the number of covariates");
  }
  semicomp::validate(frailty);
  for (const auto& cv : covariates) {
    if (cv.law != "normal" && cv.law != "bernoulli" && cv.law != "uniform")
      throw InvalidSpec("unknown covariate law '" + cv.law + "'");
    if (cv.name.empty()) throw InvalidSpec("covariates need names");
  }
  if (z) {
    if (z->levels.empty() || z->levels.size() != z->probs.size())
      throw InvalidSpec("z needs one probability per level");
    double s = 0.0;
    for (double p : z->probs) {
      if (!(p >= 0.0)) throw InvalidSpec("z probabilities must be >= 0");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidSpec("z probabilities must sum to 1");
    for (const auto& e : z->effect)
      if (e.size() != z->levels.size()) throw InvalidSpec("z effects need one value per level");
  }
  if (world_coupling != "independent" && world_coupling != "common")
    throw InvalidSpec("world_coupling must be 'independent' or 'common'");
  const auto& c = censoring;
  if (c.law != "none" && c.law != "exponential" && c.law != "uniform")
    throw InvalidSpec("unknown censoring law '" + c.law + "'");
  if (!(c.target >= 0.0 && c.target < 1.0)) throw InvalidSpec("censoring target must lie in [0, 1)");
  if (c.parameter && !(*c.parameter >= 0.0)) throw InvalidSpec("censoring parameter must be >= 0");
  if (!(c.max_followup > 0.0)) throw InvalidSpec("max_followup must be positive");
  if (entry.law != "none" && entry.law != "uniform") throw InvalidSpec("unknown entry law '" + entry.law + "'");
  if (entry.law == "uniform" && !(entry.max > 0.0)) throw InvalidSpec("entry max must be positive");
}

namespace {

const char* kTransitionKeys[3] = {"01", "02", "12"};

double num(const toml::node_view<const toml::node>& v, double fallback) {
  if (!v) return fallback;
  if (auto d = v.value<double>()) return *d;
  throw InvalidSpec("expected a number");
}

std::vector<double> num_array(const toml::node_view<const toml::node>& v) {
  std::vector<double> out;
  if (!v) return out;
  const auto* arr = v.as_array();
  if (!arr) throw InvalidSpec("expected an array of numbers");
  for (const auto& e : *arr) {
    auto d = e.value<double>();
    if (!d) throw InvalidSpec("expected an array of numbers");
    out.push_back(*d);
  }
  return out;
}

std::string str(const toml::node_view<const toml::node>& v, const std::string& fallback) {
  if (!v) return fallback;
  if (auto s = v.value<std::string>()) return *s;
  throw InvalidSpec("expected a string");
}

HazardSpec parse_hazard(const toml::node_view<const toml::node>& v) {
  HazardSpec h;
  if (!v) return h;
  const std::string family = str(v["family"], "weibull");
  if (family == "weibull") {
    h.kind = HazardSpec::Kind::weibull;
    h.shape = num(v["shape"], 1.0);
    h.scale = num(v["scale"], 1.0);
  } else if (family == "piecewise") {
    h.kind = HazardSpec::Kind::piecewise;
    h.cuts = num_array(v["cuts"]);
    h.rates = num_array(v["rates"]);
  } else if (family == "zero") {
    h.kind = HazardSpec::Kind::zero;
  } else {
    throw InvalidSpec("unknown hazard family '" + family + "'");
  }
  return h;
}

toml::array to_array(const std::vector<double>& v) {
  toml::array a;
  for (double d : v) a.push_back(d);
  return a;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw InvalidSpec(std::string("scenario TOML: ") + std::string(e.description()));
  }
  const toml::node_view<const toml::node> root{static_cast<const toml::node&>(tbl)};
  ScenarioConfig c;
  try {
    c.name = str(root["name"], c.name);
    if (auto n = root["n"].value<std::int64_t>()) {
      if (*n < 1) throw InvalidSpec("n must be >= 1");
      c.n = static_cast<std::size_t>(*n);
    }
    if (auto s = root["seed"].value<std::int64_t>()) c.seed = static_cast<std::uint64_t>(*s);
    c.p_treat = num(root["p_treat"], c.p_treat);
    c.enforce_order_preservation = root["enforce_order_preservation"].value_or(false);
    c.resim_target = parse_stratum(str(root["resim_target"], "dp"));
    c.world_coupling = str(root["world_coupling"], "independent");

    const auto fr = root["frailty"];
    c.frailty.family = parse_frailty_family(str(fr["family"], "gamma-corr"));
    const double theta = num(fr["theta"], 1.0);
    c.frailty.theta0 = num(fr["theta0"], theta);
    c.frailty.theta1 = num(fr["theta1"], theta);
    c.frailty.rho = num(fr["rho"], 0.0);

    if (const auto* covs = root["covariates"].as_array()) {
      for (const auto& node : *covs) {
        const toml::node_view<const toml::node> cv{node};
        CovariateSpec s;
        s.name = str(cv["name"], "");
        s.law = str(cv["law"], "normal");
        s.mean = num(cv["mean"], 0.0);
        s.sd = num(cv["sd"], 1.0);
        s.p = num(cv["p"], 0.5);
        s.lo = num(cv["lo"], 0.0);
        s.hi = num(cv["hi"], 1.0);
        c.covariates.push_back(s);
      }
    }
    for (int a = 0; a < 2; ++a) {
      const auto arm = root[a == 0 ? "arm0" : "arm1"];
      if (!arm) throw InvalidSpec(std::string("missing table ") + (a == 0 ? "arm0" : "arm1"));
      for (std::size_t j = 0; j < 3; ++j) {
        c.arms[a].hazard[j] = parse_hazard(arm[std::string("h") + kTransitionKeys[j]]);
        c.arms[a].beta[j] = num_array(arm[std::string("beta") + kTransitionKeys[j]]);
      }
    }
    if (const auto zt = root["z"]) {
      ZSpec z;
      if (const auto* lv = zt["levels"].as_array())
        for (const auto& e : *lv) z.levels.push_back(e.value_or(std::string{}));
      z.probs = num_array(zt["probs"]);
      for (std::size_t j = 0; j < 3; ++j) {
        z.effect[j] = num_array(zt[std::string("effect") + kTransitionKeys[j]]);
        if (z.effect[j].empty()) z.effect[j].assign(z.levels.size(), 0.0);
      }
      c.z = z;
    }
    const auto cs = root["censoring"];
    c.censoring.law = str(cs["law"], "exponential");
    c.censoring.target = num(cs["target"], 0.0);
    if (cs["parameter"]) c.censoring.parameter = num(cs["parameter"], 0.0);
    c.censoring.max_followup = num(cs["max_followup"], c.censoring.max_followup);
    const auto en = root["entry"];
    c.entry.law = str(en["law"], "none");
    c.entry.max = num(en["max"], 0.0);
  } catch (const InvalidSpec& e) {
    throw InvalidSpec(std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_toml(const ScenarioConfig& c) {
  toml::table t;
  t.insert("name", c.name);
  t.insert("n", static_cast<std::int64_t>(c.n));
  t.insert("seed", static_cast<std::int64_t>(c.seed));
  t.insert("p_treat", c.p_treat);
  t.insert("enforce_order_preservation", c.enforce_order_preservation);
  t.insert("resim_target", std::string(stratum_name(c.resim_target)));
  t.insert("world_coupling", c.world_coupling);
  t.insert("frailty", toml::table{{"family", std::string(frailty_family_name(c.frailty.family))},
                                  {"theta0", c.frailty.theta0},
                                  {"theta1", c.frailty.theta1},
                                  {"rho", c.frailty.rho}});
  toml::array covs;
  for (const auto& cv : c.covariates)
    covs.push_back(toml::table{{"name", cv.name}, {"law", cv.law}, {"mean", cv.mean}, {"sd", cv.sd},
                               {"p", cv.p}, {"lo", cv.lo}, {"hi", cv.hi}});
  t.insert("covariates", covs);
  for (int a = 0; a < 2; ++a) {
    toml::table arm;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& h = c.arms[a].hazard[j];
      toml::table ht;
      switch (h.kind) {
        case HazardSpec::Kind::weibull:
          ht.insert("family", "weibull");
          ht.insert("shape", h.shape);
          ht.insert("scale", h.scale);
          break;
        case HazardSpec::Kind::piecewise:
          ht.insert("family", "piecewise");
          ht.insert("cuts", to_array(h.cuts));
          ht.insert("rates", to_array(h.rates));
          break;
        case HazardSpec::Kind::zero: ht.insert("family", "zero"); break;
      }
      arm.insert(std::string("h") + kTransitionKeys[j], ht);
      arm.insert(std::string("beta") + kTransitionKeys[j], to_array(c.arms[a].beta[j]));
    }
    t.insert(a == 0 ? "arm0" : "arm1", arm);
  }
  if (c.z) {
    toml::table zt;
    toml::array levels;
    for (const auto& l : c.z->levels) levels.push_back(l);
    zt.insert("levels", levels);
    zt.insert("probs", to_array(c.z->probs));
    for (std::size_t j = 0; j < 3; ++j)
      zt.insert(std::string("effect") + kTransitionKeys[j], to_array(c.z->effect[j]));
    t.insert("z", zt);
  }
  toml::table cs{{"law", c.censoring.law}, {"target", c.censoring.target}};
  if (c.censoring.parameter) cs.insert("parameter", *c.censoring.parameter);
  if (std::isfinite(c.censoring.max_followup)) cs.insert("max_followup", c.censoring.max_followup);
  t.insert("censoring", cs);
  t.insert("entry", toml::table{{"law", c.entry.law}, {"max", c.entry.max}});
  std::ostringstream out;
  out << t;
  return out.str();
}

}  // namespace semicomp
