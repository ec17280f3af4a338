#include "semicomp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "semicomp/errors.hpp"

namespace semicomp {

void validate_record(const ObservedRecord& r) {
  auto fail = [&](const std::string& why) { throw InvariantViolation(r.id, why); };
  if (r.a != 0 && r.a != 1) fail("treatment must be 0 or 1");
  if (r.delta1 != 0 && r.delta1 != 1) fail("d1 must be 0 or 1");
  if (r.delta2 != 0 && r.delta2 != 1) fail("d2 must be 0 or 1");
  if (!std::isfinite(r.t1_obs) || !std::isfinite(r.t2_obs) || !std::isfinite(r.entry))
    fail("times must be finite");
  if (r.t1_obs < 0.0 || r.t2_obs < 0.0 || r.entry < 0.0) fail("times must be non-negative");
  if (r.t1_obs > r.t2_obs) fail("t1 > t2");
  if (r.entry > r.t1_obs) fail("entry > t1");
  if (r.delta1 == 0 && r.t1_obs != r.t2_obs) fail("d1 = 0 requires t1 = t2");
  for (double v : r.x)
    if (!std::isfinite(v)) fail("covariates must be finite");
}

const char* transition_name(Transition t) {
  switch (t) {
    case Transition::k01: return "01";
    case Transition::k02: return "02";
    case Transition::k12: return "12";
  }
  return "?";
}

Dataset::Dataset(std::vector<ObservedRecord> records, std::vector<std::string> covariate_names)
    : records_(std::move(records)), covariate_names_(std::move(covariate_names)) {
  p_ = records_.empty() ? covariate_names_.size() : records_.front().x.size();
  if (!covariate_names_.empty() && covariate_names_.size() != p_)
    throw InvalidSpec("covariate names do not match covariate dimension");
  if (covariate_names_.empty())
    for (std::size_t j = 0; j < p_; ++j) covariate_names_.push_back("x" + std::to_string(j + 1));
  bool any_z = false, all_z = true;
  for (const auto& r : records_) {
    validate_record(r);
    if (r.x.size() != p_) throw InvariantViolation(r.id, "covariate dimension mismatch");
    any_z = any_z || r.z.has_value();
    all_z = all_z && r.z.has_value();
    if (r.entry > 0.0) has_truncation_ = true;
  }
  if (any_z && !all_z) throw InvalidSpec("z must be present for every record or none");
  has_z_ = any_z;
}

std::size_t Dataset::arm_size(int a) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [a](const auto& r) { return r.a == a; }));
}

std::vector<std::size_t> Dataset::arm_indices(int a) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].a == a) idx.push_back(i);
  return idx;
}

std::vector<std::string> Dataset::z_levels() const {
  std::set<std::string> levels;
  for (const auto& r : records_)
    if (r.z) levels.insert(*r.z);
  return {levels.begin(), levels.end()};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<ObservedRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records_.at(i));
  return Dataset(std::move(out), covariate_names_);
}

Dataset Dataset::filter_z(const std::string& level) const {
  std::vector<ObservedRecord> out;
  for (const auto& r : records_)
    if (r.z && *r.z == level) out.push_back(r);
  return Dataset(std::move(out), covariate_names_);
}

void Dataset::require_both_arms() const {
  for (int a : {0, 1})
    if (arm_size(a) == 0) throw EmptyArm(a);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  const std::string t = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw MalformedRow(line, "column '" + column + "' is not numeric: '" + s + "'");
  return v;
}

int parse_indicator(const std::string& s, std::size_t line, const std::string& column) {
  const double v = parse_double(s, line, column);
  if (v != 0.0 && v != 1.0)
    throw MalformedRow(line, "column '" + column + "' must be 0 or 1: '" + s + "'");
  return static_cast<int>(v);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Dataset read_csv(std::istream& in, const ColumnMapping& schema) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw MalformedRow(1, "missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[trim(header[j])] = j;

  auto required = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw MalformedRow(1, "required column '" + name + "' not found");
    return it->second;
  };
  auto optional_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  const std::size_t ca = required(schema.a), ct1 = required(schema.t1), cd1 = required(schema.d1),
                    ct2 = required(schema.t2), cd2 = required(schema.d2);
  const auto cid = optional_col(schema.id);
  const auto centry = optional_col(schema.entry);
  const auto cz = optional_col(schema.z);
  std::vector<std::size_t> cx;
  for (const auto& name : schema.x) cx.push_back(required(name));

  std::vector<ObservedRecord> records;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw MalformedRow(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(f.size()));
    ObservedRecord r;
    r.id = cid ? trim(f[*cid]) : std::to_string(records.size() + 1);
    const double a = parse_double(f[ca], lineno, schema.a);
    if (a != 0.0 && a != 1.0) throw MalformedRow(lineno, "treatment must be 0 or 1");
    r.a = static_cast<int>(a);
    r.t1_obs = parse_double(f[ct1], lineno, schema.t1);
    r.delta1 = parse_indicator(f[cd1], lineno, schema.d1);
    r.t2_obs = parse_double(f[ct2], lineno, schema.t2);
    r.delta2 = parse_indicator(f[cd2], lineno, schema.d2);
    if (centry) r.entry = parse_double(f[*centry], lineno, schema.entry);
    if (cz) r.z = trim(f[*cz]);
    for (std::size_t j = 0; j < cx.size(); ++j)
      r.x.push_back(parse_double(f[cx[j]], lineno, schema.x[j]));
    validate_record(r);
    records.push_back(std::move(r));
  }
  Dataset data(std::move(records), schema.x);
  data.require_both_arms();
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const ColumnMapping& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_csv(in, schema);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "id,a,t1,d1,t2,d2,entry";
  if (data.has_z()) out << ",z";
  for (const auto& name : data.covariate_names()) out << ',' << csv_escape(name);
  out << '\n';
  for (const auto& r : data.records()) {
    out << csv_escape(r.id) << ',' << r.a << ',' << format_double(r.t1_obs) << ',' << r.delta1
        << ',' << format_double(r.t2_obs) << ',' << r.delta2 << ',' << format_double(r.entry);
    if (data.has_z()) out << ',' << csv_escape(*r.z);
    for (double v : r.x) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_csv(data, out);
}

ColumnMapping default_mapping(const Dataset& data) {
  ColumnMapping m;
  m.x = data.covariate_names();
  return m;
}

std::size_t at_risk(const Dataset& data, Transition process, int a, double t) {
  std::size_t n = 0;
  for (const auto& r : data.records()) {
    if (r.a != a || r.entry > t) continue;
    switch (process) {
      case Transition::k01:
      case Transition::k02:
        if (t <= r.t1_obs) ++n;
        break;
      case Transition::k12:
        if (r.delta1 == 1 && r.t1_obs < t && t <= r.t2_obs) ++n;
        break;
    }
  }
  return n;
}

}  // namespace semicomp
