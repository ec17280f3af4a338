#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semicomp {

// One subject's observed semi-competing risks data.
//   t1_obs = min(T1, T2, C), delta1 = disease observed
//   t2_obs = min(T2, C),     delta2 = death observed
//   entry  = age at recruitment (delayed entry), 0 when absent
struct ObservedRecord {
  std::string id;
  int a = 0;
  double t1_obs = 0.0;
  int delta1 = 0;
  double t2_obs = 0.0;
  int delta2 = 0;
  double entry = 0.0;
  std::optional<std::string> z;
  std::vector<double> x;

  friend bool operator==(const ObservedRecord&, const ObservedRecord&) = default;
};

// Throws InvariantViolation when the record is not a valid observation.
void validate_record(const ObservedRecord& r);

enum class Transition { k01, k02, k12 };

const char* transition_name(Transition t);

// Immutable collection of validated records sharing one covariate dimension.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<ObservedRecord> records,
                   std::vector<std::string> covariate_names = {});

  const std::vector<ObservedRecord>& records() const { return records_; }
  const ObservedRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  std::size_t p() const { return p_; }
  bool has_z() const { return has_z_; }
  bool has_truncation() const { return has_truncation_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::size_t arm_size(int a) const;
  std::vector<std::size_t> arm_indices(int a) const;

  // Sorted distinct levels of z (empty when has_z() is false).
  std::vector<std::string> z_levels() const;

  // Records at the given positions, in that order (duplicates allowed).
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset filter_z(const std::string& level) const;

  // Throws EmptyArm unless both arms are nonempty.
  void require_both_arms() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<ObservedRecord> records_;
  std::vector<std::string> covariate_names_;
  std::size_t p_ = 0;
  bool has_z_ = false;
  bool has_truncation_ = false;
};

// CSV column names. Optional columns that are absent from the header are
// treated as missing (entry = 0, no z, generated ids).
struct ColumnMapping {
  std::string id = "id";
  std::string a = "a";
  std::string t1 = "t1";
  std::string d1 = "d1";
  std::string t2 = "t2";
  std::string d2 = "d2";
  std::string entry = "entry";
  std::string z = "z";
  std::vector<std::string> x;
};

Dataset read_csv(std::istream& in, const ColumnMapping& schema = {});
Dataset load_csv(const std::filesystem::path& path, const ColumnMapping& schema = {});

// Writes the dataset with the default column names (plus its covariate
// names); read_csv with a matching mapping restores it exactly.
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

// Mapping that reads back what write_csv produced for this dataset.
ColumnMapping default_mapping(const Dataset& data);

// Number of subjects in arm a at risk for the transition at time t:
//   01, 02: entry <= t <= t1_obs
//   12:     delta1 = 1, entry <= t, t1_obs < t <= t2_obs
std::size_t at_risk(const Dataset& data, Transition process, int a, double t);

// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace semicomp
