#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace semicomp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input problems: bad files, bad records, bad configuration. The CLI maps
// these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class MalformedRow : public ValidationError {
 public:
  MalformedRow(std::size_t line, const std::string& reason)
      : ValidationError("line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvariantViolation : public ValidationError {
 public:
  InvariantViolation(const std::string& id, const std::string& reason)
      : ValidationError("record '" + id + "': " + reason), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class EmptyArm : public ValidationError {
 public:
  explicit EmptyArm(int arm)
      : ValidationError("arm " + std::to_string(arm) + " has no records"), arm_(arm) {}
  int arm() const { return arm_; }

 private:
  int arm_;
};

class EmptyCell : public ValidationError {
 public:
  EmptyCell(int arm, const std::string& z)
      : ValidationError("cell (a=" + std::to_string(arm) + ", z=" + z +
                        ") has no records or no deaths"),
        arm_(arm), z_(z) {}
  int arm() const { return arm_; }
  const std::string& z() const { return z_; }

 private:
  int arm_;
  std::string z_;
};

class InvalidSpec : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical failures of an estimator on otherwise valid input.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class DegenerateWeights : public EstimationError {
 public:
  explicit DegenerateWeights(double t)
      : EstimationError("no death within kernel support of t=" + std::to_string(t) +
                        "; widen the bandwidth or trim the grid"),
        t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

class DegenerateEta : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class DegenerateTransition : public EstimationError {
 public:
  explicit DegenerateTransition(const std::string& transition)
      : EstimationError("transition " + transition + " has no events"), transition_(transition) {}
  const std::string& transition() const { return transition_; }

 private:
  std::string transition_;
};

// Exit code 3 in the CLI.
class NotConverged : public EstimationError {
 public:
  NotConverged(int max_iter, double last_delta)
      : EstimationError("EM did not converge in " + std::to_string(max_iter) +
                        " iterations (last |delta loglik| = " + std::to_string(last_delta) + ")"),
        max_iter_(max_iter), last_delta_(last_delta) {}
  int max_iter() const { return max_iter_; }
  double last_delta() const { return last_delta_; }

 private:
  int max_iter_;
  double last_delta_;
};

class NonFiniteLikelihood : public EstimationError {
 public:
  explicit NonFiniteLikelihood(const std::string& id)
      : EstimationError("non-finite likelihood contribution for subject '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class VanishingStratum : public EstimationError {
 public:
  explicit VanishingStratum(const std::string& stratum)
      : EstimationError("stratum '" + stratum + "' has vanishing model probability") {}
};

class TooManyFailures : public EstimationError {
 public:
  TooManyFailures(std::size_t failed, std::size_t total)
      : EstimationError(std::to_string(failed) + " of " + std::to_string(total) +
                        " bootstrap replicates failed") {}
};

class BeyondSupport : public EstimationError {
 public:
  BeyondSupport(double t_star, double support_end)
      : EstimationError("t* = " + std::to_string(t_star) + " exceeds identified range (" +
                        std::to_string(support_end) + ")") {}
};

class ResimLimitExceeded : public Error {
 public:
  explicit ResimLimitExceeded(std::size_t subject)
      : Error("order-preservation re-simulation limit exceeded for subject " +
              std::to_string(subject)) {}
};

}  // namespace semicomp
