#pragma once

#include <stdexcept>
#include <string>

namespace pce {

// Exit-code classes used by the CLI: input errors map to 2, failed
// identifiability diagnostics to 3, numerical failures to 4.
enum class ErrorClass { Input = 2, Identification = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string condition, const std::string& what)
      : std::runtime_error(what), cls_(cls), condition_(std::move(condition)) {}

  ErrorClass error_class() const noexcept { return cls_; }
  // Short machine-readable name of the failed condition, e.g. "rank".
  const std::string& condition() const noexcept { return condition_; }

 private:
  ErrorClass cls_;
  std::string condition_;
};

class InputError : public Error {
 public:
  InputError(std::string condition, const std::string& what)
      : Error(ErrorClass::Input, std::move(condition), what) {}
};

class IdentificationError : public Error {
 public:
  IdentificationError(std::string condition, const std::string& what)
      : Error(ErrorClass::Identification, std::move(condition), what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string condition, const std::string& what)
      : Error(ErrorClass::Numerical, std::move(condition), what) {}
};

class BadParams : public InputError {
 public:
  explicit BadParams(const std::string& what) : InputError("bad-params", what) {}
};

class EmptyCell : public IdentificationError {
 public:
  explicit EmptyCell(const std::string& what) : IdentificationError("empty-cell", what) {}
};

class DegenerateCell : public IdentificationError {
 public:
  explicit DegenerateCell(const std::string& what)
      : IdentificationError("degenerate-cell", what) {}
};

class RankDeficient : public IdentificationError {
 public:
  RankDeficient(const std::string& what, double condition_estimate)
      : IdentificationError("rank", what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

class LinearDependence : public IdentificationError {
 public:
  LinearDependence(const std::string& what, double margin)
      : IdentificationError("linear-independence", what), margin_(margin) {}
  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

class ConstantRatio : public IdentificationError {
 public:
  explicit ConstantRatio(const std::string& what) : IdentificationError("constant-ratio", what) {}
};

class ConstantConditionalMean : public IdentificationError {
 public:
  explicit ConstantConditionalMean(const std::string& what)
      : IdentificationError("constant-conditional-mean", what) {}
};

class MonotonicityViolated : public IdentificationError {
 public:
  MonotonicityViolated(const std::string& what, double w, double magnitude)
      : IdentificationError("monotonicity", what), w_(w), magnitude_(magnitude) {}
  double w() const noexcept { return w_; }
  double magnitude() const noexcept { return magnitude_; }

 private:
  double w_;
  double magnitude_;
};

class ZeroStratumMass : public IdentificationError {
 public:
  explicit ZeroStratumMass(const std::string& what)
      : IdentificationError("zero-stratum-mass", what) {}
};

class JointNotIdentified : public IdentificationError {
 public:
  explicit JointNotIdentified(const std::string& what)
      : IdentificationError("joint-not-identified", what) {}
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, int iterations)
      : NumericalError("non-convergence", what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

class InsufficientChains : public InputError {
 public:
  explicit InsufficientChains(const std::string& what)
      : InputError("insufficient-chains", what) {}
};

class EstimatorFailure : public NumericalError {
 public:
  EstimatorFailure(const std::string& what, double failure_rate)
      : NumericalError("estimator-failure", what), failure_rate_(failure_rate) {}
  double failure_rate() const noexcept { return failure_rate_; }

 private:
  double failure_rate_;
};

}  // namespace pce
