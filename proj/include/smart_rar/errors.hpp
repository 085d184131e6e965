#pragma once

#include <stdexcept>
#include <string>

namespace smart_rar {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file cannot be parsed or violates the schema.
struct ConfigError : Error {
  using Error::Error;
};

// Normal-equations pivot fell below the relative tolerance.
struct SingularFitError : Error {
  using Error::Error;
};

// Estimator is undefined on the given data (e.g. no consistent completer).
struct EstimationError : Error {
  using Error::Error;
};

// A required randomization probability is zero or negative.
struct PositivityError : Error {
  using Error::Error;
};

// A completer's fitting-week model (or weight anchor) is missing.
struct ProvenanceError : Error {
  using Error::Error;
};

// Stage-2 data requested for a subject that has not reached stage 2.
struct StagedDataError : Error {
  using Error::Error;
};

struct InferenceError : Error {
  using Error::Error;
};

// Dataset violates a SubjectRecord invariant; estimators refuse it.
struct CorruptRecordError : Error {
  using Error::Error;
};

struct DegenerateBeliefError : Error {
  using Error::Error;
};

// More than 1% of Monte Carlo replications failed.
struct StudyAborted : Error {
  using Error::Error;
};

}  // namespace smart_rar
