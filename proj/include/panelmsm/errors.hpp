#pragma once

#include <stdexcept>
#include <string>

namespace pmsm {

// Broad categories; values double as CLI exit codes and C API status codes.
enum class ErrorCode : int {
  config = 2,
  data = 3,
  numeric = 4,
  not_converged = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCode::config, what) {}
};

struct InvalidStateError : Error {
  explicit InvalidStateError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct SelfLoopError : Error {
  explicit SelfLoopError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct CycleError : Error {
  explicit CycleError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct UnreachableObservationError : Error {
  explicit UnreachableObservationError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct DuplicateTimeError : Error {
  explicit DuplicateTimeError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct SingleObservationError : Error {
  explicit SingleObservationError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct InvalidSpecError : Error {
  explicit InvalidSpecError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct ShapeMismatchError : Error {
  explicit ShapeMismatchError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct InfeasibleEstimateError : Error {
  explicit InfeasibleEstimateError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

struct ZeroDenominatorError : Error {
  explicit ZeroDenominatorError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

struct NonFiniteLoglikError : Error {
  explicit NonFiniteLoglikError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

struct SingularMStepError : Error {
  explicit SingularMStepError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

struct EmptyRiskSetError : Error {
  explicit EmptyRiskSetError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

}  // namespace pmsm
