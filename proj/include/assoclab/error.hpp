#pragma once

#include <stdexcept>
#include <string>

namespace assoclab {

enum class ErrorCode {
  ContextOverflow,
  RangeError,
  CapabilityError,
  InputError,
  InsufficientData,
  AggregationError,
  SearchInfeasible,
  InsufficientCompetitors,
  MissingArtifact,
  BackendError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ContextOverflow: return "context_overflow";
    case ErrorCode::RangeError: return "range_error";
    case ErrorCode::CapabilityError: return "capability_error";
    case ErrorCode::InputError: return "input_error";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::AggregationError: return "aggregation_error";
    case ErrorCode::SearchInfeasible: return "search_infeasible";
    case ErrorCode::InsufficientCompetitors: return "insufficient_competitors";
    case ErrorCode::MissingArtifact: return "missing_artifact";
    case ErrorCode::BackendError: return "backend_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace assoclab
