// errors.hpp -- error taxonomy shared across the library and the CLI.
#pragma once

#include <stdexcept>
#include <string>

namespace hlglm {

// Each class maps to a distinct nonzero process exit code.
enum class ErrorCode : int {
  ok = 0,

  // lattice construction and addressing
  degenerate_binning = 10,
  unknown_level = 11,
  missing_lattice_feature = 12,
  infeasible_lattice = 13,

  // decomposition structure
  invalid_truncation = 20,
  model_lattice_mismatch = 21,
  invalid_refinement = 22,

  // shape and value contracts
  dimension_error = 30,
  invalid_response = 31,

  // numerics and optimization
  numerical_error = 40,
  non_convergence = 41,
  diverged = 42,

  // data handling
  empty_data = 50,
  ingest_error = 51,

  // artifact i/o
  unsupported_version = 60,
  checksum_error = 61,

  // flow/scale diagnostics
  undefined_rho = 70,
  ill_defined_flow = 71,
  insufficient_concentration = 72,

  // configuration
  config_error = 80,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::degenerate_binning: return "degenerate_binning";
    case ErrorCode::unknown_level: return "unknown_level";
    case ErrorCode::missing_lattice_feature: return "missing_lattice_feature";
    case ErrorCode::infeasible_lattice: return "infeasible_lattice";
    case ErrorCode::invalid_truncation: return "invalid_truncation";
    case ErrorCode::model_lattice_mismatch: return "model_lattice_mismatch";
    case ErrorCode::invalid_refinement: return "invalid_refinement";
    case ErrorCode::dimension_error: return "dimension_error";
    case ErrorCode::invalid_response: return "invalid_response";
    case ErrorCode::numerical_error: return "numerical_error";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::empty_data: return "empty_data";
    case ErrorCode::ingest_error: return "ingest_error";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::checksum_error: return "checksum_error";
    case ErrorCode::undefined_rho: return "undefined_rho";
    case ErrorCode::ill_defined_flow: return "ill_defined_flow";
    case ErrorCode::insufficient_concentration: return "insufficient_concentration";
    case ErrorCode::config_error: return "config_error";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace hlglm
