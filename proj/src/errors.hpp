#pragma once

#include <stdexcept>
#include <string>

namespace twophase {

// Error taxonomy shared by the core, the C API and the CLI exit codes.
enum class ErrorCode {
  io,             // file unreadable / unwritable
  schema,         // malformed table or config, reported with location
  invalid,        // argument violates a precondition
  degenerate,     // no weighted events, empty stratum, too few rows
  singular,       // collinear covariates / rank-deficient regressors
  not_converged,  // iteration budget exhausted
  diverged,       // monotone-likelihood runaway
  overflow,       // exp(linear predictor) not representable
  internal        // broken internal consistency check
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::io: return "io";
    case ErrorCode::schema: return "schema";
    case ErrorCode::invalid: return "invalid";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::singular: return "singular";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::overflow: return "overflow";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace twophase
