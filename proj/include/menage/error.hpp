#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace menage {

// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kParse,
  kDimension,
  kNonFinite,
  kRange,
  kIo,
  kMalformed,
  kLayoutMismatch,
  kAddressOverflow,
  kSolverCap,
  kInfeasible,
  kDangling,
  kFifoOverflow,
  kDeadlock,
  kRunaway,
  kState,
  kEmptyRun,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kDimension: return "dimension mismatch";
    case ErrorKind::kNonFinite: return "non-finite value";
    case ErrorKind::kRange: return "value out of range";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kMalformed: return "malformed input";
    case ErrorKind::kLayoutMismatch: return "layout mismatch";
    case ErrorKind::kAddressOverflow: return "address-width overflow";
    case ErrorKind::kSolverCap: return "solver cap exceeded";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kDangling: return "dangling address";
    case ErrorKind::kFifoOverflow: return "event FIFO overflow";
    case ErrorKind::kDeadlock: return "deadlock guard";
    case ErrorKind::kRunaway: return "runaway membrane voltage";
    case ErrorKind::kState: return "invalid state";
    case ErrorKind::kEmptyRun: return "empty run";
  }
  return "error";
}

// True for errors caused by the user's inputs rather than by the toolchain
// or the simulated hardware.
inline bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kDimension:
    case ErrorKind::kNonFinite:
    case ErrorKind::kRange:
    case ErrorKind::kIo:
    case ErrorKind::kMalformed:
    case ErrorKind::kLayoutMismatch:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + to_string(kind) + ": " + message),
        kind_(kind),
        module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

[[noreturn]] inline void fail(ErrorKind kind, const char* module,
                              const std::string& message) {
  throw Error(kind, module, message);
}

}  // namespace menage
