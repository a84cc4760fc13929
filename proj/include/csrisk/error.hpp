#pragma once

#include <stdexcept>
#include <string>

namespace csrisk {

enum class ErrorCode {
  InvalidArgument = 1,
  DivisionAtJump,
  DenominatorHitZero,
  Io,
  Parse,
  InstanceTooLarge,
  NonConvergence,
  ZeroConditionalMass,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a product integral meets a zero denominator at a jump.
/// `time()` is the offending jump location.
class JumpError : public Error {
 public:
  JumpError(ErrorCode code, double time, const std::string& what)
      : Error(code, what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, what);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(what);
}

}  // namespace csrisk
