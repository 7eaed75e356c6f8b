#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xrot {

enum class ErrorCode {
  NonFiniteInput,
  NotARotation,
  OutOfRange,
  ShapeMismatch,
  NotScalar,
  GraphCycle,
  DegenerateQuaternion,
  IoFailure,
  EmptyClass,
  NanLoss,
  EmptySplit,
  VersionMismatch,
  CorruptFile,
  InvalidConfig,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (notably the CLI) can map it to an exit status and a stable token.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace xrot
