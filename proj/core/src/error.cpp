#include "xrot/error.hpp"

namespace xrot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::GraphCycle: return "GraphCycle";
    case ErrorCode::DegenerateQuaternion: return "DegenerateQuaternion";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NanLoss: return "NanLoss";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace xrot
