#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trajcur {

enum class ErrorCode {
  // parsing
  MalformedLine,
  NonOrthonormalRotation,
  MissingColumn,
  EmptyFile,
  BadHeader,
  TruncatedFile,
  MalformedCamera,
  MalformedPoint,
  NotJson,
  MissingField,
  EmptyLocations,
  UnknownFormat,
  NoOverlap,
  // parameters
  InvalidSettings,
  InvalidParams,
  // computation
  EmptyInput,
  EmptyTrajectory,
  MissingHeading,
  MissingGps,
  IndexOutOfRange,
  BadK,
  LengthMismatch,
  BadLoopIndex,
  // storage
  NotFound,
  StorageFailure,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NonOrthonormalRotation: return "NonOrthonormalRotation";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MalformedCamera: return "MalformedCamera";
    case ErrorCode::MalformedPoint: return "MalformedPoint";
    case ErrorCode::NotJson: return "NotJson";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::EmptyLocations: return "EmptyLocations";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::InvalidSettings: return "InvalidSettings";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::MissingHeading: return "MissingHeading";
    case ErrorCode::MissingGps: return "MissingGps";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadLoopIndex: return "BadLoopIndex";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// True for errors raised while turning file contents into a Trajectory.
constexpr bool is_parse_error(ErrorCode code) noexcept {
  return code <= ErrorCode::NoOverlap;
}

/// Single exception type for the library. `line()` is 1-based and set for
/// errors tied to a physical input line; `subject()` names the offending
/// column, field or record where one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message,
        std::optional<std::size_t> line = std::nullopt,
        std::string subject = {})
      : std::runtime_error(compose(code, message, line)),
        code_(code),
        line_(line),
        subject_(std::move(subject)) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] std::optional<std::size_t> line() const noexcept { return line_; }
  [[nodiscard]] const std::string& subject() const noexcept { return subject_; }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             std::optional<std::size_t> line) {
    std::string out{to_string(code)};
    if (line) out += " (line " + std::to_string(*line) + ")";
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string subject_;
};

}  // namespace trajcur
