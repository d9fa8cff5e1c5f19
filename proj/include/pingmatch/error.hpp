#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace pingmatch {

enum class ErrorCode {
  OutOfOrderTimestamp,
  DanglingReference,
  ParseError,
  InvariantViolation,
  SingleClassData,
  NonFiniteLoss,
  FoldTooSmall,
  SingleClassFold,
  VersionMismatch,
  FeatureOrderMismatch,
  SingleClass,
  ModelMissing,
  DuplicateRequest,
  UnknownPing,
  UnknownRequest,
  AlreadyResolved,
  NotDue,
  NoData,
  ConfigInvalid,
  ValidationError,
  Io,
};

std::string_view error_code_name(ErrorCode code);

// Every failure surfaced by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// An Error attributable to one named input field.
class FieldError : public Error {
 public:
  FieldError(ErrorCode code, std::string field, const std::string& message)
      : Error(code, "'" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace pingmatch
