#pragma once

#include <stdexcept>
#include <string>

namespace fedpd {

/// Broad failure classes. Each maps to one CLI exit code.
enum class ErrorCategory { kConfig, kData, kRuntime };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

  /// 1 configuration, 2 data, 3 runtime/training.
  int exit_code() const noexcept {
    switch (category_) {
      case ErrorCategory::kConfig: return 1;
      case ErrorCategory::kData: return 2;
      case ErrorCategory::kRuntime: return 3;
    }
    return 3;
  }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::kConfig, what) {}
};

enum class DataErrorCode {
  kInvalid,
  kEmptySequence,
  kNonFinite,
  kBadLabel,
  kBatchTooSmall,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedPayload,
  kTrailingBytes,
  kWidthMismatch,
  kDuplicateSubject,
  kIo,
};

const char* to_string(DataErrorCode code) noexcept;

class DataError : public Error {
 public:
  DataError(DataErrorCode code, const std::string& what)
      : Error(ErrorCategory::kData, std::string(to_string(code)) + ": " + what),
        code_(code) {}

  DataErrorCode code() const noexcept { return code_; }

 private:
  DataErrorCode code_;
};

/// Array or matrix dimensions that do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorCategory::kData, "shape error: " + what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what)
      : Error(ErrorCategory::kRuntime, what) {}
};

/// Violation of the client/server exchange rules during aggregation.
class ProtocolError : public TrainingError {
 public:
  explicit ProtocolError(const std::string& what)
      : TrainingError("protocol error: " + what) {}
};

/// An API was called with state it cannot accept (e.g. an eval-mode cache).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::kRuntime, "contract error: " + what) {}
};

}  // namespace fedpd
