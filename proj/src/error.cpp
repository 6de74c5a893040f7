#include "fedpd/error.hpp"

namespace fedpd {

const char* to_string(DataErrorCode code) noexcept {
  switch (code) {
    case DataErrorCode::kInvalid: return "invalid data";
    case DataErrorCode::kEmptySequence: return "empty sequence";
    case DataErrorCode::kNonFinite: return "non-finite value";
    case DataErrorCode::kBadLabel: return "bad label";
    case DataErrorCode::kBatchTooSmall: return "batch too small";
    case DataErrorCode::kBadMagic: return "bad magic";
    case DataErrorCode::kUnsupportedVersion: return "unsupported version";
    case DataErrorCode::kTruncatedPayload: return "truncated payload";
    case DataErrorCode::kTrailingBytes: return "trailing bytes";
    case DataErrorCode::kWidthMismatch: return "width mismatch";
    case DataErrorCode::kDuplicateSubject: return "duplicate subject";
    case DataErrorCode::kIo: return "i/o error";
  }
  return "data error";
}

}  // namespace fedpd
