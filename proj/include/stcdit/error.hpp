#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stcdit {

enum class ErrorCode {
  MissingInput,
  DimensionMismatch,
  UnsupportedFormat,
  DegenerateMotion,
  TooFewCorners,
  InsufficientMatches,
  DegenerateConfiguration,
  InvalidBreaks,
  ShapeMismatch,
  IndexOverlap,
  IndexOutOfRange,
  EmptyClipList,
  BadTemporalLength,
  SegMapMismatch,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stcdit
