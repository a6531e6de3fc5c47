#include "stcdit/error.hpp"

namespace stcdit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::TooFewCorners: return "TooFewCorners";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InvalidBreaks: return "InvalidBreaks";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOverlap: return "IndexOverlap";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyClipList: return "EmptyClipList";
    case ErrorCode::BadTemporalLength: return "BadTemporalLength";
    case ErrorCode::SegMapMismatch: return "SegMapMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace stcdit
