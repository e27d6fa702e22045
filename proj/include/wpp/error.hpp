#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wpp {

enum class Errc {
  DuplicateModeId,
  DuplicatePriority,
  DuplicateKnob,
  UnknownKnob,
  UnknownMode,
  ValueOutOfBounds,
  ValueKindMismatch,
  InvalidMode,
  UnknownProfile,
  RecipeFileMissing,
  CatalogInvalid,
  NoCalibrationRow,
  CalibrationInconsistent,
  InsufficientNodes,
  UnknownHierarchyNode,
  Unauthorized,
  UnknownScope,
  InvalidRequest,
  InvalidEvent,
  OverlappingEvent,
  JobNotFinished,
  UnknownJob,
  MalformedDirective,
  UnknownProfileName,
  StoreCorrupt,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DuplicateModeId:         return "DuplicateModeId";
    case Errc::DuplicatePriority:       return "DuplicatePriority";
    case Errc::DuplicateKnob:           return "DuplicateKnob";
    case Errc::UnknownKnob:             return "UnknownKnob";
    case Errc::UnknownMode:             return "UnknownMode";
    case Errc::ValueOutOfBounds:        return "ValueOutOfBounds";
    case Errc::ValueKindMismatch:       return "ValueKindMismatch";
    case Errc::InvalidMode:             return "InvalidMode";
    case Errc::UnknownProfile:          return "UnknownProfile";
    case Errc::RecipeFileMissing:       return "RecipeFileMissing";
    case Errc::CatalogInvalid:          return "CatalogInvalid";
    case Errc::NoCalibrationRow:        return "NoCalibrationRow";
    case Errc::CalibrationInconsistent: return "CalibrationInconsistent";
    case Errc::InsufficientNodes:       return "InsufficientNodes";
    case Errc::UnknownHierarchyNode:    return "UnknownHierarchyNode";
    case Errc::Unauthorized:            return "Unauthorized";
    case Errc::UnknownScope:            return "UnknownScope";
    case Errc::InvalidRequest:          return "InvalidRequest";
    case Errc::InvalidEvent:            return "InvalidEvent";
    case Errc::OverlappingEvent:        return "OverlappingEvent";
    case Errc::JobNotFinished:          return "JobNotFinished";
    case Errc::UnknownJob:              return "UnknownJob";
    case Errc::MalformedDirective:      return "MalformedDirective";
    case Errc::UnknownProfileName:      return "UnknownProfileName";
    case Errc::StoreCorrupt:            return "StoreCorrupt";
  }
  return "Unknown";
}

// Every failure in the library surfaces as an Error carrying a stable code;
// the HTTP layer and CLI map codes to status / exit codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace wpp
