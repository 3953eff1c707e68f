#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace efdgen {

// Error codes are grouped by the module that raises them.  The module prefix
// is part of what_code() so CLI output stays module-qualified.
enum class ErrorCode {
  // mask_geometry
  NoForeground,
  MultipleComponents,
  HasHoles,
  DegenerateContour,
  OutOfCanvas,
  // efd_codec
  NyquistViolation,
  NonUniformSampling,
  EmptyDataset,
  StatsMismatch,
  // dataset_pipeline
  MalformedManifest,
  InconsistentDimensions,
  SingleLineage,
  // ts_diffusion
  ShapeMismatch,
  NonFiniteLoss,
  InvalidConfig,
  BadCheckpoint,
  // metrics
  EmptyCurve,
  // shared
  InvalidArgument,
  Io,
};

constexpr std::string_view module_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoForeground:
    case ErrorCode::MultipleComponents:
    case ErrorCode::HasHoles:
    case ErrorCode::DegenerateContour:
    case ErrorCode::OutOfCanvas:
      return "mask_geometry";
    case ErrorCode::NyquistViolation:
    case ErrorCode::NonUniformSampling:
    case ErrorCode::StatsMismatch:
      return "efd_codec";
    case ErrorCode::MalformedManifest:
    case ErrorCode::InconsistentDimensions:
    case ErrorCode::SingleLineage:
      return "dataset_pipeline";
    case ErrorCode::ShapeMismatch:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::InvalidConfig:
    case ErrorCode::BadCheckpoint:
      return "ts_diffusion";
    case ErrorCode::EmptyCurve:
      return "morph_metrics";
    case ErrorCode::EmptyDataset:
      return "data";
    case ErrorCode::InvalidArgument:
    case ErrorCode::Io:
      return "core";
  }
  return "core";
}

constexpr std::string_view name_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoForeground: return "NoForeground";
    case ErrorCode::MultipleComponents: return "MultipleComponents";
    case ErrorCode::HasHoles: return "HasHoles";
    case ErrorCode::DegenerateContour: return "DegenerateContour";
    case ErrorCode::OutOfCanvas: return "OutOfCanvas";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::NonUniformSampling: return "NonUniformSampling";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::StatsMismatch: return "StatsMismatch";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorCode::SingleLineage: return "SingleLineage";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::EmptyCurve: return "EmptyCurve";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(module_of(code)) + "." +
                           std::string(name_of(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  std::string what_code() const {
    return std::string(module_of(code_)) + "." + std::string(name_of(code_));
  }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) throw Error(code, message);
}

}  // namespace efdgen
