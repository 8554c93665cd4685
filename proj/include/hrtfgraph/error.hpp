#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hrtfgraph {

enum class ErrorCode {
  MissingFile,
  MalformedMeta,
  ShapeMismatch,
  NonUnitDirection,
  DuplicateDirection,
  IoFailure,
  InvalidArgument,
  EmptySignal,
  ZeroEnergySignal,
  ShiftTooLarge,
  BadFftSize,
  DegenerateInput,
  LengthMismatch,
  SizeMismatch,
  DeltaAlreadyPresent,
  DisconnectedGraph,
  MissingCycles,
  NonIntegerGamma,
  SingularSystem,
  RankDeficient,
  MissingPeaks,
  EmptyBand,
  SolverFailure,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hrtfgraph
