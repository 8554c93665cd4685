#include "hrtfgraph/error.hpp"

namespace hrtfgraph {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedMeta: return "MalformedMeta";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonUnitDirection: return "NonUnitDirection";
    case ErrorCode::DuplicateDirection: return "DuplicateDirection";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::ZeroEnergySignal: return "ZeroEnergySignal";
    case ErrorCode::ShiftTooLarge: return "ShiftTooLarge";
    case ErrorCode::BadFftSize: return "BadFftSize";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::DeltaAlreadyPresent: return "DeltaAlreadyPresent";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::MissingCycles: return "MissingCycles";
    case ErrorCode::NonIntegerGamma: return "NonIntegerGamma";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::MissingPeaks: return "MissingPeaks";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

}  // namespace hrtfgraph
