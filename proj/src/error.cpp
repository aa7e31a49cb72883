#include "forge/error.hpp"

namespace forge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::MissingMaterial: return "MissingMaterial";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::DegenerateHalfVector: return "DegenerateHalfVector";
    case ErrorKind::BelowHorizon: return "BelowHorizon";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::CountTooLarge: return "CountTooLarge";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptySampleSet: return "EmptySampleSet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewMaterials: return "TooFewMaterials";
    case ErrorKind::Underdetermined: return "Underdetermined";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace forge
