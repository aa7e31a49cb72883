#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorKind {
  InvalidArgument,
  HeaderMismatch,
  TruncatedFile,
  ParseError,
  ValidationError,
  MissingMaterial,
  DuplicateName,
  DegenerateHalfVector,
  BelowHorizon,
  EmptyResult,
  CountTooLarge,
  EmptyDataset,
  ShapeMismatch,
  EmptySampleSet,
  DimensionMismatch,
  BadMagic,
  VersionMismatch,
  LengthMismatch,
  TooFewMaterials,
  Underdetermined,
  SingularSystem,
  TooSmall,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace forge
