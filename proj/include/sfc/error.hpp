#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sfc {

enum class Errc {
  DuplicateId,
  DanglingLink,
  DisconnectedGraph,
  NoSuchLink,
  ParseError,
  UnknownVnfReference,
  MissingServiceClass,
  EpisodeFinished,
  IncompleteRequest,
  ShapeMismatch,
  IoError,
  SchemaError,
  SeriesTooShort,
  DegenerateRange,
  AllTrialsPruned,
  MissingFamily,
  NoArrivals,
  ConfigError,
  InvariantViolation,
};

std::string_view errc_name(Errc code);

// All library failures surface as sfc::Error; code() names the failure kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace sfc
