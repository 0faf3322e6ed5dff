#include "sfc/error.hpp"

namespace sfc {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::DanglingLink: return "DanglingLink";
    case Errc::DisconnectedGraph: return "DisconnectedGraph";
    case Errc::NoSuchLink: return "NoSuchLink";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownVnfReference: return "UnknownVnfReference";
    case Errc::MissingServiceClass: return "MissingServiceClass";
    case Errc::EpisodeFinished: return "EpisodeFinished";
    case Errc::IncompleteRequest: return "IncompleteRequest";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IoError: return "IoError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::DegenerateRange: return "DegenerateRange";
    case Errc::AllTrialsPruned: return "AllTrialsPruned";
    case Errc::MissingFamily: return "MissingFamily";
    case Errc::NoArrivals: return "NoArrivals";
    case Errc::ConfigError: return "ConfigError";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

}  // namespace sfc
