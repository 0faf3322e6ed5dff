#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace sfc {

// Reads a JSON document; IoError when unreadable, ParseError when malformed.
nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Fetches a required member, raising `code` with the key path on failure.
template <typename T>
T require(const nlohmann::json& j, const char* key);

std::uint64_t fnv1a(std::string_view text);

}  // namespace sfc

#include "sfc/error.hpp"

namespace sfc {

template <typename T>
T require(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw Error(Errc::ParseError, std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace sfc
