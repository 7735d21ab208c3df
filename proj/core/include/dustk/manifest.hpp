#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace dustk {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
// Digest of a file's contents; throws FormatError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

// Provenance record written beside the outputs of a mutating command.
struct RunManifest {
  std::string command_line;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  // path -> sha256 for every input and output file that exists
  std::map<std::string, std::string> digests;
  std::string tool_version = kToolVersion;
  std::string timestamp;  // UTC, ISO-8601

  // Fills digests for every listed path and stamps the current time.
  void finalize();
  nlohmann::json to_json() const;
};

}  // namespace dustk
