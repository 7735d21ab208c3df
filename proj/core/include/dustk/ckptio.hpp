#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dustk/checkpoint.hpp"

namespace dustk {

// Paths of the tensor container and its JSON config sidecar. A path given
// without the ".safetensors" extension names the pair by stem:
// "out/base" -> "out/base.safetensors" + "out/base.config.json".
struct CheckpointPaths {
  std::filesystem::path tensors;
  std::filesystem::path config;

  static CheckpointPaths resolve(const std::filesystem::path& path);
};

// Serializes the container (header length, sorted JSON header, payload).
std::vector<std::uint8_t> encode_safetensors(const Checkpoint& ckpt);

// Parses a container. Config is left default; dtype is taken from the
// tensors (mixed dtypes throw in strict mode, widen otherwise).
Checkpoint decode_safetensors(const std::vector<std::uint8_t>& bytes,
                              bool strict = true);

// Loads container + sidecar. Strict mode also enforces the schema and
// finiteness. Non-strict mode tolerates a missing sidecar.
Checkpoint load_checkpoint(const std::filesystem::path& path, bool strict = true);

// Validates, then writes both files. Output bytes depend only on the input.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

}  // namespace dustk
